#include "patchforge/trainer.hpp"

#include <cmath>
#include <numeric>

#include "patchforge/codec.hpp"
#include "patchforge/decoder.hpp"
#include "patchforge/error.hpp"

namespace patchforge {

Adam::Adam(const std::vector<Parameter<float>>& params, AdamOptions options) : opt_(options) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.size(), 0.0f);
    v_.emplace_back(p.value.size(), 0.0f);
  }
}

double Adam::step(std::vector<Parameter<float>>& params) {
  double sq = 0;
  for (const auto& p : params)
    for (float g : p.grad.storage()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  const float clip = (opt_.clip_norm > 0 && norm > opt_.clip_norm)
                         ? static_cast<float>(opt_.clip_norm / norm)
                         : 1.0f;
  ++t_;
  const auto b1 = static_cast<float>(opt_.beta1);
  const auto b2 = static_cast<float>(opt_.beta2);
  const auto c1 = static_cast<float>(1.0 - std::pow(opt_.beta1, static_cast<double>(t_)));
  const auto c2 = static_cast<float>(1.0 - std::pow(opt_.beta2, static_cast<double>(t_)));
  const auto lr = static_cast<float>(opt_.lr);
  const auto eps = static_cast<float>(opt_.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value.storage();
    const auto& g = params[i].grad.storage();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float gj = g[j] * clip;
      m[j] = b1 * m[j] + (1 - b1) * gj;
      v[j] = b2 * v[j] + (1 - b2) * gj * gj;
      const float mhat = m[j] / c1;
      const float vhat = v[j] / c2;
      w[j] -= lr * (mhat / (std::sqrt(vhat) + eps));
    }
  }
  return norm;
}

Split split_dataset(std::size_t n, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction >= 0 && validation_fraction < 1))
    throw ConfigError("validation fraction must be in [0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t held = 0;
  if (validation_fraction > 0 && n >= 2)
    held = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n))));
  Split s;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  return s;
}

double greedy_accuracy(const Transformer<float>& model, std::span<const Example> examples) {
  if (examples.empty()) return 0;
  std::size_t hits = 0;
  std::vector<int> src;
  for (const auto& e : examples) {
    src = e.source;
    src.push_back(kEosId);
    const Hypothesis h = greedy_decode(model, src, e.target.size() + 1);
    hits += h.finished && h.ids == e.target;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

namespace {

std::vector<Matrix<float>> snapshot(const Transformer<float>& model) {
  std::vector<Matrix<float>> out;
  for (const auto& p : model.parameters()) out.push_back(p.value);
  return out;
}

void restore(Transformer<float>& model, const std::vector<Matrix<float>>& snap) {
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = snap[i];
}

double batched_loss(const Transformer<float>& model, std::span<const Example> examples,
                    std::size_t batch_size) {
  double nll = 0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < examples.size(); i += batch_size) {
    const auto n = std::min(batch_size, examples.size() - i);
    const LossResult r = evaluate_loss(model, TrainingBatch::from(examples.subspan(i, n)));
    nll += r.total_nll;
    tokens += r.tokens;
  }
  return tokens ? nll / static_cast<double>(tokens) : 0.0;
}

}  // namespace

TrainOutcome train(Transformer<float>& model, const std::vector<Example>& data,
                   const TrainOptions& options, const EpochCallback& on_epoch) {
  if (data.empty()) throw DataError("training dataset is empty");
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (options.epochs < 1) throw ConfigError("epochs must be positive");
  const Split split = split_dataset(data.size(), options.validation_fraction, options.seed);
  std::vector<Example> train_set, val_set;
  for (auto i : split.train) train_set.push_back(data[i]);
  for (auto i : split.validation) val_set.push_back(data[i]);
  const std::vector<Example>& scored = val_set.empty() ? train_set : val_set;

  TrainOutcome out;
  out.train_examples = train_set.size();
  out.validation_examples = val_set.size();

  Adam adam(model.parameters(), options.adam);
  Rng order_rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  Rng dropout_rng(options.seed + 1);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<Matrix<float>> best = snapshot(model);
  double best_acc = -1, best_loss = INFINITY;
  std::vector<Example> batch_examples;

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    order_rng.shuffle(order);
    double nll = 0;
    std::size_t tokens = 0;
    EpochLog log;
    log.epoch = epoch;
    try {
      for (std::size_t i = 0; i < order.size(); i += options.batch_size) {
        batch_examples.clear();
        for (std::size_t j = i; j < std::min(order.size(), i + options.batch_size); ++j)
          batch_examples.push_back(train_set[order[j]]);
        const LossResult r =
            loss_and_gradients(model, TrainingBatch::from(batch_examples), &dropout_rng);
        nll += r.total_nll;
        tokens += r.tokens;
        adam.step(model.parameters());
      }
      log.train_loss = nll / static_cast<double>(tokens);
      log.val_loss = batched_loss(model, scored, options.batch_size);
      log.val_accuracy = greedy_accuracy(model, scored);
    } catch (const InvariantError&) {
      out.diverged = true;
      break;
    }
    if (!std::isfinite(log.train_loss) || !std::isfinite(log.val_loss)) {
      out.diverged = true;
      break;
    }
    out.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.val_accuracy > best_acc || (log.val_accuracy == best_acc && log.val_loss < best_loss)) {
      best_acc = log.val_accuracy;
      best_loss = log.val_loss;
      out.best_epoch = epoch;
      best = snapshot(model);
    }
    if (options.stop_loss && log.train_loss < *options.stop_loss) break;
    if (options.stop_accuracy && log.val_accuracy >= *options.stop_accuracy) break;
  }
  out.best_accuracy = std::max(best_acc, 0.0);
  restore(model, best);
  return out;
}

}  // namespace patchforge
