#include "patchforge/transformer.hpp"

#include <cmath>

#include "patchforge/codec.hpp"
#include "patchforge/error.hpp"

namespace patchforge {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (vocab_size <= kNumSpecial) fail("vocab_size must exceed the reserved ids");
  if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || d_ff <= 0 || max_positions <= 1)
    fail("dimensions must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

TrainingBatch TrainingBatch::from(std::span<const Example> examples) {
  TrainingBatch b;
  b.size = examples.size();
  for (const auto& e : examples) {
    b.source_len = std::max(b.source_len, e.source.size() + 1);
    b.target_len = std::max(b.target_len, e.target.size() + 1);
  }
  b.source.assign(b.size * b.source_len, kPadId);
  b.source_mask.assign(b.size * b.source_len, 0);
  b.target_in.assign(b.size * b.target_len, kPadId);
  b.target_out.assign(b.size * b.target_len, kPadId);
  b.target_mask.assign(b.size * b.target_len, 0);
  for (std::size_t i = 0; i < b.size; ++i) {
    const auto& e = examples[i];
    const std::size_t s0 = i * b.source_len;
    for (std::size_t j = 0; j < e.source.size(); ++j) b.source[s0 + j] = e.source[j];
    b.source[s0 + e.source.size()] = kEosId;
    for (std::size_t j = 0; j <= e.source.size(); ++j) b.source_mask[s0 + j] = 1;
    const std::size_t t0 = i * b.target_len;
    b.target_in[t0] = kBosId;
    for (std::size_t j = 0; j < e.target.size(); ++j) {
      b.target_in[t0 + j + 1] = e.target[j];
      b.target_out[t0 + j] = e.target[j];
    }
    b.target_out[t0 + e.target.size()] = kEosId;
    for (std::size_t j = 0; j <= e.target.size(); ++j) b.target_mask[t0 + j] = 1;
  }
  return b;
}

std::size_t TrainingBatch::source_length(std::size_t b) const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < source_len; ++j) n += source_mask[b * source_len + j];
  return n;
}

std::size_t TrainingBatch::target_length(std::size_t b) const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < target_len; ++j) n += target_mask[b * target_len + j];
  return n;
}

template <class T>
Transformer<T>::Transformer(ModelConfig config) : config_(config) {
  config_.validate();
  const auto v = static_cast<std::size_t>(config_.vocab_size);
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto ff = static_cast<std::size_t>(config_.d_ff);
  layout_.src_embed = add("src_embed", v, d);
  layout_.tgt_embed = add("tgt_embed", v, d);
  auto layer = [&](const std::string& prefix, bool decoder) {
    LayerSlots s{};
    s.ln1_g = add(prefix + ".ln1.gain", 1, d);
    s.ln1_b = add(prefix + ".ln1.bias", 1, d);
    s.self_attn = add_attention(prefix + ".self_attn");
    if (decoder) {
      s.ln3_g = add(prefix + ".ln_cross.gain", 1, d);
      s.ln3_b = add(prefix + ".ln_cross.bias", 1, d);
      s.cross_attn = add_attention(prefix + ".cross_attn");
    }
    s.ln2_g = add(prefix + ".ln2.gain", 1, d);
    s.ln2_b = add(prefix + ".ln2.bias", 1, d);
    s.ff_w1 = add(prefix + ".ff.w1", d, ff);
    s.ff_b1 = add(prefix + ".ff.b1", 1, ff);
    s.ff_w2 = add(prefix + ".ff.w2", ff, d);
    s.ff_b2 = add(prefix + ".ff.b2", 1, d);
    return s;
  };
  for (int l = 0; l < config_.n_layers; ++l)
    layout_.encoder.push_back(layer("encoder." + std::to_string(l), false));
  layout_.enc_ln_g = add("encoder.ln.gain", 1, d);
  layout_.enc_ln_b = add("encoder.ln.bias", 1, d);
  for (int l = 0; l < config_.n_layers; ++l)
    layout_.decoder.push_back(layer("decoder." + std::to_string(l), true));
  layout_.dec_ln_g = add("decoder.ln.gain", 1, d);
  layout_.dec_ln_b = add("decoder.ln.bias", 1, d);
  layout_.out_w = add("output.weight", d, v);
  layout_.out_b = add("output.bias", 1, v);
  positions_ = sinusoidal_positions<T>(static_cast<std::size_t>(config_.max_positions), d);
  for (auto& prm : params_)
    if (prm.name.ends_with(".gain")) prm.value.fill(T(1));
}

template <class T>
std::size_t Transformer<T>::add(const std::string& name, std::size_t rows, std::size_t cols) {
  by_name_.emplace(name, params_.size());
  params_.push_back(Parameter<T>{name, Matrix<T>(rows, cols), Matrix<T>(rows, cols)});
  return params_.size() - 1;
}

template <class T>
typename Transformer<T>::AttentionSlots Transformer<T>::add_attention(const std::string& prefix) {
  const auto d = static_cast<std::size_t>(config_.d_model);
  AttentionSlots a{};
  a.wq = add(prefix + ".wq", d, d);
  a.bq = add(prefix + ".bq", 1, d);
  a.wk = add(prefix + ".wk", d, d);
  a.bk = add(prefix + ".bk", 1, d);
  a.wv = add(prefix + ".wv", d, d);
  a.bv = add(prefix + ".bv", 1, d);
  a.wo = add(prefix + ".wo", d, d);
  a.bo = add(prefix + ".bo", 1, d);
  return a;
}

template <class T>
Parameter<T>& Transformer<T>::parameter(std::string_view name) {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) throw DataError("no parameter named '" + std::string(name) + "'");
  return params_[it->second];
}

template <class T>
const Parameter<T>& Transformer<T>::parameter(std::string_view name) const {
  return const_cast<Transformer*>(this)->parameter(name);
}

template <class T>
void Transformer<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& prm : params_) {
    Matrix<T>& m = prm.value;
    if (prm.name.ends_with(".gain")) {
      m.fill(T(1));
    } else if (m.rows() == 1) {
      m.fill(T(0));
    } else if (prm.name.ends_with("_embed")) {
      const double limit = std::sqrt(3.0 / static_cast<double>(m.cols()));
      for (auto& x : m.storage()) x = static_cast<T>(rng.uniform(-limit, limit));
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
      for (auto& x : m.storage()) x = static_cast<T>(rng.uniform(-limit, limit));
    }
  }
}

template <class T>
void Transformer<T>::zero_grad() {
  for (auto& prm : params_) prm.grad.fill(T(0));
}

template <class T>
void Transformer<T>::check_ids(std::span<const int> ids, const char* what) const {
  if (ids.size() > static_cast<std::size_t>(config_.max_positions))
    throw DataError(std::string(what) + " length " + std::to_string(ids.size()) +
                    " exceeds max_positions " + std::to_string(config_.max_positions));
  for (int id : ids)
    if (id < 0 || id >= config_.vocab_size)
      throw DataError(std::string(what) + " id " + std::to_string(id) + " out of range");
}

namespace {

template <class T>
void require_finite(const Graph<T>& g, typename Graph<T>::Var v, const std::string& where) {
  if (!kernels::all_finite(std::span<const T>(g.value(v).storage())))
    throw InvariantError("non-finite activation in " + where);
}

template <class T, class Slots, class P>
typename Graph<T>::Var feed_forward(Graph<T>& g, typename Graph<T>::Var x, const Slots& s, P&& p,
                                    double rate, Rng* rng) {
  auto h = g.layer_norm(x, p(s.ln2_g), p(s.ln2_b));
  auto f = g.linear(g.relu(g.linear(h, p(s.ff_w1), p(s.ff_b1))), p(s.ff_w2), p(s.ff_b2));
  if (rng) f = g.dropout(f, rate, *rng);
  return g.add(x, f);
}

}  // namespace

template <class T>
typename Graph<T>::Var Transformer<T>::encode(Graph<T>& g, std::span<const int> source,
                                              std::size_t source_len, Rng* rng) const {
  check_ids(source, "source");
  const auto heads = static_cast<std::size_t>(config_.n_heads);
  const T scale = std::sqrt(static_cast<T>(config_.d_model));
  auto pp = [this](std::size_t slot) -> Parameter<T>& { return p(slot); };
  auto x = g.embed(p(layout_.src_embed), source, scale, positions_);
  for (std::size_t l = 0; l < layout_.encoder.size(); ++l) {
    const LayerSlots& s = layout_.encoder[l];
    const AttentionSlots& a = s.self_attn;
    auto h = g.layer_norm(x, p(s.ln1_g), p(s.ln1_b));
    auto q = g.linear(h, p(a.wq), p(a.bq));
    auto k = g.linear(h, p(a.wk), p(a.bk));
    auto v = g.linear(h, p(a.wv), p(a.bv));
    auto o = g.linear(g.attention(q, k, v, heads, false, source_len), p(a.wo), p(a.bo));
    if (rng) o = g.dropout(o, config_.dropout, *rng);
    x = g.add(x, o);
    x = feed_forward<T>(g, x, s, pp, config_.dropout, rng);
    require_finite(g, x, "encoder layer " + std::to_string(l));
  }
  return g.layer_norm(x, p(layout_.enc_ln_g), p(layout_.enc_ln_b));
}

template <class T>
typename Graph<T>::Var Transformer<T>::decode(Graph<T>& g, typename Graph<T>::Var memory,
                                              std::size_t source_len,
                                              std::span<const int> target_in, Rng* rng) const {
  check_ids(target_in, "target");
  const auto heads = static_cast<std::size_t>(config_.n_heads);
  const T scale = std::sqrt(static_cast<T>(config_.d_model));
  auto pp = [this](std::size_t slot) -> Parameter<T>& { return p(slot); };
  auto y = g.embed(p(layout_.tgt_embed), target_in, scale, positions_);
  for (std::size_t l = 0; l < layout_.decoder.size(); ++l) {
    const LayerSlots& s = layout_.decoder[l];
    {
      const AttentionSlots& a = s.self_attn;
      auto h = g.layer_norm(y, p(s.ln1_g), p(s.ln1_b));
      auto q = g.linear(h, p(a.wq), p(a.bq));
      auto k = g.linear(h, p(a.wk), p(a.bk));
      auto v = g.linear(h, p(a.wv), p(a.bv));
      auto o = g.linear(g.attention(q, k, v, heads, true, target_in.size()), p(a.wo), p(a.bo));
      if (rng) o = g.dropout(o, config_.dropout, *rng);
      y = g.add(y, o);
    }
    {
      const AttentionSlots& a = s.cross_attn;
      auto h = g.layer_norm(y, p(s.ln3_g), p(s.ln3_b));
      auto q = g.linear(h, p(a.wq), p(a.bq));
      auto k = g.linear(memory, p(a.wk), p(a.bk));
      auto v = g.linear(memory, p(a.wv), p(a.bv));
      auto o = g.linear(g.attention(q, k, v, heads, false, source_len), p(a.wo), p(a.bo));
      if (rng) o = g.dropout(o, config_.dropout, *rng);
      y = g.add(y, o);
    }
    y = feed_forward<T>(g, y, s, pp, config_.dropout, rng);
    require_finite(g, y, "decoder layer " + std::to_string(l));
  }
  auto z = g.layer_norm(y, p(layout_.dec_ln_g), p(layout_.dec_ln_b));
  auto logits = g.linear(z, p(layout_.out_w), p(layout_.out_b));
  require_finite(g, logits, "output projection");
  return logits;
}

template <class T>
Matrix<T> forward_log_probs(const Transformer<T>& model, std::span<const int> source,
                            std::span<const int> target_prefix) {
  Graph<T> g(false);
  auto mem = model.encode(g, source, source.size(), nullptr);
  auto logits = model.decode(g, mem, source.size(), target_prefix, nullptr);
  const Matrix<T>& lv = g.value(logits);
  Matrix<T> out(lv.rows(), lv.cols());
  for (std::size_t i = 0; i < lv.rows(); ++i)
    kernels::log_softmax_row(lv.row(i).data(), lv.cols(), out.row(i).data());
  return out;
}

template <class T>
Matrix<T> forward(const Transformer<T>& model, std::span<const int> source,
                  std::span<const int> target_prefix) {
  Graph<T> g(false);
  auto mem = model.encode(g, source, source.size(), nullptr);
  auto logits = model.decode(g, mem, source.size(), target_prefix, nullptr);
  const Matrix<T>& lv = g.value(logits);
  Matrix<T> out(lv.rows(), lv.cols());
  for (std::size_t i = 0; i < lv.rows(); ++i)
    kernels::softmax_row(lv.row(i).data(), lv.cols(), out.row(i).data());
  return out;
}

namespace {

template <class T>
LossResult run_batch(Transformer<T>& model, const TrainingBatch& batch, bool record, Rng* rng) {
  LossResult result;
  for (std::size_t b = 0; b < batch.size; ++b) result.tokens += batch.target_length(b);
  if (result.tokens == 0) throw DataError("batch has no target tokens");
  const T seed = T(1) / static_cast<T>(result.tokens);
  std::vector<T> weights(batch.target_len);
  for (std::size_t b = 0; b < batch.size; ++b) {
    std::span<const int> src(batch.source.data() + b * batch.source_len, batch.source_len);
    std::span<const int> tin(batch.target_in.data() + b * batch.target_len, batch.target_len);
    std::span<const int> tout(batch.target_out.data() + b * batch.target_len, batch.target_len);
    for (std::size_t j = 0; j < batch.target_len; ++j)
      weights[j] = batch.target_mask[b * batch.target_len + j] ? T(1) : T(0);
    Graph<T> g(record);
    auto mem = model.encode(g, src, batch.source_length(b), rng);
    auto logits = model.decode(g, mem, batch.source_length(b), tin, rng);
    auto ce = g.cross_entropy(logits, tout, weights);
    const double nll = static_cast<double>(g.value(ce)(0, 0));
    if (!std::isfinite(nll)) throw InvariantError("non-finite loss");
    result.per_example_nll.push_back(nll);
    result.total_nll += nll;
    if (record) g.backward(ce, seed);
  }
  result.loss = result.total_nll / static_cast<double>(result.tokens);
  return result;
}

}  // namespace

template <class T>
LossResult loss_and_gradients(Transformer<T>& model, const TrainingBatch& batch, Rng* dropout) {
  model.zero_grad();
  Rng* rng = (dropout && model.config().dropout > 0.0) ? dropout : nullptr;
  return run_batch(model, batch, true, rng);
}

template <class T>
LossResult evaluate_loss(const Transformer<T>& model, const TrainingBatch& batch) {
  // A tape that does not record never writes to the parameters.
  return run_batch(const_cast<Transformer<T>&>(model), batch, false, nullptr);
}

template <class T>
IncrementalDecoder<T>::IncrementalDecoder(const Transformer<T>& model, std::span<const int> source)
    : model_(model), source_len_(source.size()) {
  Graph<T> g(false);
  auto mem = model.encode(g, source, source.size(), nullptr);
  const Matrix<T>& m = g.value(mem);
  const auto& layout = model.layout();
  const auto& params = model.parameters();
  for (const auto& s : layout.decoder) {
    const auto& a = s.cross_attn;
    Matrix<T> k(m.rows(), m.cols()), v(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      kernels::linear_row(m.row(i).data(), params[a.wk].value, params[a.bk].value.data(),
                          k.row(i).data());
      kernels::linear_row(m.row(i).data(), params[a.wv].value, params[a.bv].value.data(),
                          v.row(i).data());
    }
    cross_keys_.push_back(std::move(k));
    cross_values_.push_back(std::move(v));
  }
}

template <class T>
typename IncrementalDecoder<T>::State IncrementalDecoder<T>::start() const {
  State s;
  s.keys.resize(model_.layout().decoder.size());
  s.values.resize(model_.layout().decoder.size());
  return s;
}

template <class T>
std::vector<T> IncrementalDecoder<T>::step(State& state, int token) const {
  const ModelConfig& cfg = model_.config();
  if (token < 0 || token >= cfg.vocab_size)
    throw DataError("target id " + std::to_string(token) + " out of range");
  if (state.length >= static_cast<std::size_t>(cfg.max_positions))
    throw DataError("decoding past max_positions");
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto heads = static_cast<std::size_t>(cfg.n_heads);
  const auto& params = model_.parameters();
  const auto& layout = model_.layout();
  auto P = [&](std::size_t slot) -> const Matrix<T>& { return params[slot].value; };

  std::vector<T> x(d), h(d), q(d), k(d), v(d), a(d), o(d), ff(static_cast<std::size_t>(cfg.d_ff)),
      ff2(ff.size()), scratch;
  const std::size_t t = state.length;
  kernels::embed_row(P(layout.tgt_embed), token, std::sqrt(static_cast<T>(cfg.d_model)),
                     model_.positions().row(t).data(), x.data());

  for (std::size_t l = 0; l < layout.decoder.size(); ++l) {
    const auto& s = layout.decoder[l];
    {
      const auto& at = s.self_attn;
      kernels::layer_norm_row(x.data(), P(s.ln1_g).data(), P(s.ln1_b).data(), d, h.data());
      kernels::linear_row(h.data(), P(at.wq), P(at.bq).data(), q.data());
      kernels::linear_row(h.data(), P(at.wk), P(at.bk).data(), k.data());
      kernels::linear_row(h.data(), P(at.wv), P(at.bv).data(), v.data());
      state.keys[l].insert(state.keys[l].end(), k.begin(), k.end());
      state.values[l].insert(state.values[l].end(), v.begin(), v.end());
      kernels::attention_row(q.data(), state.keys[l].data(), state.values[l].data(), t + 1, d,
                             heads, a.data(), static_cast<T*>(nullptr), scratch);
      kernels::linear_row(a.data(), P(at.wo), P(at.bo).data(), o.data());
      kernels::add_row(x.data(), o.data(), d, x.data());
    }
    {
      const auto& at = s.cross_attn;
      kernels::layer_norm_row(x.data(), P(s.ln3_g).data(), P(s.ln3_b).data(), d, h.data());
      kernels::linear_row(h.data(), P(at.wq), P(at.bq).data(), q.data());
      kernels::attention_row(q.data(), cross_keys_[l].data(), cross_values_[l].data(),
                             source_len_, d, heads, a.data(), static_cast<T*>(nullptr), scratch);
      kernels::linear_row(a.data(), P(at.wo), P(at.bo).data(), o.data());
      kernels::add_row(x.data(), o.data(), d, x.data());
    }
    kernels::layer_norm_row(x.data(), P(s.ln2_g).data(), P(s.ln2_b).data(), d, h.data());
    kernels::linear_row(h.data(), P(s.ff_w1), P(s.ff_b1).data(), ff.data());
    kernels::relu_row(ff.data(), ff.size(), ff2.data());
    kernels::linear_row(ff2.data(), P(s.ff_w2), P(s.ff_b2).data(), o.data());
    kernels::add_row(x.data(), o.data(), d, x.data());
  }
  kernels::layer_norm_row(x.data(), P(layout.dec_ln_g).data(), P(layout.dec_ln_b).data(), d,
                          h.data());
  const auto vocab = static_cast<std::size_t>(cfg.vocab_size);
  std::vector<T> logits(vocab), logp(vocab);
  kernels::linear_row(h.data(), P(layout.out_w), P(layout.out_b).data(), logits.data());
  kernels::log_softmax_row(logits.data(), vocab, logp.data());
  ++state.length;
  return logp;
}

template class Transformer<float>;
template class Transformer<double>;
template class IncrementalDecoder<float>;
template class IncrementalDecoder<double>;
template Matrix<float> forward(const Transformer<float>&, std::span<const int>, std::span<const int>);
template Matrix<double> forward(const Transformer<double>&, std::span<const int>, std::span<const int>);
template Matrix<float> forward_log_probs(const Transformer<float>&, std::span<const int>,
                                         std::span<const int>);
template Matrix<double> forward_log_probs(const Transformer<double>&, std::span<const int>,
                                          std::span<const int>);
template LossResult loss_and_gradients(Transformer<float>&, const TrainingBatch&, Rng*);
template LossResult loss_and_gradients(Transformer<double>&, const TrainingBatch&, Rng*);
template LossResult evaluate_loss(const Transformer<float>&, const TrainingBatch&);
template LossResult evaluate_loss(const Transformer<double>&, const TrainingBatch&);

}  // namespace patchforge
