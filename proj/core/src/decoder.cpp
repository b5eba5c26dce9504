#include "patchforge/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "patchforge/error.hpp"

namespace patchforge {

void BeamConfig::validate(const ModelConfig& model) const {
  if (width < 1) throw ConfigError("beam width must be at least 1");
  if (max_len < 1) throw ConfigError("beam max_len must be at least 1");
  if (max_len > model.max_positions)
    throw ConfigError("beam max_len " + std::to_string(max_len) + " exceeds max_positions " +
                      std::to_string(model.max_positions));
  if (!(length_penalty >= 0)) throw ConfigError("length_penalty must be non-negative");
}

double length_penalty(double alpha, std::size_t length) {
  if (alpha == 0) return 1.0;
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

namespace {

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.ids < b.ids;
}

template <class T>
struct Live {
  Hypothesis hyp;
  typename IncrementalDecoder<T>::State state;
  std::vector<T> next;  // log-probs for the next id
};

struct Candidate {
  std::size_t parent;
  int token;
  double log_prob;
  double score;
};

}  // namespace

template <class T>
BeamResult beam_search(const Transformer<T>& model, std::span<const int> source,
                       const BeamConfig& beam) {
  beam.validate(model.config());
  const IncrementalDecoder<T> dec(model, source);
  const auto width = static_cast<std::size_t>(beam.width);
  const int vocab = model.config().vocab_size;

  std::vector<Live<T>> live(1);
  live[0].state = dec.start();
  live[0].next = dec.step(live[0].state, kBosId);
  std::vector<Hypothesis> pool;

  std::vector<Candidate> cand;
  for (int step = 0; step < beam.max_len && !live.empty(); ++step) {
    const std::size_t out_len = static_cast<std::size_t>(step) + 1;
    const double lp = length_penalty(beam.length_penalty, out_len);
    cand.clear();
    for (std::size_t h = 0; h < live.size(); ++h) {
      for (int c = 0; c < vocab; ++c) {
        if (!is_continuation(c)) continue;
        const double lpb = live[h].hyp.log_prob + static_cast<double>(live[h].next[c]);
        cand.push_back({h, c, lpb, lpb / lp});
      }
    }
    auto before = [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return live[a.parent].hyp.ids < live[b.parent].hyp.ids;
      return a.token < b.token;
    };
    const std::size_t keep = std::min(width, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(),
                      before);

    const bool last = step + 1 == beam.max_len;
    std::vector<Live<T>> next_live;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = cand[i];
      const Live<T>& parent = live[c.parent];
      Hypothesis h;
      h.ids = parent.hyp.ids;
      h.log_prob = c.log_prob;
      h.score = c.score;
      if (c.token == kEosId) {
        h.finished = true;
        pool.push_back(std::move(h));
        continue;
      }
      h.ids.push_back(c.token);
      Live<T> nl{std::move(h), parent.state, {}};
      if (!last) nl.next = dec.step(nl.state, c.token);
      next_live.push_back(std::move(nl));
    }
    live = std::move(next_live);

    std::sort(pool.begin(), pool.end(), ranks_before);
    if (pool.size() >= width && !live.empty()) {
      // Log-probs only fall as a hypothesis grows, so without a length
      // penalty no live hypothesis can overtake the pool.
      const double worst = pool[width - 1].score;
      double best_live = -INFINITY;
      for (const auto& l : live) best_live = std::max(best_live, l.hyp.score);
      if (beam.length_penalty == 0 && worst >= best_live) break;
    }
  }

  BeamResult result;
  std::sort(pool.begin(), pool.end(), ranks_before);
  std::set<std::vector<int>> seen;
  for (auto& h : pool) {
    if (result.hypotheses.size() == width) break;
    if (seen.insert(h.ids).second) result.hypotheses.push_back(std::move(h));
  }
  if (result.hypotheses.empty() && !live.empty()) {
    result.truncated = true;
    auto best = std::min_element(live.begin(), live.end(), [](const Live<T>& a, const Live<T>& b) {
      return ranks_before(a.hyp, b.hyp);
    });
    result.hypotheses.push_back(best->hyp);
  }
  return result;
}

template <class T>
Hypothesis greedy_decode(const Transformer<T>& model, std::span<const int> source,
                         std::size_t max_len) {
  max_len = std::min(max_len, static_cast<std::size_t>(model.config().max_positions));
  const IncrementalDecoder<T> dec(model, source);
  auto state = dec.start();
  Hypothesis h;
  int token = kBosId;
  for (std::size_t step = 0; step < max_len; ++step) {
    const std::vector<T> logp = dec.step(state, token);
    int best = -1;
    for (int c = 0; c < static_cast<int>(logp.size()); ++c) {
      if (!is_continuation(c)) continue;
      if (best < 0 || logp[c] > logp[best]) best = c;
    }
    h.log_prob += static_cast<double>(logp[best]);
    if (best == kEosId) {
      h.finished = true;
      break;
    }
    h.ids.push_back(best);
    token = best;
  }
  h.score = h.log_prob;
  return h;
}

std::vector<int> encoder_input(const Codec& codec, const TokenSequence& tokens) {
  std::vector<int> ids = codec.encode(tokens);
  ids.push_back(kEosId);
  return ids;
}

PredictionSet predict_patches(const Transformer<float>& model, const Codec& codec,
                              const TokenSequence& source, const BeamConfig& beam) {
  const std::vector<int> input = encoder_input(codec, source);
  if (input.size() > static_cast<std::size_t>(model.config().max_positions))
    throw DataError("source of " + std::to_string(input.size()) +
                    " ids exceeds the model's max_positions");
  BeamResult found = beam_search(model, input, beam);
  PredictionSet out;
  out.truncated = found.truncated;
  for (auto& h : found.hypotheses) {
    auto tokens = codec.decode(h.ids);
    // A segmentation the codec would never produce duplicates the canonical
    // one for the same tokens, so it is dropped as well.
    if (!tokens || tokens->empty() || codec.encode(*tokens) != h.ids) {
      ++out.undecodable;
      continue;
    }
    out.predictions.push_back({std::move(*tokens), std::move(h.ids), h.score});
  }
  return out;
}

template BeamResult beam_search(const Transformer<float>&, std::span<const int>, const BeamConfig&);
template BeamResult beam_search(const Transformer<double>&, std::span<const int>,
                                const BeamConfig&);
template Hypothesis greedy_decode(const Transformer<float>&, std::span<const int>, std::size_t);
template Hypothesis greedy_decode(const Transformer<double>&, std::span<const int>, std::size_t);

}  // namespace patchforge
