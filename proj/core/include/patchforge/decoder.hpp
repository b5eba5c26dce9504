#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "patchforge/codec.hpp"
#include "patchforge/lexer.hpp"
#include "patchforge/transformer.hpp"

namespace patchforge {

struct BeamConfig {
  int width = 50;
  int max_len = 128;          // output steps, EOS included
  double length_penalty = 0;  // GNMT alpha; 0 scores by the raw log-prob sum

  // Throws ConfigError; max_len must fit the model's position table.
  void validate(const ModelConfig& model) const;
};

struct Hypothesis {
  std::vector<int> ids;  // without BOS and EOS
  double log_prob = 0;
  double score = 0;
  bool finished = false;

  bool operator==(const Hypothesis&) const = default;
};

struct BeamResult {
  std::vector<Hypothesis> hypotheses;  // score descending, ties by ids
  bool truncated = false;              // nothing finished; holds the best live one
};

// Continuations never include PAD or BOS.
inline bool is_continuation(int id) { return id != kPadId && id != kBosId; }

double length_penalty(double alpha, std::size_t length);

// `source` is the full encoder input, EOS included.
template <class T>
BeamResult beam_search(const Transformer<T>& model, std::span<const int> source,
                       const BeamConfig& beam);

// Argmax at every step, ties to the lowest id.
template <class T>
Hypothesis greedy_decode(const Transformer<T>& model, std::span<const int> source,
                         std::size_t max_len);

// Codec ids plus EOS, as the encoder sees them.
std::vector<int> encoder_input(const Codec& codec, const TokenSequence& tokens);

struct Prediction {
  TokenSequence tokens;
  std::vector<int> ids;
  double score = 0;
};

struct PredictionSet {
  std::vector<Prediction> predictions;
  std::size_t undecodable = 0;  // ill-formed, empty or non-canonical id sequences
  bool truncated = false;
};

PredictionSet predict_patches(const Transformer<float>& model, const Codec& codec,
                              const TokenSequence& source, const BeamConfig& beam);

}  // namespace patchforge
