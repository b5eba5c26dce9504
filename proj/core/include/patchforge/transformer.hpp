#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "patchforge/graph.hpp"
#include "patchforge/tensor.hpp"

namespace patchforge {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 256;
  int max_positions = 256;
  double dropout = 0.0;

  // Throws ConfigError on inconsistent dimensions.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// One (source, target) example as raw codec ids, without specials.
struct Example {
  std::vector<int> source;
  std::vector<int> target;
};

// Padded batch. Sources get EOS appended; target_in is BOS + y and
// target_out is y + EOS. A mask byte is 1 exactly on non-pad positions.
struct TrainingBatch {
  std::size_t size = 0;
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  std::vector<int> source;
  std::vector<int> target_in;
  std::vector<int> target_out;
  std::vector<unsigned char> source_mask;
  std::vector<unsigned char> target_mask;

  static TrainingBatch from(std::span<const Example> examples);
  std::size_t source_length(std::size_t b) const;
  std::size_t target_length(std::size_t b) const;
};

// Pre-norm transformer encoder-decoder with sinusoidal positions and
// separate source, target and output embeddings.
template <class T>
class Transformer {
 public:
  explicit Transformer(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }

  std::vector<Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }
  Parameter<T>& parameter(std::string_view name);
  const Parameter<T>& parameter(std::string_view name) const;

  // Xavier-uniform weights, unit gains and zero biases.
  void initialize(std::uint64_t seed);
  void zero_grad();

  // Encoder output for one (unpadded-or-padded) source of `source_len` real ids.
  typename Graph<T>::Var encode(Graph<T>& g, std::span<const int> source, std::size_t source_len,
                                Rng* dropout) const;
  // Target logits [prefix x vocab] given the encoder memory.
  typename Graph<T>::Var decode(Graph<T>& g, typename Graph<T>::Var memory, std::size_t source_len,
                                std::span<const int> target_in, Rng* dropout) const;

  const Matrix<T>& positions() const noexcept { return positions_; }

  struct AttentionSlots {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct LayerSlots {
    std::size_t ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
    AttentionSlots self_attn, cross_attn;
    std::size_t ff_w1, ff_b1, ff_w2, ff_b2;
  };
  struct Layout {
    std::size_t src_embed, tgt_embed;
    std::vector<LayerSlots> encoder, decoder;
    std::size_t enc_ln_g, enc_ln_b, dec_ln_g, dec_ln_b;
    std::size_t out_w, out_b;
  };
  const Layout& layout() const noexcept { return layout_; }

 private:
  std::size_t add(const std::string& name, std::size_t rows, std::size_t cols);
  AttentionSlots add_attention(const std::string& prefix);
  Parameter<T>& p(std::size_t slot) const { return const_cast<Parameter<T>&>(params_[slot]); }
  void check_ids(std::span<const int> ids, const char* what) const;

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
  Layout layout_{};
  Matrix<T> positions_;
};

// Next-token distributions [target_prefix.size() x vocab]. The prefix is the
// decoder input (BOS first). Throws DataError on out-of-range ids and
// InvariantError naming the stage that produced a non-finite activation.
template <class T>
Matrix<T> forward(const Transformer<T>& model, std::span<const int> source,
                  std::span<const int> target_prefix);

template <class T>
Matrix<T> forward_log_probs(const Transformer<T>& model, std::span<const int> source,
                            std::span<const int> target_prefix);

struct LossResult {
  double loss = 0.0;      // mean negative log-likelihood per target token
  double total_nll = 0.0;
  std::size_t tokens = 0;
  std::vector<double> per_example_nll;
};

// Zeroes gradients, then fills them with d(loss)/d(param). Dropout is applied
// only when `dropout` is non-null and the configured rate is positive.
template <class T>
LossResult loss_and_gradients(Transformer<T>& model, const TrainingBatch& batch,
                              Rng* dropout = nullptr);

// Loss only, no gradients.
template <class T>
LossResult evaluate_loss(const Transformer<T>& model, const TrainingBatch& batch);

// Cached single-step decoding for inference. Step outputs are bit-identical
// to the corresponding rows of forward_log_probs.
template <class T>
class IncrementalDecoder {
 public:
  IncrementalDecoder(const Transformer<T>& model, std::span<const int> source);

  struct State {
    std::vector<std::vector<T>> keys;    // per decoder layer, rows of d_model
    std::vector<std::vector<T>> values;
    std::size_t length = 0;
  };

  State start() const;

  // Feeds `token` at position state.length; returns log-probs of the next id.
  std::vector<T> step(State& state, int token) const;

  const Transformer<T>& model() const noexcept { return model_; }

 private:
  const Transformer<T>& model_;
  std::size_t source_len_;
  std::vector<Matrix<T>> cross_keys_;
  std::vector<Matrix<T>> cross_values_;
};

}  // namespace patchforge
