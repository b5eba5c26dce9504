#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "patchforge/transformer.hpp"

namespace patchforge {

struct AdamOptions {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 1.0;  // global gradient norm; 0 disables clipping
};

class Adam {
 public:
  Adam(const std::vector<Parameter<float>>& params, AdamOptions options);
  // Returns the pre-clipping global gradient norm.
  double step(std::vector<Parameter<float>>& params);
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamOptions opt_;
  std::vector<std::vector<float>> m_, v_;
  std::size_t t_ = 0;
};

struct TrainOptions {
  AdamOptions adam;
  int epochs = 20;
  std::size_t batch_size = 16;
  // Share of examples held out for snapshot selection. With 0 the training
  // examples themselves are scored.
  double validation_fraction = 0.02;
  std::uint64_t seed = 1;
  std::optional<double> stop_loss;      // stop once the epoch training loss falls below
  std::optional<double> stop_accuracy;  // stop once validation accuracy reaches this
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_accuracy = 0;

  bool operator==(const EpochLog&) const = default;
};

struct TrainOutcome {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_accuracy = 0;
  bool diverged = false;
  std::size_t train_examples = 0;
  std::size_t validation_examples = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Seeded shuffle, then the first max(1, round(fraction * n)) indices are held
// out (none when fraction is 0 or n < 2).
Split split_dataset(std::size_t n, double validation_fraction, std::uint64_t seed);

// Greedy exact-match accuracy of `model` on `examples`.
double greedy_accuracy(const Transformer<float>& model, std::span<const Example> examples);

using EpochCallback = std::function<void(const EpochLog&)>;

// Leaves the best validation snapshot in `model`.
TrainOutcome train(Transformer<float>& model, const std::vector<Example>& data,
                   const TrainOptions& options, const EpochCallback& on_epoch = {});

}  // namespace patchforge
