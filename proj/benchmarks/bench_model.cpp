#include <benchmark/benchmark.h>

#include "patchforge/decoder.hpp"
#include "patchforge/transformer.hpp"

namespace pf = patchforge;

namespace {

pf::Transformer<float> model(int d_model) {
  pf::ModelConfig c;
  c.vocab_size = 1000;
  c.d_model = d_model;
  c.n_heads = 4;
  c.n_layers = 2;
  c.d_ff = 4 * d_model;
  c.max_positions = 128;
  pf::Transformer<float> m(c);
  m.initialize(7);
  return m;
}

std::vector<pf::Example> examples(std::size_t n, std::size_t len) {
  pf::Rng rng(2);
  std::vector<pf::Example> out(n);
  for (auto& e : out) {
    for (std::size_t i = 0; i < len; ++i) {
      e.source.push_back(pf::kNumSpecial + static_cast<int>(rng.below(996)));
      e.target.push_back(pf::kNumSpecial + static_cast<int>(rng.below(996)));
    }
  }
  return out;
}

void BM_LossAndGradients(benchmark::State& state) {
  auto m = model(static_cast<int>(state.range(0)));
  const auto batch = pf::TrainingBatch::from(examples(16, 50));
  for (auto _ : state) benchmark::DoNotOptimize(pf::loss_and_gradients(m, batch));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 16));
}
BENCHMARK(BM_LossAndGradients)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const auto m = model(64);
  const auto ex = examples(1, 50)[0];
  std::vector<int> prefix = {pf::kBosId};
  prefix.insert(prefix.end(), ex.target.begin(), ex.target.end());
  for (auto _ : state) benchmark::DoNotOptimize(pf::forward_log_probs(m, ex.source, prefix));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMicrosecond);

void BM_BeamSearch(benchmark::State& state) {
  const auto m = model(64);
  auto src = examples(1, 50)[0].source;
  src.push_back(pf::kEosId);
  const pf::BeamConfig beam{static_cast<int>(state.range(0)), 50, 0};
  for (auto _ : state) benchmark::DoNotOptimize(pf::beam_search(m, src, beam));
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
