#include <benchmark/benchmark.h>

#include "patchforge/bpe.hpp"
#include "patchforge/extractor.hpp"
#include "patchforge/lexer.hpp"
#include "synthetic.hpp"

namespace pf = patchforge;

namespace {

std::string source_file(std::size_t functions) {
  pf::Rng rng(1);
  std::vector<pftest::SynthFunction> fs;
  for (std::size_t i = 0; i < functions; ++i) fs.push_back(pftest::random_function(rng, 8));
  return pftest::render_file(fs, rng);
}

void BM_StripAndLex(benchmark::State& state) {
  const std::string text = source_file(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pf::lex(pf::strip_comments(text)));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_StripAndLex)->Arg(10)->Arg(100);

void BM_ExtractFunctions(benchmark::State& state) {
  const std::string text = pf::strip_comments(source_file(100));
  for (auto _ : state) benchmark::DoNotOptimize(pf::extract_functions(text));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ExtractFunctions);

void BM_TrainBpe(benchmark::State& state) {
  const auto corpus = pftest::function_corpus(2000, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(pf::train_bpe(corpus, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_TrainBpe)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_EncodeBpe(benchmark::State& state) {
  const auto corpus = pftest::function_corpus(500, 4);
  const auto model = pf::train_bpe(corpus, 1000).model;
  std::size_t tokens = 0;
  for (const auto& f : corpus) tokens += f.size();
  for (auto _ : state)
    for (const auto& f : corpus) benchmark::DoNotOptimize(model.encode(f));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * tokens));
}
BENCHMARK(BM_EncodeBpe);

}  // namespace

BENCHMARK_MAIN();
