#pragma once

// Deterministic generators for C-like functions, edit pairs and push-event
// archives. Shared by the unit tests, the acceptance suite, the benchmarks
// and the fixture generator.

#include <cstdint>
#include <string>
#include <vector>

#include "patchforge/evaluator.hpp"
#include "patchforge/extractor.hpp"
#include "patchforge/lexer.hpp"
#include "patchforge/miner.hpp"
#include "patchforge/tensor.hpp"
#include "patchforge/transformer.hpp"

namespace pftest {

using patchforge::Rng;

std::string identifier(Rng& rng);

struct SynthFunction {
  std::string return_type;
  std::string name;
  std::vector<std::string> params;  // "struct dev *p"
  std::vector<std::string> body;    // one statement per entry

  std::string render() const;
};

SynthFunction random_function(Rng& rng, int statements);

enum class Edit { null_check, bound_check, rename, drop_statement, early_return };

// Applies one edit; the result always differs from `f` at the token level.
SynthFunction apply_edit(const SynthFunction& f, Edit edit, Rng& rng);
Edit random_edit(Rng& rng);

// Lexed functions for tokenizer tests.
std::vector<patchforge::TokenSequence> function_corpus(std::size_t n, std::uint64_t seed);

// Edited function pairs whose two sides both fit `limit` tokens.
std::vector<patchforge::FunctionPair> edit_pairs(std::size_t n, std::size_t limit,
                                                 std::uint64_t seed);

// A .c file holding the given functions plus includes and comments.
std::string render_file(const std::vector<SynthFunction>& functions, Rng& rng);

std::string random_sha(Rng& rng);

struct ArchiveSpec {
  std::size_t commits = 200;
  std::uint64_t seed = 2019;
};

struct Archive {
  std::vector<patchforge::PushEvent> events;
  // Changed function pairs of the bug-fix .c commits, for building test sets.
  std::vector<patchforge::FunctionPair> fix_pairs;
};

Archive synthetic_archive(const ArchiveSpec& spec);

// A micro transformer with random weights.
patchforge::Transformer<double> micro_model(int vocab, int d_model, int layers,
                                            std::uint64_t seed, int max_positions = 32);

}  // namespace pftest
