#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchforge/bpe.hpp"
#include "patchforge/lexer.hpp"

namespace patchforge {

// "CVE-YYYY-NNNN" with four or more trailing digits.
bool is_cve_id(std::string_view id);

struct VulnerableFunction {
  std::string name;
  std::string path;
  TokenSequence before;  // vulnerable version
  TokenSequence after;   // human fix

  bool operator==(const VulnerableFunction&) const = default;
};

struct VulnerabilityRecord {
  std::string cve_id;
  std::vector<VulnerableFunction> functions;

  bool operator==(const VulnerabilityRecord&) const = default;
};

// {"cve_id", "functions": [{"name", "path", "before_tokens", "after_tokens"}]}
VulnerabilityRecord parse_vulnerability(std::string_view line);
std::string to_json_line(const VulnerabilityRecord& record);

// Reads a test set. Records sharing a CVE are concatenated, and a function
// listed more than once under one CVE (same path and name) keeps its first
// before and its last after.
std::vector<VulnerabilityRecord> read_testset(const std::filesystem::path& path);
std::vector<VulnerabilityRecord> merge_testset(std::vector<VulnerabilityRecord> records);

struct FunctionKey {
  std::string cve_id;
  std::string path;
  std::string name;

  auto operator<=>(const FunctionKey&) const = default;
};

std::string to_string(const FunctionKey& key);

struct PredictionRecord {
  FunctionKey origin;
  int rank = 1;
  double score = 0;
  TokenSequence tokens;
};

// {"origin": {"cve_id", "path", "name"}, "rank", "score", "tokens"}
PredictionRecord parse_prediction(std::string_view line);
std::string to_json_line(const PredictionRecord& record);

// Candidate lists per function, each ordered by rank.
using PredictionMap = std::map<FunctionKey, std::vector<TokenSequence>>;
PredictionMap read_predictions(const std::filesystem::path& path);
PredictionMap group_predictions(std::vector<PredictionRecord> records);

// 1-based rank of the first candidate equal to `truth`.
std::optional<std::size_t> match_rank(const std::vector<TokenSequence>& predictions,
                                      const TokenSequence& truth);
bool function_fixed(const std::vector<TokenSequence>& predictions, const TokenSequence& truth);

struct Ratio {
  std::size_t count = 0;
  std::size_t total = 0;
  double value() const { return total ? static_cast<double>(count) / static_cast<double>(total) : 0; }
  bool operator==(const Ratio&) const = default;
};

struct FunctionVerdict {
  std::string path;
  std::string name;
  bool fixed = false;
  std::optional<std::size_t> rank;
  std::size_t candidates = 0;
};

struct VulnerabilityVerdict {
  std::string cve_id;
  std::vector<FunctionVerdict> functions;
  bool partially_fixed = false;
  bool completely_fixed = false;
};

struct EvalReport {
  Ratio fixed_functions;
  Ratio partially_fixed;
  Ratio completely_fixed;
  std::vector<VulnerabilityVerdict> vulnerabilities;
};

// Functions without predictions count as not fixed. A prediction keyed to a
// function absent from `vulns` throws DataError.
EvalReport evaluate(const std::vector<VulnerabilityRecord>& vulns,
                    const PredictionMap& predictions);

// Pretty-printed, stable key order, no timings.
std::string report_to_json(const EvalReport& report, std::string_view model_name = {});

struct OovReport {
  std::size_t with_unknown = 0;
  std::size_t total = 0;
  double ratio() const {
    return total ? static_cast<double>(with_unknown) / static_cast<double>(total) : 0;
  }
};

// A prediction counts when it holds the unknown symbol or any token outside
// `vocab`.
OovReport oov_analysis(const std::vector<TokenSequence>& predictions, const FixedVocab& vocab);

}  // namespace patchforge
