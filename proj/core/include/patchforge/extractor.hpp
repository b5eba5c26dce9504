#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "patchforge/lexer.hpp"

namespace patchforge {

struct CommitRecord;

// Replaces every comment with one space (plus the newlines the comment
// spanned). String and character literal contents are left untouched.
// Throws SourceError pointing at the opening of an unterminated block comment.
std::string strip_comments(std::string_view source);

struct FunctionSpan {
  std::string name;
  std::size_t start_offset = 0;
  std::size_t end_offset = 0;  // one past the closing brace
  std::string body_text;
};

struct ExtractResult {
  std::vector<FunctionSpan> functions;
  std::size_t skipped_conditional = 0;  // braces unbalanced across #if branches
  std::size_t skipped_knr = 0;          // K&R parameter declarations
  std::size_t skipped_unnamed = 0;      // "(...) {" without a plain name
};

// Finds top-level function definitions in comment-free source. Braces inside
// #else/#elif branches are not counted. Throws SourceError on unbalanced
// braces or on lexical errors.
ExtractResult extract_functions(std::string_view source);

struct Origin {
  std::string sha;
  std::string path;

  bool operator==(const Origin&) const = default;
};

struct FunctionPair {
  std::string name;
  TokenSequence before_tokens;
  TokenSequence after_tokens;
  Origin origin;

  bool operator==(const FunctionPair&) const = default;
};

struct PairingResult {
  std::vector<FunctionPair> pairs;
  std::size_t added = 0;
  std::size_t deleted = 0;
  std::size_t unchanged = 0;
};

// Matches functions by (name, ordinal among same-named functions) and emits a
// pair for every matched function whose token sequence changed.
PairingResult pair_changed_functions(const std::vector<FunctionSpan>& before,
                                     const std::vector<FunctionSpan>& after,
                                     const Origin& origin);

class LengthBucket {
 public:
  // Accepts 50, 100 or 200; throws ConfigError otherwise.
  static LengthBucket from_limit(int limit);

  int limit() const noexcept { return limit_; }
  bool admits(const FunctionPair& pair) const noexcept;

 private:
  explicit LengthBucket(int limit) : limit_(limit) {}
  int limit_;
};

// Streaming form of dedup_and_bucket: remembers every (before, after) pair
// it has seen and admits the first occurrence that fits the bucket.
class PairFilter {
 public:
  explicit PairFilter(LengthBucket bucket) : bucket_(bucket) {}

  bool admit(const FunctionPair& pair);

  std::size_t duplicates() const noexcept { return duplicates_; }
  std::size_t oversize() const noexcept { return oversize_; }

 private:
  LengthBucket bucket_;
  std::unordered_set<std::string> seen_;
  std::size_t duplicates_ = 0;
  std::size_t oversize_ = 0;
};

std::vector<FunctionPair> dedup_and_bucket(const std::vector<FunctionPair>& pairs,
                                           LengthBucket bucket);

struct CommitExtraction {
  std::vector<FunctionPair> pairs;
  std::size_t files_seen = 0;
  std::size_t files_failed = 0;  // comment, lexical or brace errors
  std::size_t added = 0;
  std::size_t deleted = 0;
  std::size_t skipped_functions = 0;
};

// strip_comments -> extract_functions -> pair_changed_functions for every
// file of the commit that has both a before and an after version.
CommitExtraction extract_commit(const CommitRecord& commit);

}  // namespace patchforge
