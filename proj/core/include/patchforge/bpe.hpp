#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "patchforge/lexer.hpp"

namespace patchforge {

// U+2581, prefixed to the first piece of every word.
inline constexpr std::string_view kWordMarker = "\xE2\x96\x81";

struct Merge {
  std::string left;
  std::string right;

  bool operator==(const Merge&) const = default;
};

using SubwordSequence = std::vector<std::string>;

// Ordered merge rules over a character alphabet. The vocabulary is the
// alphabet plus the distinct merge outputs; the marker is a convention on
// word-initial pieces and is not counted.
class BpeModel {
 public:
  BpeModel() = default;
  BpeModel(std::vector<std::string> alphabet, std::vector<Merge> merges);

  const std::vector<std::string>& alphabet() const noexcept { return alphabet_; }
  const std::vector<Merge>& merges() const noexcept { return merges_; }
  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }

  // Marker-prefixed pieces of one token, merges replayed in rule order.
  SubwordSequence encode_token(std::string_view token) const;
  SubwordSequence encode(const TokenSequence& tokens) const;

  std::string serialize() const;
  static BpeModel parse(std::string_view text);
  void save(std::ostream& out) const;
  static BpeModel load(std::istream& in);

  bool operator==(const BpeModel& other) const {
    return alphabet_ == other.alphabet_ && merges_ == other.merges_;
  }

 private:
  std::vector<std::string> alphabet_;
  std::vector<Merge> merges_;
  std::vector<std::string> vocab_;
  // Pair key -> ascending ranks of the rules merging that pair.
  std::unordered_map<std::string, std::vector<int>> ranks_;
};

struct BpeTraining {
  BpeModel model;
  bool stopped_early = false;
  std::string warning;
};

// Greedy most-frequent-pair merging over word counts; ties go to the
// lexicographically smallest (left, right). Stops at the target size, or
// early (with a warning) once no pair occurs at least twice.
// Throws ConfigError if target_vocab_size <= alphabet size.
BpeTraining train_bpe(const std::vector<TokenSequence>& corpus,
                      std::size_t target_vocab_size);

// Throws DataError if the first piece is not marker-prefixed or a piece
// carries the marker anywhere but at its start.
TokenSequence decode(const SubwordSequence& pieces);

class FixedVocab {
 public:
  static constexpr std::string_view kUnknown = "<unk>";

  FixedVocab() = default;
  explicit FixedVocab(std::vector<std::string> tokens);

  // Frequency-descending, ties lexicographic.
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  bool contains(std::string_view token) const;

  struct Encoding {
    TokenSequence tokens;
    std::size_t oov = 0;
  };
  Encoding encode(const TokenSequence& tokens) const;

  std::string serialize() const;
  static FixedVocab parse(std::string_view text);

  bool operator==(const FixedVocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

FixedVocab build_fixed_vocab(const std::vector<TokenSequence>& corpus, std::size_t k);

}  // namespace patchforge
