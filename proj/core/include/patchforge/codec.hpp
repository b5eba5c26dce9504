#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "patchforge/bpe.hpp"

namespace patchforge {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumSpecial = 4;

// Maps token sequences to model ids, either through BPE pieces or through a
// fixed whole-token vocabulary (the baseline). Ids 0..3 are reserved.
class Codec {
 public:
  static Codec from_bpe(BpeModel model);
  static Codec from_fixed(FixedVocab vocab);
  // Detects the file kind from its header line.
  static Codec load(const std::filesystem::path& path);

  bool is_bpe() const noexcept { return std::holds_alternative<BpeModel>(model_); }
  const BpeModel* bpe() const noexcept { return std::get_if<BpeModel>(&model_); }
  const FixedVocab* fixed() const noexcept { return std::get_if<FixedVocab>(&model_); }

  std::size_t size() const noexcept { return symbols_.size(); }
  const std::string& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }

  // Ids without BOS/EOS. Unrepresentable pieces or tokens become kUnkId.
  std::vector<int> encode(const TokenSequence& tokens) const;

  // Nullopt when the ids do not form a well-formed token sequence.
  std::optional<TokenSequence> decode(std::span<const int> ids) const;

  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

 private:
  void add(const std::string& symbol);
  void finish();

  std::variant<BpeModel, FixedVocab> model_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> ids_;
  std::uint64_t fingerprint_ = 0;
};

}  // namespace patchforge
