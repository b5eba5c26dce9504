#include "patchforge/codec.hpp"

#include "patchforge/error.hpp"
#include "patchforge/io.hpp"

namespace patchforge {

void Codec::add(const std::string& symbol) {
  if (ids_.emplace(symbol, static_cast<int>(symbols_.size())).second) symbols_.push_back(symbol);
}

void Codec::finish() {
  std::uint64_t h = fnv1a(is_bpe() ? "bpe" : "fixed");
  for (const auto& s : symbols_) {
    h = fnv1a(s, h);
    h = fnv1a(std::string_view("\0", 1), h);
  }
  fingerprint_ = h;
}

Codec Codec::from_bpe(BpeModel model) {
  Codec c;
  for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) c.add(s);
  for (const auto& unit : model.alphabet()) {
    c.add(unit);
    c.add(std::string(kWordMarker) + unit);
  }
  for (const auto& m : model.merges()) c.add(m.left + m.right);
  c.model_ = std::move(model);
  c.finish();
  return c;
}

Codec Codec::from_fixed(FixedVocab vocab) {
  Codec c;
  for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) c.add(s);
  for (const auto& t : vocab.tokens()) c.add(t);
  c.model_ = std::move(vocab);
  c.finish();
  return c;
}

Codec Codec::load(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  if (text.rfind("patchforge-bpe\t", 0) == 0) return from_bpe(BpeModel::parse(text));
  if (text.rfind("patchforge-vocab\t", 0) == 0) return from_fixed(FixedVocab::parse(text));
  throw DataError("'" + path.string() + "' is neither a BPE model nor a fixed vocabulary");
}

std::vector<int> Codec::encode(const TokenSequence& tokens) const {
  std::vector<int> ids;
  auto lookup = [&](const std::string& s) {
    auto it = ids_.find(s);
    return (it == ids_.end() || it->second < kNumSpecial) ? kUnkId : it->second;
  };
  if (const BpeModel* m = bpe()) {
    for (const auto& t : tokens)
      for (const auto& piece : m->encode_token(t)) ids.push_back(lookup(piece));
  } else {
    for (const auto& t : tokens) ids.push_back(lookup(t));
  }
  return ids;
}

std::optional<TokenSequence> Codec::decode(std::span<const int> ids) const {
  if (is_bpe()) {
    SubwordSequence pieces;
    for (int id : ids) {
      if (id < kNumSpecial || static_cast<std::size_t>(id) >= symbols_.size()) return std::nullopt;
      pieces.push_back(symbols_[static_cast<std::size_t>(id)]);
    }
    try {
      return patchforge::decode(pieces);
    } catch (const DataError&) {
      return std::nullopt;
    }
  }
  TokenSequence tokens;
  for (int id : ids) {
    if (id == kUnkId) {
      tokens.emplace_back(FixedVocab::kUnknown);
      continue;
    }
    if (id < kNumSpecial || static_cast<std::size_t>(id) >= symbols_.size()) return std::nullopt;
    tokens.push_back(symbols_[static_cast<std::size_t>(id)]);
  }
  return tokens;
}

}  // namespace patchforge
