#include "patchforge/bpe.hpp"

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_set>

#include "patchforge/error.hpp"
#include "patchforge/utf8.hpp"

namespace patchforge {
namespace {

constexpr std::string_view kModelHeader = "patchforge-bpe";
constexpr std::string_view kVocabHeader = "patchforge-vocab";

std::string pair_key(std::string_view left, std::string_view right) {
  std::string key = std::to_string(left.size());
  key += ':';
  key += left;
  key += right;
  return key;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case ' ': out += "\\s"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i >= s.size()) throw DataError("dangling escape in model file");
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 's': out += ' '; break;
      default: throw DataError("unknown escape in model file");
    }
  }
  return out;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = s.find(sep, start);
    parts.push_back(s.substr(start, at == std::string_view::npos ? at : at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return parts;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  auto lines = split_on(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string> initial_pieces(std::string_view token) {
  if (token.empty()) throw DataError("cannot segment an empty token");
  if (token.find(kWordMarker) != std::string_view::npos)
    throw DataError("token contains the word-start marker U+2581");
  std::vector<std::string> pieces = utf8::split(token);
  pieces.front().insert(0, kWordMarker);
  return pieces;
}

// Incremental trainer over distinct words weighted by their counts.
class Trainer {
 public:
  explicit Trainer(const std::vector<TokenSequence>& corpus) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& seq : corpus)
      for (const auto& tok : seq) ++counts[tok];
    std::set<std::string> chars;
    for (const auto& [word, count] : counts) {
      Word w;
      w.count = count;
      for (auto& unit : initial_pieces(word)) w.symbols.push_back(intern(unit));
      for (auto& unit : utf8::split(word)) chars.insert(unit);
      words_.push_back(std::move(w));
    }
    alphabet_.assign(chars.begin(), chars.end());
  }

  const std::vector<std::string>& alphabet() const { return alphabet_; }

  BpeTraining run(std::size_t target) {
    if (target <= alphabet_.size())
      throw ConfigError("target vocabulary size " + std::to_string(target) +
                        " must exceed the alphabet size " + std::to_string(alphabet_.size()));
    std::unordered_set<std::string> vocab(alphabet_.begin(), alphabet_.end());
    for (std::uint32_t w = 0; w < words_.size(); ++w) add_word_pairs(w, nullptr);
    for (const auto& [key, count] : counts_) heap_.push({count, key});

    std::vector<Merge> merges;
    BpeTraining result;
    std::vector<std::uint32_t> stamp(words_.size(), 0);
    std::uint32_t round = 0;
    while (vocab.size() < target) {
      std::optional<Entry> best;
      while (!heap_.empty()) {
        Entry top = heap_.top();
        auto it = counts_.find(top.key);
        if (it != counts_.end() && it->second == top.count && top.count > 0) {
          best = top;
          break;
        }
        heap_.pop();
      }
      if (!best || best->count < 2) {
        result.stopped_early = true;
        result.warning = "no symbol pair occurs at least twice; stopped at vocabulary size " +
                         std::to_string(vocab.size()) + " of " + std::to_string(target);
        break;
      }
      heap_.pop();
      const auto [left, right] = unpack(best->key);
      const int merged = intern(symbols_[left] + symbols_[right]);
      merges.push_back({symbols_[left], symbols_[right]});
      vocab.insert(symbols_[merged]);

      ++round;
      std::set<std::uint64_t> touched;
      const std::vector<std::uint32_t> where = std::move(where_[best->key]);
      where_.erase(best->key);
      for (std::uint32_t w : where) {
        if (stamp[w] == round) continue;
        stamp[w] = round;
        if (!contains_pair(words_[w].symbols, left, right)) continue;
        remove_word_pairs(w, touched);
        apply_merge(words_[w].symbols, left, right, merged);
        add_word_pairs(w, &touched);
      }
      for (std::uint64_t key : touched) {
        auto it = counts_.find(key);
        if (it != counts_.end() && it->second > 0) heap_.push({it->second, key});
      }
    }
    result.model = BpeModel(alphabet_, std::move(merges));
    return result;
  }

 private:
  struct Word {
    std::vector<int> symbols;
    std::int64_t count = 0;
  };
  struct Entry {
    std::int64_t count;
    std::uint64_t key;
  };
  struct EntryLess {
    const Trainer* self;
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.count != b.count) return a.count < b.count;
      const auto [al, ar] = unpack(a.key);
      const auto [bl, br] = unpack(b.key);
      const auto& s = self->symbols_;
      // Max-heap: the lexicographically smaller pair must rank higher.
      if (s[al] != s[bl]) return s[al] > s[bl];
      return s[ar] > s[br];
    }
  };

  static std::uint64_t pack(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }
  static std::pair<int, int> unpack(std::uint64_t key) {
    return {static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffu)};
  }

  int intern(const std::string& s) {
    auto [it, inserted] = ids_.emplace(s, static_cast<int>(symbols_.size()));
    if (inserted) symbols_.push_back(s);
    return it->second;
  }

  static bool contains_pair(const std::vector<int>& syms, int a, int b) {
    for (std::size_t i = 0; i + 1 < syms.size(); ++i)
      if (syms[i] == a && syms[i + 1] == b) return true;
    return false;
  }

  static void apply_merge(std::vector<int>& syms, int a, int b, int merged) {
    std::vector<int> out;
    out.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size();) {
      if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
        out.push_back(merged);
        i += 2;
      } else {
        out.push_back(syms[i++]);
      }
    }
    syms = std::move(out);
  }

  void add_word_pairs(std::uint32_t w, std::set<std::uint64_t>* touched) {
    const auto& word = words_[w];
    for (std::size_t i = 0; i + 1 < word.symbols.size(); ++i) {
      const std::uint64_t key = pack(word.symbols[i], word.symbols[i + 1]);
      counts_[key] += word.count;
      where_[key].push_back(w);
      if (touched) touched->insert(key);
    }
  }

  void remove_word_pairs(std::uint32_t w, std::set<std::uint64_t>& touched) {
    const auto& word = words_[w];
    for (std::size_t i = 0; i + 1 < word.symbols.size(); ++i) {
      const std::uint64_t key = pack(word.symbols[i], word.symbols[i + 1]);
      counts_[key] -= word.count;
      touched.insert(key);
    }
  }

  std::vector<Word> words_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> alphabet_;
  std::unordered_map<std::uint64_t, std::int64_t> counts_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where_;
  std::priority_queue<Entry, std::vector<Entry>, EntryLess> heap_{EntryLess{this}};
};

}  // namespace

BpeModel::BpeModel(std::vector<std::string> alphabet, std::vector<Merge> merges)
    : alphabet_(std::move(alphabet)), merges_(std::move(merges)) {
  std::unordered_set<std::string> seen;
  for (const auto& c : alphabet_)
    if (seen.insert(c).second) vocab_.push_back(c);
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto& m = merges_[r];
    ranks_[pair_key(m.left, m.right)].push_back(static_cast<int>(r));
    std::string out = m.left + m.right;
    if (seen.insert(out).second) vocab_.push_back(std::move(out));
  }
}

SubwordSequence BpeModel::encode_token(std::string_view token) const {
  std::vector<std::string> pieces = initial_pieces(token);
  int last = -1;
  while (pieces.size() > 1) {
    // The next rule a sequential replay would fire: the smallest rank that
    // is present and later than the last one applied.
    int best = -1;
    for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
      auto it = ranks_.find(pair_key(pieces[i], pieces[i + 1]));
      if (it == ranks_.end()) continue;
      auto r = std::upper_bound(it->second.begin(), it->second.end(), last);
      if (r != it->second.end() && (best < 0 || *r < best)) best = *r;
    }
    if (best < 0) break;
    const Merge& m = merges_[static_cast<std::size_t>(best)];
    std::vector<std::string> next;
    next.reserve(pieces.size());
    for (std::size_t i = 0; i < pieces.size();) {
      if (i + 1 < pieces.size() && pieces[i] == m.left && pieces[i + 1] == m.right) {
        next.push_back(pieces[i] + pieces[i + 1]);
        i += 2;
      } else {
        next.push_back(std::move(pieces[i++]));
      }
    }
    pieces = std::move(next);
    last = best;
  }
  return pieces;
}

SubwordSequence BpeModel::encode(const TokenSequence& tokens) const {
  SubwordSequence out;
  for (const auto& t : tokens)
    for (auto& p : encode_token(t)) out.push_back(std::move(p));
  return out;
}

std::string BpeModel::serialize() const {
  std::string out(kModelHeader);
  out += "\t1\t";
  for (std::size_t i = 0; i < alphabet_.size(); ++i) {
    if (i) out += ' ';
    out += escape(alphabet_[i]);
  }
  out += '\n';
  for (const auto& m : merges_) {
    out += escape(m.left);
    out += '\t';
    out += escape(m.right);
    out += '\n';
  }
  return out;
}

BpeModel BpeModel::parse(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError("empty BPE model file");
  const auto header = split_on(lines[0], '\t');
  if (header.size() != 3 || header[0] != kModelHeader || header[1] != "1")
    throw DataError("not a patchforge BPE model (bad header)");
  std::vector<std::string> alphabet;
  if (!header[2].empty())
    for (auto unit : split_on(header[2], ' ')) alphabet.push_back(unescape(unit));
  std::vector<Merge> merges;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto parts = split_on(lines[i], '\t');
    if (parts.size() != 2)
      throw DataError("malformed merge rule on line " + std::to_string(i + 1));
    merges.push_back({unescape(parts[0]), unescape(parts[1])});
  }
  return BpeModel(std::move(alphabet), std::move(merges));
}

void BpeModel::save(std::ostream& out) const { out << serialize(); }

BpeModel BpeModel::load(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

BpeTraining train_bpe(const std::vector<TokenSequence>& corpus, std::size_t target_vocab_size) {
  bool any = false;
  for (const auto& seq : corpus) any = any || !seq.empty();
  if (!any) throw ConfigError("cannot train BPE on an empty corpus");
  Trainer trainer(corpus);
  return trainer.run(target_vocab_size);
}

TokenSequence decode(const SubwordSequence& pieces) {
  TokenSequence tokens;
  for (const auto& piece : pieces) {
    const bool starts = piece.compare(0, kWordMarker.size(), kWordMarker) == 0;
    const std::string_view rest =
        starts ? std::string_view(piece).substr(kWordMarker.size()) : std::string_view(piece);
    if (rest.find(kWordMarker) != std::string_view::npos)
      throw DataError("subword piece carries an inner word-start marker");
    if (starts) {
      tokens.emplace_back(rest);
    } else {
      if (tokens.empty()) throw DataError("subword sequence does not start with a marked piece");
      tokens.back() += rest;
    }
    if (starts && rest.empty()) throw DataError("marked piece without characters");
  }
  return tokens;
}

FixedVocab::FixedVocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

bool FixedVocab::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

FixedVocab::Encoding FixedVocab::encode(const TokenSequence& tokens) const {
  Encoding enc;
  enc.tokens.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (contains(t)) {
      enc.tokens.push_back(t);
    } else {
      enc.tokens.emplace_back(kUnknown);
      ++enc.oov;
    }
  }
  return enc;
}

std::string FixedVocab::serialize() const {
  std::string out(kVocabHeader);
  out += "\t1\t" + std::to_string(tokens_.size()) + "\n";
  for (const auto& t : tokens_) out += escape(t) + "\n";
  return out;
}

FixedVocab FixedVocab::parse(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError("empty vocabulary file");
  const auto header = split_on(lines[0], '\t');
  if (header.size() != 3 || header[0] != kVocabHeader || header[1] != "1")
    throw DataError("not a patchforge vocabulary (bad header)");
  std::vector<std::string> tokens;
  for (std::size_t i = 1; i < lines.size(); ++i) tokens.push_back(unescape(lines[i]));
  if (std::to_string(tokens.size()) != header[2])
    throw DataError("vocabulary size does not match its header");
  return FixedVocab(std::move(tokens));
}

FixedVocab build_fixed_vocab(const std::vector<TokenSequence>& corpus, std::size_t k) {
  if (k < 1) throw ConfigError("fixed vocabulary size must be at least 1");
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& seq : corpus)
    for (const auto& t : seq) ++counts[t];
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > k) ranked.resize(k);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [t, c] : ranked) tokens.push_back(std::move(t));
  return FixedVocab(std::move(tokens));
}

}  // namespace patchforge
