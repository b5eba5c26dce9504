#include "patchforge/extractor.hpp"

#include <map>
#include <utility>

#include "patchforge/error.hpp"
#include "patchforge/miner.hpp"

namespace patchforge {
namespace {

struct ConditionalFrame {
  int depth_at_if = 0;
  int depth_after_first = 0;
  bool in_alternate = false;
};

// Directive name of a preprocessor line, e.g. "ifdef" for "#  ifdef X".
std::string_view directive_name(std::string_view line) {
  std::size_t i = 1;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  std::size_t j = i;
  while (j < line.size() &&
         ((line[j] >= 'a' && line[j] <= 'z') || (line[j] >= 'A' && line[j] <= 'Z')))
    ++j;
  return line.substr(i, j - i);
}

void append_sized(std::string& key, const TokenSequence& tokens) {
  key += std::to_string(tokens.size());
  key += '|';
  for (const auto& t : tokens) {
    key += std::to_string(t.size());
    key += ':';
    key += t;
  }
}

}  // namespace

std::string strip_comments(std::string_view src) {
  std::string out;
  out.reserve(src.size());
  std::size_t i = 0;
  const std::size_t n = src.size();
  while (i < n) {
    const char c = src[i];
    if (c == '"' || c == '\'') {
      // Literal: copy through the closing quote, an unescaped newline or EOF.
      out += c;
      ++i;
      while (i < n && src[i] != c && src[i] != '\n') {
        if (src[i] == '\\' && i + 1 < n) {
          out += src[i++];
        }
        out += src[i++];
      }
      if (i < n && src[i] == c) out += src[i++];
      continue;
    }
    if (c == '/' && i + 1 < n && src[i + 1] == '*') {
      const std::size_t close = src.find("*/", i + 2);
      if (close == std::string_view::npos)
        throw SourceError("unterminated block comment", i);
      out += ' ';
      for (std::size_t k = i; k < close; ++k)
        if (src[k] == '\n') out += '\n';
      i = close + 2;
      continue;
    }
    if (c == '/' && i + 1 < n && src[i + 1] == '/') {
      out += ' ';
      i += 2;
      while (i < n && src[i] != '\n') {
        // A spliced newline continues the comment.
        if (src[i] == '\\' && i + 1 < n && src[i + 1] == '\n') {
          out += '\n';
          i += 2;
          continue;
        }
        if (src[i] == '\\' && i + 2 < n && src[i + 1] == '\r' && src[i + 2] == '\n') {
          out += '\n';
          i += 3;
          continue;
        }
        ++i;
      }
      continue;
    }
    out += c;
    ++i;
  }
  return out;
}

ExtractResult extract_functions(std::string_view source) {
  const std::vector<Token> tokens = tokenize(source);
  ExtractResult result;

  std::vector<ConditionalFrame> conditionals;
  std::size_t skipping = 0;  // frames currently inside an alternate branch

  int depth = 0;
  std::size_t outer_open = 0;
  std::vector<std::size_t> top;  // depth-0 tokens since the last ';' or '}'
  bool knr_pending = false;

  bool in_function = false;
  bool function_broken = false;
  std::string function_name;
  std::size_t function_start = 0;

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& tok = tokens[i];

    if (tok.kind == TokenKind::preprocessor_line) {
      const std::string_view name = directive_name(tok.text);
      if (name == "if" || name == "ifdef" || name == "ifndef") {
        conditionals.push_back({depth, depth, false});
      } else if ((name == "elif" || name == "else") && !conditionals.empty()) {
        auto& frame = conditionals.back();
        if (!frame.in_alternate) {
          frame.in_alternate = true;
          frame.depth_after_first = depth;
          ++skipping;
        }
      } else if (name == "endif" && !conditionals.empty()) {
        const ConditionalFrame frame = conditionals.back();
        conditionals.pop_back();
        if (frame.in_alternate) {
          --skipping;
          if (frame.depth_after_first != frame.depth_at_if && in_function)
            function_broken = true;
          depth = frame.depth_after_first;
        }
      }
      continue;
    }
    if (skipping > 0) continue;

    if (tok.text == "{") {
      if (depth == 0) {
        outer_open = tok.offset;
        bool has_assign = false;
        for (std::size_t t : top) has_assign = has_assign || tokens[t].text == "=";
        if (!top.empty() && tokens[top.back()].text == ")" && !has_assign) {
          // Walk back to the '(' that opens the parameter list.
          int parens = 0;
          std::size_t k = top.size();
          while (k > 0) {
            --k;
            const std::string& t = tokens[top[k]].text;
            if (t == ")") ++parens;
            if (t == "(" && --parens == 0) break;
          }
          if (parens == 0 && k > 0 &&
              tokens[top[k - 1]].kind == TokenKind::identifier) {
            in_function = true;
            function_broken = false;
            function_name = tokens[top[k - 1]].text;
            function_start = tokens[top.front()].offset;
          } else {
            ++result.skipped_unnamed;
          }
        } else if (top.empty() && knr_pending) {
          ++result.skipped_knr;
        }
        knr_pending = false;
      }
      ++depth;
      continue;
    }

    if (tok.text == "}") {
      if (depth == 0) throw SourceError("unbalanced '}'", tok.offset);
      --depth;
      if (depth == 0) {
        if (in_function) {
          if (function_broken) {
            ++result.skipped_conditional;
          } else {
            const std::size_t end = tok.offset + 1;
            result.functions.push_back(
                FunctionSpan{function_name, function_start, end,
                             std::string(source.substr(function_start, end - function_start))});
          }
        }
        in_function = false;
        top.clear();
      }
      continue;
    }

    if (depth != 0) continue;

    if (tok.text == ";") {
      for (std::size_t k = 1; k < top.size(); ++k) {
        const Token& after = tokens[top[k]];
        if (tokens[top[k - 1]].text == ")" &&
            (after.kind == TokenKind::identifier || after.kind == TokenKind::keyword))
          knr_pending = true;
      }
      top.clear();
      continue;
    }
    top.push_back(i);
  }

  if (depth != 0) throw SourceError("unbalanced braces: '{' never closed", outer_open);
  return result;
}

PairingResult pair_changed_functions(const std::vector<FunctionSpan>& before,
                                     const std::vector<FunctionSpan>& after,
                                     const Origin& origin) {
  using Key = std::pair<std::string, std::size_t>;
  auto keyed = [](const std::vector<FunctionSpan>& spans) {
    std::map<Key, const FunctionSpan*> out;
    std::map<std::string, std::size_t> ordinal;
    std::vector<Key> order;
    for (const auto& s : spans) {
      Key key{s.name, ordinal[s.name]++};
      out.emplace(key, &s);
      order.push_back(key);
    }
    return std::make_pair(std::move(out), std::move(order));
  };
  auto [before_map, before_order] = keyed(before);
  auto [after_map, after_order] = keyed(after);

  PairingResult result;
  for (const Key& key : before_order) {
    auto it = after_map.find(key);
    if (it == after_map.end()) {
      ++result.deleted;
      continue;
    }
    TokenSequence old_tokens = lex(before_map.at(key)->body_text);
    TokenSequence new_tokens = lex(it->second->body_text);
    if (old_tokens == new_tokens) {
      ++result.unchanged;
      continue;
    }
    result.pairs.push_back(
        FunctionPair{key.first, std::move(old_tokens), std::move(new_tokens), origin});
  }
  for (const Key& key : after_order)
    if (!before_map.contains(key)) ++result.added;
  return result;
}

LengthBucket LengthBucket::from_limit(int limit) {
  if (limit != 50 && limit != 100 && limit != 200)
    throw ConfigError("length bucket must be 50, 100 or 200 (got " +
                      std::to_string(limit) + ")");
  return LengthBucket(limit);
}

bool LengthBucket::admits(const FunctionPair& pair) const noexcept {
  const auto lim = static_cast<std::size_t>(limit_);
  return pair.before_tokens.size() <= lim && pair.after_tokens.size() <= lim;
}

bool PairFilter::admit(const FunctionPair& pair) {
  std::string key;
  append_sized(key, pair.before_tokens);
  append_sized(key, pair.after_tokens);
  if (!seen_.insert(std::move(key)).second) {
    ++duplicates_;
    return false;
  }
  if (!bucket_.admits(pair)) {
    ++oversize_;
    return false;
  }
  return true;
}

std::vector<FunctionPair> dedup_and_bucket(const std::vector<FunctionPair>& pairs,
                                           LengthBucket bucket) {
  PairFilter filter(bucket);
  std::vector<FunctionPair> out;
  for (const auto& p : pairs)
    if (filter.admit(p)) out.push_back(p);
  return out;
}

CommitExtraction extract_commit(const CommitRecord& record) {
  CommitExtraction result;
  for (const auto& file : record.commit.changed_files) {
    if (!file.before || !file.after) continue;
    ++result.files_seen;
    try {
      const ExtractResult old_fns = extract_functions(strip_comments(*file.before));
      const ExtractResult new_fns = extract_functions(strip_comments(*file.after));
      result.skipped_functions += old_fns.skipped_conditional + old_fns.skipped_knr +
                                  old_fns.skipped_unnamed + new_fns.skipped_conditional +
                                  new_fns.skipped_knr + new_fns.skipped_unnamed;
      PairingResult paired = pair_changed_functions(
          old_fns.functions, new_fns.functions, Origin{record.commit.sha, file.path});
      result.added += paired.added;
      result.deleted += paired.deleted;
      for (auto& p : paired.pairs) result.pairs.push_back(std::move(p));
    } catch (const SourceError&) {
      ++result.files_failed;
    }
  }
  return result;
}

}  // namespace patchforge
