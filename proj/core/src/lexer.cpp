#include "patchforge/lexer.hpp"

#include <algorithm>
#include <array>

#include "patchforge/error.hpp"

namespace patchforge {
namespace {

constexpr std::array<std::string_view, 44> kKeywords = {
    "auto",          "break",     "case",     "char",     "const",
    "continue",      "default",   "do",       "double",   "else",
    "enum",          "extern",    "float",    "for",      "goto",
    "if",            "inline",    "int",      "long",     "register",
    "restrict",      "return",    "short",    "signed",   "sizeof",
    "static",        "struct",    "switch",   "typedef",  "union",
    "unsigned",      "void",      "volatile", "while",    "_Alignas",
    "_Alignof",      "_Atomic",   "_Bool",    "_Complex", "_Generic",
    "_Imaginary",    "_Noreturn", "_Static_assert",       "_Thread_local",
};

// Longest first so the first hit is the maximal munch.
constexpr std::array<std::string_view, 47> kPunctuators = {
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
    "&&",  "||",  "*=",  "/=", "%=", "+=", "-=", "&=", "^=", "|=", "##", "[",
    "]",   "(",   ")",   "{",  "}",  ".",  "&",  "*",  "+",  "-",  "~",  "!",
    "/",   "%",   "<",   ">",  "^",  "|",  "?",  ":",  ";",  "=",  ",",
};

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c); }

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

class Scanner {
 public:
  explicit Scanner(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      if (pos_ >= src_.size()) break;
      out.push_back(next());
      line_start_ = false;
    }
    return out;
  }

 private:
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  // Length of a backslash-newline splice at `at`, or 0.
  std::size_t splice_at(std::size_t at) const {
    if (at >= src_.size() || src_[at] != '\\') return 0;
    if (at + 1 < src_.size() && src_[at + 1] == '\n') return 2;
    if (at + 2 < src_.size() && src_[at + 1] == '\r' && src_[at + 2] == '\n')
      return 3;
    return 0;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (is_space(c)) {
        if (c == '\n') line_start_ = true;
        ++pos_;
      } else if (std::size_t n = splice_at(pos_)) {
        pos_ += n;
      } else {
        break;
      }
    }
  }

  Token make(TokenKind kind, std::size_t start) const {
    return Token{kind, std::string(src_.substr(start, pos_ - start)), start};
  }

  Token next() {
    const std::size_t start = pos_;
    const char c = src_[pos_];

    if (c == '#') {
      if (!line_start_)
        throw SourceError("stray '#' outside a preprocessor directive", start);
      return directive(start);
    }
    if (is_ident_start(c)) {
      while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
      const std::string_view word = src_.substr(start, pos_ - start);
      const bool prefix =
          word == "L" || word == "u" || word == "U" || word == "u8";
      if (prefix && (peek() == '"' || (peek() == '\'' && word != "u8"))) {
        return literal(start, peek());
      }
      return make(is_c_keyword(word) ? TokenKind::keyword
                                     : TokenKind::identifier,
                  start);
    }
    if (is_digit(c) || (c == '.' && is_digit(peek(1)))) return number(start);
    if (c == '"' || c == '\'') return literal(start, c);

    for (std::string_view p : kPunctuators) {
      if (src_.substr(pos_, p.size()) == p) {
        if (p == "##")
          throw SourceError("stray '##' outside a preprocessor directive",
                            start);
        pos_ += p.size();
        return make(TokenKind::punctuator, start);
      }
    }
    throw SourceError("stray byte outside the C character set", start);
  }

  Token directive(std::size_t start) {
    while (pos_ < src_.size()) {
      if (src_[pos_] == '\n') break;
      if (std::size_t n = splice_at(pos_)) {
        pos_ += n;
        continue;
      }
      ++pos_;
    }
    std::size_t end = pos_;
    // Trailing blanks and a dangling splice at end of input are not part of
    // the directive text.
    while (end > start &&
           (is_space(src_[end - 1]) || (end == src_.size() && src_[end - 1] == '\\')))
      --end;
    return Token{TokenKind::preprocessor_line,
                 std::string(src_.substr(start, end - start)), start};
  }

  // pp-number: digit or .digit followed by [0-9A-Za-z_.] and e+ e- p+ p-.
  Token number(std::size_t start) {
    ++pos_;
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if ((c == '+' || c == '-') &&
          (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E' ||
           src_[pos_ - 1] == 'p' || src_[pos_ - 1] == 'P')) {
        ++pos_;
      } else if (is_ident_char(c) || c == '.') {
        ++pos_;
      } else {
        break;
      }
    }
    return make(TokenKind::number_literal, start);
  }

  Token literal(std::size_t start, char quote) {
    while (src_[pos_] != quote) ++pos_;  // skip encoding prefix
    ++pos_;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') {
        throw SourceError(quote == '"' ? "unterminated string literal"
                                       : "unterminated character literal",
                          start);
      }
      const char c = src_[pos_];
      if (c == '\\') {
        pos_ += (pos_ + 1 < src_.size()) ? 2 : 1;
        continue;
      }
      ++pos_;
      if (c == quote) break;
    }
    return make(quote == '"' ? TokenKind::string_literal
                             : TokenKind::char_literal,
                start);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  bool line_start_ = true;
};

}  // namespace

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::identifier: return "identifier";
    case TokenKind::keyword: return "keyword";
    case TokenKind::number_literal: return "number-literal";
    case TokenKind::string_literal: return "string-literal";
    case TokenKind::char_literal: return "char-literal";
    case TokenKind::punctuator: return "punctuator";
    case TokenKind::preprocessor_line: return "preprocessor-line";
  }
  return "unknown";
}

bool is_c_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

std::vector<Token> tokenize(std::string_view source) {
  return Scanner(source).run();
}

TokenSequence texts(const std::vector<Token>& tokens) {
  TokenSequence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

TokenSequence lex(std::string_view source) { return texts(tokenize(source)); }

std::string detokenize(const TokenSequence& tokens) {
  std::string out;
  bool after_directive = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    const bool directive = !t.empty() && t.front() == '#';
    if (i > 0) out += (directive || after_directive) ? '\n' : ' ';
    out += t;
    after_directive = directive;
  }
  return out;
}

}  // namespace patchforge
