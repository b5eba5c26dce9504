#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace patchforge {

enum class TokenKind {
  identifier,
  keyword,
  number_literal,
  string_literal,
  char_literal,
  punctuator,
  preprocessor_line,
};

std::string_view to_string(TokenKind kind);

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t offset = 0;  // byte offset of the first character in the input
};

// Token texts only; this is what datasets, BPE and the evaluator work with.
using TokenSequence = std::vector<std::string>;

// Maximal-munch C11 tokenizer over comment-free source. A directive line is
// one preprocessor_line token running from '#' to the end of the (possibly
// spliced) line. Throws SourceError on unterminated literals and on bytes
// that cannot start a C token.
std::vector<Token> tokenize(std::string_view source);

TokenSequence lex(std::string_view source);

TokenSequence texts(const std::vector<Token>& tokens);

// Joins tokens with single spaces. Preprocessor lines are set on their own
// line so that lex(detokenize(t)) == t.
std::string detokenize(const TokenSequence& tokens);

bool is_c_keyword(std::string_view word);

}  // namespace patchforge
