#include "patchforge/utf8.hpp"

#include <cstdint>

namespace patchforge::utf8 {
namespace {

// Length of the well-formed sequence starting at `pos`, or 0.
std::size_t sequence_length(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return 1;
  std::size_t len = 0;
  std::uint32_t lo = 0x80, hi = 0xBF;
  if (b0 >= 0xC2 && b0 <= 0xDF) {
    len = 2;
  } else if (b0 >= 0xE0 && b0 <= 0xEF) {
    len = 3;
    if (b0 == 0xE0) lo = 0xA0;
    if (b0 == 0xED) hi = 0x9F;
  } else if (b0 >= 0xF0 && b0 <= 0xF4) {
    len = 4;
    if (b0 == 0xF0) lo = 0x90;
    if (b0 == 0xF4) hi = 0x8F;
  } else {
    return 0;
  }
  if (pos + len > s.size()) return 0;
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    const std::uint32_t l = (i == 1) ? lo : 0x80;
    const std::uint32_t h = (i == 1) ? hi : 0xBF;
    if (b < l || b > h) return 0;
  }
  return len;
}

}  // namespace

std::string sanitize(std::string_view bytes) {
  std::string out;
  out.reserve(bytes.size());
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t len = sequence_length(bytes, pos);
    if (len == 0) {
      out += "\xEF\xBF\xBD";
      ++pos;
    } else {
      out.append(bytes.substr(pos, len));
      pos += len;
    }
  }
  return out;
}

bool is_valid(std::string_view bytes) {
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t len = sequence_length(bytes, pos);
    if (len == 0) return false;
    pos += len;
  }
  return true;
}

std::vector<std::string> split(std::string_view text) {
  std::vector<std::string> units;
  units.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = sequence_length(text, pos);
    if (len == 0) len = 1;
    units.emplace_back(text.substr(pos, len));
    pos += len;
  }
  return units;
}

}  // namespace patchforge::utf8
