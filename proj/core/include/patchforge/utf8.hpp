#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace patchforge::utf8 {

// Replaces every ill-formed sequence with U+FFFD.
std::string sanitize(std::string_view bytes);

bool is_valid(std::string_view bytes);

// Splits into code points. An ill-formed byte becomes its own one-byte unit
// so that concatenating the result always reproduces the input.
std::vector<std::string> split(std::string_view text);

}  // namespace patchforge::utf8
