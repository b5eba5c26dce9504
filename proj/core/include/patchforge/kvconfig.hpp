#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace patchforge {

// Flat "key = value" text. '#' starts a comment line; blank lines are
// ignored. Throws ConfigError on a line without '=' or a repeated key.
std::map<std::string, std::string> parse_kv(std::string_view text);
std::map<std::string, std::string> load_kv(const std::filesystem::path& path);

}  // namespace patchforge
