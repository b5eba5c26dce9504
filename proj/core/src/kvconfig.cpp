#include "patchforge/kvconfig.hpp"

#include "patchforge/error.hpp"
#include "patchforge/io.hpp"

namespace patchforge {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_kv(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, std::string(trim(line.substr(eq + 1)))).second)
      throw ConfigError("config key '" + key + "' given twice");
  }
  return out;
}

std::map<std::string, std::string> load_kv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " not found");
  return parse_kv(read_file(path));
}

}  // namespace patchforge
