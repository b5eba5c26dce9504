#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

#include "patchforge/error.hpp"
#include "patchforge/utf8.hpp"

namespace patchforge::detail {

using nlohmann::json;

// Parses one record after replacing ill-formed UTF-8.
inline json parse_record(std::string_view line, std::string_view what) {
  try {
    return json::parse(utf8::is_valid(line) ? std::string(line) : utf8::sanitize(line));
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
}

inline std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

template <class T>
T field(const json& j, const char* key, std::string_view what) {
  if (!j.is_object() || !j.contains(key))
    throw DataError(std::string(what) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + ": bad field '" + key + "': " + e.what());
  }
}

inline const json& array_field(const json& j, const char* key, std::string_view what) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_array())
    throw DataError(std::string(what) + ": field '" + key + "' must be an array");
  return j.at(key);
}

}  // namespace patchforge::detail
