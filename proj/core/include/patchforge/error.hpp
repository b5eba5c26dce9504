#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace patchforge {

// Process exit codes used by the CLI.
enum class ExitCode : int {
  ok = 0,
  usage = 1,
  data = 2,
  internal = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what)
      : Error(ExitCode::internal, what) {}
};

// A data error tied to a byte offset in some source text.
class SourceError : public DataError {
 public:
  SourceError(const std::string& what, std::size_t offset)
      : DataError(what + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace patchforge
