#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace patchforge {

// Reads newline-delimited records from a plain or gzip-compressed (".gz")
// file. Trailing '\r' is removed from each line.
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path);
  ~LineReader();
  LineReader(LineReader&&) noexcept;
  LineReader& operator=(LineReader&&) noexcept;

  std::optional<std::string> next();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<std::string> read_lines(const std::filesystem::path& path);

// Regular files under `path` in lexicographic order, or `path` itself.
std::vector<std::filesystem::path> expand_inputs(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

void write_file(const std::filesystem::path& path, const std::string& content);

// Opens for writing and throws DataError if that fails.
std::ofstream open_output(const std::filesystem::path& path,
                          std::ios::openmode mode = std::ios::out);

// 64-bit FNV-1a, used for stage fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace patchforge
