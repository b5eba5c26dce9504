#include "patchforge/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <sstream>

#include "patchforge/error.hpp"

namespace patchforge {

struct LineReader::Impl {
  std::ifstream plain;
  gzFile gz = nullptr;

  ~Impl() {
    if (gz) gzclose(gz);
  }
};

LineReader::LineReader(const std::filesystem::path& path) : impl_(std::make_unique<Impl>()) {
  if (!std::filesystem::exists(path))
    throw DataError("input '" + path.string() + "' does not exist");
  if (path.extension() == ".gz") {
    impl_->gz = gzopen(path.c_str(), "rb");
    if (!impl_->gz) throw DataError("cannot open '" + path.string() + "'");
  } else {
    impl_->plain.open(path, std::ios::binary);
    if (!impl_->plain) throw DataError("cannot open '" + path.string() + "'");
  }
}

LineReader::~LineReader() = default;
LineReader::LineReader(LineReader&&) noexcept = default;
LineReader& LineReader::operator=(LineReader&&) noexcept = default;

std::optional<std::string> LineReader::next() {
  std::string line;
  if (impl_->gz) {
    char buf[65536];
    bool any = false;
    while (gzgets(impl_->gz, buf, sizeof buf)) {
      any = true;
      line += buf;
      if (!line.empty() && line.back() == '\n') break;
    }
    if (!any) return std::nullopt;
    if (!line.empty() && line.back() == '\n') line.pop_back();
  } else {
    if (!std::getline(impl_->plain, line)) return std::nullopt;
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  LineReader reader(path);
  std::vector<std::string> lines;
  while (auto line = reader.next()) lines.push_back(std::move(*line));
  return lines;
}

std::vector<std::filesystem::path> expand_inputs(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw DataError("input '" + path.string() + "' does not exist");
  if (!std::filesystem::is_directory(path)) return {path};
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(path))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  auto out = open_output(path);
  out << content;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace patchforge
