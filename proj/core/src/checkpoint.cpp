#include "patchforge/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <sstream>

#include "patchforge/error.hpp"
#include "patchforge/io.hpp"

namespace patchforge {
namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoints assume little-endian");

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Cursor {
 public:
  Cursor(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  const char* take(std::size_t n) {
    if (n > end_ - pos_) throw DataError("checkpoint truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    std::memcpy(&v, take(8), 8);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const char* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::string header_text(const Checkpoint& info) {
  std::ostringstream h;
  const ModelConfig& c = info.config;
  h << "vocab_size=" << c.vocab_size << '\n'
    << "d_model=" << c.d_model << '\n'
    << "n_heads=" << c.n_heads << '\n'
    << "n_layers=" << c.n_layers << '\n'
    << "d_ff=" << c.d_ff << '\n'
    << "max_positions=" << c.max_positions << '\n';
  h.precision(17);
  h << "dropout=" << c.dropout << '\n';
  h << "codec_fingerprint=" << info.codec_fingerprint << '\n';
  for (const auto& [k, v] : info.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ConfigError("checkpoint metadata must not contain '=' in keys or newlines");
    h << "meta." << k << '=' << v << '\n';
  }
  return h.str();
}

Checkpoint parse_header(const std::string& text) {
  Checkpoint info;
  std::istringstream in(text);
  std::string line;
  auto to_int = [](const std::string& v) {
    try {
      return std::stoi(v);
    } catch (const std::exception&) {
      throw DataError("checkpoint header value '" + v + "' is not an integer");
    }
  };
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint header line without '='");
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "vocab_size") info.config.vocab_size = to_int(v);
    else if (k == "d_model") info.config.d_model = to_int(v);
    else if (k == "n_heads") info.config.n_heads = to_int(v);
    else if (k == "n_layers") info.config.n_layers = to_int(v);
    else if (k == "d_ff") info.config.d_ff = to_int(v);
    else if (k == "max_positions") info.config.max_positions = to_int(v);
    else if (k == "dropout") info.config.dropout = std::stod(v);
    else if (k == "codec_fingerprint") info.codec_fingerprint = std::stoull(v);
    else if (k.starts_with("meta.")) info.metadata[k.substr(5)] = v;
    else throw DataError("unknown checkpoint header key '" + k + "'");
  }
  return info;
}

}  // namespace

std::string serialize_checkpoint(const Transformer<float>& model, const Checkpoint& given) {
  Checkpoint info = given;
  info.config = model.config();
  std::string out(kMagic, sizeof kMagic);
  const std::string header = header_text(info);
  put_u64(out, header.size());
  out += header;
  put_u64(out, model.parameters().size());
  for (const auto& p : model.parameters()) {
    put_u64(out, p.name.size());
    out += p.name;
    put_u32(out, 2);
    put_u64(out, p.value.rows());
    put_u64(out, p.value.cols());
    out.append(reinterpret_cast<const char*>(p.value.data()), p.value.size() * sizeof(float));
  }
  put_u32(out, crc(out.data(), out.size()));
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Transformer<float>& model,
                     const Checkpoint& info) {
  write_file(path, serialize_checkpoint(model, info));
}

LoadedCheckpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw DataError("not a patchforge checkpoint");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc(bytes.data(), body)) throw DataError("checkpoint checksum mismatch");

  Cursor cur(bytes, body);
  cur.take(sizeof kMagic);
  const std::uint64_t hlen = cur.u64();
  Checkpoint info = parse_header(std::string(cur.take(hlen), hlen));
  LoadedCheckpoint loaded{info, Transformer<float>(info.config)};
  const std::uint64_t count = cur.u64();
  if (count != loaded.model.parameters().size())
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                    std::to_string(loaded.model.parameters().size()));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t nlen = cur.u64();
    const std::string name(cur.take(nlen), nlen);
    if (cur.u32() != 2) throw DataError("tensor '" + name + "' is not rank 2");
    const std::uint64_t rows = cur.u64(), cols = cur.u64();
    Parameter<float>& p = loaded.model.parameter(name);
    if (rows != p.value.rows() || cols != p.value.cols())
      throw DataError("tensor '" + name + "' has the wrong shape");
    std::memcpy(p.value.data(), cur.take(p.value.size() * sizeof(float)),
                p.value.size() * sizeof(float));
  }
  if (!cur.done()) throw DataError("trailing bytes in checkpoint");
  return loaded;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

}  // namespace patchforge
