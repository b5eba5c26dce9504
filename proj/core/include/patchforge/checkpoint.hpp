#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "patchforge/transformer.hpp"

namespace patchforge {

// Binary container: magic, a key=value text header (model config, codec
// fingerprint, caller metadata), named float32 tensors and a CRC-32 trailer.
struct Checkpoint {
  ModelConfig config;
  std::uint64_t codec_fingerprint = 0;
  std::map<std::string, std::string> metadata;
};

std::string serialize_checkpoint(const Transformer<float>& model, const Checkpoint& info);
void save_checkpoint(const std::filesystem::path& path, const Transformer<float>& model,
                     const Checkpoint& info);

struct LoadedCheckpoint {
  Checkpoint info;
  Transformer<float> model;
};

// Throws DataError on a bad magic, checksum, shape or missing tensor.
LoadedCheckpoint parse_checkpoint(const std::string& bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace patchforge
