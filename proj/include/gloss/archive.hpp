#pragma once

// GTAR weight archive:
//   "GTAR" | u32 LE version (1) | u64 LE manifest length | JSON manifest | payload
// The manifest carries "config", "vocab" and "tensors" ({name, dtype:"f32",
// shape, offset, byte_len}); offsets are relative to the payload start and
// tensors are row-major little-endian f32.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gloss/model.hpp"

namespace gloss {

inline constexpr std::uint32_t kArchiveVersion = 1;

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(const std::vector<std::uint8_t>& bytes);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
/// Throws FormatError naming the offending tensor on any structural mismatch.
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace gloss
