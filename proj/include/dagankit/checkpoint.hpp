#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dagankit/params.hpp"

namespace dagankit {

// Thrown for malformed checkpoint files (bad magic, version, CRC, names).
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t steps = 0;
};

// Binary layout: magic "DAGN", format version u32, entry count u32, then per
// entry: name length u16 + UTF-8 name, rank u8, extents u32 each, values as
// little-endian f32; trailing CRC32 over all preceding bytes. Run metadata
// travels as reserved "meta/..." entries (16-bit limbs, exact in f32).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<const ParamStore*>& nets,
                     const CheckpointMeta& meta);

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, Tensor>> entries;  // qualified name -> values
};

Checkpoint load_checkpoint(const std::string& path);

// Copies entries into the stores (matching on "<prefix>.<param>" names).
// Unknown names in the checkpoint and params missing from it are rejected.
void apply_checkpoint(const Checkpoint& ckpt, const std::vector<ParamStore*>& nets);

std::uint32_t crc32_ieee(const unsigned char* data, std::size_t n, std::uint32_t seed = 0);

}  // namespace dagankit
