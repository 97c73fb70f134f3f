#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

#include "salmod/model.hpp"

namespace salmod {

/// Layout (all integers little-endian):
///   "SALMODCK" | u32 version | u64 config digest | u64 tensor count
///   per tensor, sorted by name:
///     u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 values
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t fnv1a64(std::string_view bytes);

void save_checkpoint(const ModelState& state, std::uint64_t config_digest,
                     const std::filesystem::path& path);

struct Checkpoint {
  std::uint64_t config_digest = 0;
  ModelState state;  // provenance is not stored
};

/// Throws FormatError on a truncated or foreign file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace salmod
