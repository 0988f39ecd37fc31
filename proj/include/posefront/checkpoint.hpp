#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "posefront/harness.hpp"

namespace posefront {

// Binary layout, all integers and floats little-endian:
//   magic "PFCKPT\0\0" | u32 version
//   u64 dim_in | u64 hidden | u64 dim | u64 num_identities | u64 block_count
//   u8 use_progressive | u8 fixed_gate | f64 gate_steepness | f64 threshold * block_count
//   tensors: encoder W1 b1 W2 b2, then per block (f64 threshold tag, W1 b1 W2 b2),
//   then classifier W b. Each tensor is u32 rank | u64 rows | u64 cols | f64 * rows*cols.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Model& model);
// Throws IoError on a bad magic, unsupported version, truncation or shape mismatch.
Model deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace posefront
