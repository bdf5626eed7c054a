#pragma once

#include "ifes/network.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ifes {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (all integers little-endian):
//   "IFES"                      4 bytes
//   version                     u32
//   stages, variant, scale      u32 x3
//   seed                        u64
//   n_ivif, ivif_channels[]     u32, u32 x n_ivif
//   n_shfe, shfe_channels[]     u32, u32 x n_shfe
//   per layer in declaration order: weights then bias, f64 each
//   crc32 of every preceding byte
std::vector<unsigned char> serialize_network(const Network& net);

/// Throws IntegrityError on bad magic, version, CRC or length.
Network deserialize_network(const std::vector<unsigned char>& bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace ifes
