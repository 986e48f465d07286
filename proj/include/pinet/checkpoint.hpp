#pragma once

#include <filesystem>
#include <optional>

#include "pinet/network.hpp"

namespace pinet {

// Layout (all integers and floats little-endian):
//   "PINETCKP"                      8-byte magic
//   u32 format version              (kCheckpointVersion)
//   u32 input_width, u32 input_height
//   u32 conv layer count L, then L x u32 channel counts
//   u32 hidden, u32 num_classes, u64 seed
//   u64 parameter count
//   f32 x parameter count           tensors in NetworkParams declared order
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const NetworkParams<float>& params, const std::filesystem::path& path);

/// Throws FormatError on a bad or truncated file, ConfigError when `expected`
/// is given and differs from the stored configuration.
NetworkParams<float> load_checkpoint(const std::filesystem::path& path,
                                     const std::optional<NetworkConfig>& expected = std::nullopt);

}  // namespace pinet
