#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mkc/model.hpp"

namespace mkc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, little-endian throughout:
//   "MKCK" | version u32 | text_len u32 | text (key=value lines: model
//   config and info.* entries) | block_count u32 | blocks
// and each block is
//   name_len u16 | name | ndim u8 | dims u32 x ndim | values f64 x numel.
std::vector<std::uint8_t> serialize_checkpoint(const ModelState& m);

// Rebuilds the model from its embedded config and checks every block
// against the freshly initialised layout; a missing, unexpected or
// mis-shaped block raises DataError naming it. When `expected` is given the
// stored architecture must match it. Truncated or corrupt input raises
// DataError.
ModelState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                  const std::optional<ModelConfig>& expected = std::nullopt);

void save_checkpoint(const ModelState& m, const std::string& path);
ModelState load_checkpoint(const std::string& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

// True when two configs produce the same parameter layout (the loss and
// seed may differ).
bool same_layout(const ModelConfig& a, const ModelConfig& b);

}  // namespace mkc
