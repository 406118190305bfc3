#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mkc/graph.hpp"
#include "mkc/random.hpp"

namespace mkc {

// Mask sampling strategies applied to a feature block F[h, w, c].
//   cube          zero individual elements, agnostic to spatial/channel axes
//   spatial       zero whole spatial positions across every channel
//   channel       zero whole channels
//   spatial_merge replace 2x2 spatial blocks by their per-channel mean
enum class MaskStrategy { kCube, kSpatial, kChannel, kSpatialMerge };

std::string_view to_string(MaskStrategy s);
MaskStrategy parse_mask_strategy(std::string_view name);

struct MaskSpec {
  MaskStrategy strategy = MaskStrategy::kCube;
  double ratio = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

// round(ratio * units), half away from zero.
std::size_t mask_count(double ratio, std::size_t units);

// k distinct indices drawn uniformly from [0, n) by a seeded partial
// Fisher-Yates shuffle, returned in ascending order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    std::uint64_t seed);

// 0/1 multiplier for the zeroing strategies (cube, spatial, channel).
Tensor mask_multiplier(const Shape& shape, const MaskSpec& spec);

Tensor cube_mask(const Tensor& f, const MaskSpec& spec);
Tensor structured_mask(const Tensor& f, const MaskSpec& spec);
Tensor spatial_merge(const Tensor& f, const MaskSpec& spec);
// Dispatches on spec.strategy.
Tensor apply_mask(const Tensor& f, const MaskSpec& spec);

// Graph form; the node is named after the strategy ("cube_mask",
// "spatial_mask", "channel_mask", "spatial_merge").
Var apply_mask(Var f, const MaskSpec& spec);

// Learnable channel gate shared by the channel mask (select) and channel
// completion (complete) ends of a model.
struct ChannelGate {
  Tensor v_mat;   // [N] selection scores
  Tensor tokens;  // [N] completion value per channel
  std::size_t keep = 0;  // M
  bool learnable = true;

  std::size_t channels() const { return v_mat.size(); }
  void validate() const;

  static ChannelGate random(std::size_t channels, std::size_t keep, Rng& rng,
                            bool learnable = true);
};

// M = round(keep_ratio * N); must land in [1, N].
std::size_t keep_count(double keep_ratio, std::size_t channels);

// Indices of the M largest scores, ties to the lower index, ascending.
std::vector<std::size_t> top_channels(std::span<const double> scores, std::size_t keep);

struct GateSelection {
  Tensor y;
  std::vector<std::size_t> kept;
};

GateSelection lcmm_select(const Tensor& f, const ChannelGate& gate);
Tensor lccm_complete(const Tensor& y_hat, std::span<const std::size_t> kept,
                     const ChannelGate& gate);

struct GateVars {
  Var y;
  std::vector<std::size_t> kept;
};

// Forward passes the kept channels through unchanged. Backward is
// straight-through for F and treats each kept channel as if scaled by
// sigmoid(v_mat_i), so v_mat receives d/dv = sum(grad * F) * sigmoid'(v).
GateVars lcmm_select(Var f, Var v_mat, std::size_t keep);
// Scatters kept channels back into place and fills the rest with tokens.
Var lccm_complete(Var y_hat, std::span<const std::size_t> kept, Var tokens);

}  // namespace mkc
