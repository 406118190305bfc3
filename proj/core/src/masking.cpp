#include "mkc/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mkc/errors.hpp"

namespace mkc {
namespace {

void require_feature(const Tensor& f, const char* op) {
  if (f.rank() != 3) {
    throw ConfigError(std::string(op) + ": expected [h,w,c] feature, got " +
                      shape_str(f.shape()));
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Blocks chosen for merging, as indices into the (h/2) x (w/2) block grid.
std::vector<std::size_t> merge_blocks(const Shape& shape, const MaskSpec& spec) {
  if (shape[0] % 2 != 0 || shape[1] % 2 != 0) {
    throw ConfigError("spatial_merge: feature " + shape_str(shape) +
                      " needs even spatial extents; pad by (" +
                      std::to_string(shape[0] % 2) + ", " +
                      std::to_string(shape[1] % 2) + ")");
  }
  const std::size_t blocks = (shape[0] / 2) * (shape[1] / 2);
  return sample_without_replacement(blocks, mask_count(spec.ratio, blocks), spec.seed);
}

void check_kept(std::span<const std::size_t> kept, std::size_t channels) {
  std::vector<bool> seen(channels, false);
  for (auto k : kept) {
    if (k >= channels) {
      throw ConfigError("channel completion: kept index " + std::to_string(k) +
                        " out of range for " + std::to_string(channels) + " channels");
    }
    if (seen[k]) {
      throw ConfigError("channel completion: kept index " + std::to_string(k) +
                        " duplicated");
    }
    seen[k] = true;
  }
}

}  // namespace

std::string_view to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::kCube: return "cube";
    case MaskStrategy::kSpatial: return "spatial";
    case MaskStrategy::kChannel: return "channel";
    case MaskStrategy::kSpatialMerge: return "spatial_merge";
  }
  return "cube";
}

MaskStrategy parse_mask_strategy(std::string_view name) {
  if (name == "cube") return MaskStrategy::kCube;
  if (name == "spatial") return MaskStrategy::kSpatial;
  if (name == "channel") return MaskStrategy::kChannel;
  if (name == "spatial_merge") return MaskStrategy::kSpatialMerge;
  throw ConfigError("unknown mask strategy '" + std::string(name) +
                    "' (expected cube, spatial, channel or spatial_merge)");
}

void MaskSpec::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ConfigError("mask ratio " + std::to_string(ratio) + " outside [0, 1]");
  }
}

std::size_t mask_count(double ratio, std::size_t units) {
  return static_cast<std::size_t>(std::round(ratio * static_cast<double>(units)));
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    std::uint64_t seed) {
  if (k > n) throw ConfigError("cannot sample more indices than available");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0x6d61736bull));
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor mask_multiplier(const Shape& shape, const MaskSpec& spec) {
  spec.validate();
  if (shape.size() != 3) {
    throw ConfigError("mask: expected [h,w,c] feature, got " + shape_str(shape));
  }
  const std::size_t hw = shape[0] * shape[1], c = shape[2];
  Tensor keep(shape, 1.0);
  switch (spec.strategy) {
    case MaskStrategy::kCube:
      for (auto i : sample_without_replacement(hw * c, mask_count(spec.ratio, hw * c),
                                               spec.seed)) {
        keep[i] = 0.0;
      }
      break;
    case MaskStrategy::kSpatial:
      for (auto p : sample_without_replacement(hw, mask_count(spec.ratio, hw), spec.seed)) {
        for (std::size_t k = 0; k < c; ++k) keep[p * c + k] = 0.0;
      }
      break;
    case MaskStrategy::kChannel:
      for (auto k : sample_without_replacement(c, mask_count(spec.ratio, c), spec.seed)) {
        for (std::size_t p = 0; p < hw; ++p) keep[p * c + k] = 0.0;
      }
      break;
    case MaskStrategy::kSpatialMerge:
      throw ConfigError("spatial_merge has no 0/1 multiplier");
  }
  return keep;
}

Tensor cube_mask(const Tensor& f, const MaskSpec& spec) {
  MaskSpec s = spec;
  s.strategy = MaskStrategy::kCube;
  return apply_mask(f, s);
}

Tensor structured_mask(const Tensor& f, const MaskSpec& spec) {
  if (spec.strategy != MaskStrategy::kSpatial && spec.strategy != MaskStrategy::kChannel) {
    throw ConfigError("structured_mask needs the spatial or channel strategy");
  }
  return apply_mask(f, spec);
}

Tensor spatial_merge(const Tensor& f, const MaskSpec& spec) {
  spec.validate();
  require_feature(f, "spatial_merge");
  const std::size_t w = f.dim(1), c = f.dim(2), bw = w / 2;
  Tensor out = f;
  for (auto b : merge_blocks(f.shape(), spec)) {
    const std::size_t y0 = 2 * (b / bw), x0 = 2 * (b % bw);
    for (std::size_t k = 0; k < c; ++k) {
      const double m = 0.25 * (f.at(y0, x0, k) + f.at(y0, x0 + 1, k) +
                               f.at(y0 + 1, x0, k) + f.at(y0 + 1, x0 + 1, k));
      out.at(y0, x0, k) = m;
      out.at(y0, x0 + 1, k) = m;
      out.at(y0 + 1, x0, k) = m;
      out.at(y0 + 1, x0 + 1, k) = m;
    }
  }
  return out;
}

Tensor apply_mask(const Tensor& f, const MaskSpec& spec) {
  Graph g;
  return apply_mask(g.constant(f), spec).value();
}

Var apply_mask(Var f, const MaskSpec& spec) {
  spec.validate();
  require_feature(f.value(), "mask");
  if (spec.strategy == MaskStrategy::kSpatialMerge) {
    const Tensor& fv = f.value();
    const std::vector<std::size_t> blocks = merge_blocks(fv.shape(), spec);
    Tensor out = spatial_merge(fv, spec);
    const std::size_t bw = fv.dim(1) / 2, c = fv.dim(2);
    return f.graph().record(
        "spatial_merge", std::move(out), {f},
        [f, blocks, bw, c](Graph& g, const Tensor& go) {
          Tensor& gf = g.grad_buffer(f);
          std::vector<bool> merged(go.size() / c, false);
          const std::size_t w = 2 * bw;
          for (auto b : blocks) {
            const std::size_t y0 = 2 * (b / bw), x0 = 2 * (b % bw);
            const std::size_t p[4] = {y0 * w + x0, y0 * w + x0 + 1, (y0 + 1) * w + x0,
                                      (y0 + 1) * w + x0 + 1};
            for (std::size_t k = 0; k < c; ++k) {
              double s = 0.0;
              for (auto q : p) s += go[q * c + k];
              for (auto q : p) gf[q * c + k] += 0.25 * s;
            }
            for (auto q : p) merged[q] = true;
          }
          for (std::size_t q = 0; q < merged.size(); ++q) {
            if (merged[q]) continue;
            for (std::size_t k = 0; k < c; ++k) gf[q * c + k] += go[q * c + k];
          }
        });
  }

  Tensor keep = mask_multiplier(f.shape(), spec);
  const Tensor& fv = f.value();
  Tensor out(fv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep[i] != 0.0 ? fv[i] : 0.0;
  const char* name = spec.strategy == MaskStrategy::kCube      ? "cube_mask"
                     : spec.strategy == MaskStrategy::kSpatial ? "spatial_mask"
                                                               : "channel_mask";
  return f.graph().record(name, std::move(out), {f},
                          [f, keep = std::move(keep)](Graph& g, const Tensor& go) {
                            Tensor& gf = g.grad_buffer(f);
                            for (std::size_t i = 0; i < go.size(); ++i) {
                              gf[i] += go[i] * keep[i];
                            }
                          });
}

void ChannelGate::validate() const {
  const std::size_t n = v_mat.size();
  if (tokens.size() != n) {
    throw ConfigError("channel gate: " + std::to_string(tokens.size()) +
                      " tokens for " + std::to_string(n) + " channels");
  }
  if (keep < 1 || keep > n) {
    throw ConfigError("channel gate: keep count " + std::to_string(keep) +
                      " outside [1, " + std::to_string(n) + "]");
  }
}

ChannelGate ChannelGate::random(std::size_t channels, std::size_t keep, Rng& rng,
                                bool learnable) {
  ChannelGate g{Tensor({channels}), Tensor({channels}), keep, learnable};
  for (auto& v : g.v_mat.data()) v = rng.normal();
  g.validate();
  return g;
}

std::size_t keep_count(double keep_ratio, std::size_t channels) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) {
    throw ConfigError("gate keep ratio " + std::to_string(keep_ratio) +
                      " outside (0, 1]");
  }
  const std::size_t m = mask_count(keep_ratio, channels);
  if (m < 1 || m > channels) {
    throw ConfigError("gate keep ratio " + std::to_string(keep_ratio) +
                      " leaves " + std::to_string(m) + " of " +
                      std::to_string(channels) + " channels");
  }
  return m;
}

std::vector<std::size_t> top_channels(std::span<const double> scores, std::size_t keep) {
  if (keep > scores.size()) {
    throw ConfigError("channel gate: keep count " + std::to_string(keep) +
                      " exceeds " + std::to_string(scores.size()) + " channels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

GateSelection lcmm_select(const Tensor& f, const ChannelGate& gate) {
  Graph g;
  GateVars v = lcmm_select(g.constant(f), g.constant(gate.v_mat), gate.keep);
  return {v.y.value(), std::move(v.kept)};
}

Tensor lccm_complete(const Tensor& y_hat, std::span<const std::size_t> kept,
                     const ChannelGate& gate) {
  Graph g;
  return lccm_complete(g.constant(y_hat), kept, g.constant(gate.tokens)).value();
}

GateVars lcmm_select(Var f, Var v_mat, std::size_t keep) {
  const Tensor& fv = f.value();
  require_feature(fv, "lcmm_select");
  const std::size_t n = fv.dim(2);
  if (v_mat.value().size() != n) {
    throw ConfigError("lcmm_select: feature has " + std::to_string(n) +
                      " channels but v_mat has " + std::to_string(v_mat.value().size()));
  }
  if (keep < 1 || keep > n) {
    throw ConfigError("lcmm_select: keep count " + std::to_string(keep) +
                      " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> kept = top_channels(v_mat.value().data(), keep);
  const std::size_t hw = fv.dim(0) * fv.dim(1), m = kept.size();
  Tensor y({fv.dim(0), fv.dim(1), m});
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t j = 0; j < m; ++j) y[p * m + j] = fv[p * n + kept[j]];
  }
  Var out = f.graph().record(
      "lcmm_select", std::move(y), {f, v_mat},
      [f, v_mat, kept, hw, n](Graph& g, const Tensor& go) {
        const std::size_t m = kept.size();
        if (g.requires_grad(f)) {
          Tensor& gf = g.grad_buffer(f);
          for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t j = 0; j < m; ++j) gf[p * n + kept[j]] += go[p * m + j];
        }
        if (g.requires_grad(v_mat)) {
          const Tensor& fv = g.value(f);
          const Tensor& vv = g.value(v_mat);
          Tensor& gv = g.grad_buffer(v_mat);
          for (std::size_t j = 0; j < m; ++j) {
            const std::size_t k = kept[j];
            double acc = 0.0;
            for (std::size_t p = 0; p < hw; ++p) acc += go[p * m + j] * fv[p * n + k];
            const double s = sigmoid(vv[k]);
            gv[k] += acc * s * (1.0 - s);
          }
        }
      });
  return {out, std::move(kept)};
}

Var lccm_complete(Var y_hat, std::span<const std::size_t> kept_in, Var tokens) {
  const Tensor& yv = y_hat.value();
  require_feature(yv, "lccm_complete");
  const std::size_t n = tokens.value().size(), m = yv.dim(2);
  if (kept_in.size() != m) {
    throw ConfigError("lccm_complete: " + std::to_string(kept_in.size()) +
                      " kept indices for " + std::to_string(m) + " channels");
  }
  check_kept(kept_in, n);
  std::vector<std::size_t> kept(kept_in.begin(), kept_in.end());
  std::vector<bool> is_kept(n, false);
  for (auto k : kept) is_kept[k] = true;

  const Tensor& tv = tokens.value();
  const std::size_t hw = yv.dim(0) * yv.dim(1);
  Tensor out({yv.dim(0), yv.dim(1), n});
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!is_kept[i]) out[p * n + i] = tv[i];
    }
    for (std::size_t j = 0; j < m; ++j) out[p * n + kept[j]] = yv[p * m + j];
  }
  return y_hat.graph().record(
      "lccm_complete", std::move(out), {y_hat, tokens},
      [y_hat, tokens, kept, is_kept, hw, n](Graph& g, const Tensor& go) {
        const std::size_t m = kept.size();
        if (g.requires_grad(y_hat)) {
          Tensor& gy = g.grad_buffer(y_hat);
          for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t j = 0; j < m; ++j) gy[p * m + j] += go[p * n + kept[j]];
        }
        if (g.requires_grad(tokens)) {
          Tensor& gt = g.grad_buffer(tokens);
          for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t i = 0; i < n; ++i)
              if (!is_kept[i]) gt[i] += go[p * n + i];
        }
      });
}

}  // namespace mkc
