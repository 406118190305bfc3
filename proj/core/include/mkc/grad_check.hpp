#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mkc/graph.hpp"

namespace mkc {

struct GradCheckOptions {
  double step = 1e-4;
  double tol = 1e-4;
  // Probe at most this many coordinates per input (0 = all), chosen by seed.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  // One-sided slopes differing by more than this fraction of
  // max(1, |slope|) mark a coordinate as non-differentiable.
  double kink_threshold = 0.1;
};

struct Coordinate {
  std::size_t input = 0;
  std::size_t index = 0;
  friend bool operator==(const Coordinate&, const Coordinate&) = default;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  Coordinate worst;
  std::size_t probed = 0;
  std::vector<Coordinate> excluded;
  bool pass = false;
};

// f builds a scalar-valued graph from leaves holding the given points.
using MultiFn = std::function<Var(Graph&, std::span<const Var>)>;
using SingleFn = std::function<Var(Graph&, Var)>;

// Compares reverse-mode gradients against central differences. The relative
// error of a coordinate is |analytic - numeric| / max(1, |analytic|).
GradCheckReport grad_check(const MultiFn& f, const std::vector<Tensor>& points,
                           const GradCheckOptions& options = {});
GradCheckReport grad_check(const SingleFn& f, const Tensor& point,
                           const GradCheckOptions& options = {});

}  // namespace mkc
