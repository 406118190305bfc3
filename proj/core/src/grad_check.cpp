#include "mkc/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mkc/errors.hpp"
#include "mkc/random.hpp"

namespace mkc {
namespace {

double evaluate(const MultiFn& f, const std::vector<Tensor>& points) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(points.size());
  for (const auto& p : points) leaves.push_back(g.leaf(p, false));
  const Var out = f(g, leaves);
  if (out.value().size() != 1) {
    throw ConfigError("grad_check: function is not scalar-valued, shape " +
                      shape_str(out.shape()));
  }
  return out.value().item();
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t max_coords,
                                     std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (max_coords == 0 || max_coords >= n) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < max_coords; ++i) {
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  }
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(const MultiFn& f, const std::vector<Tensor>& points,
                           const GradCheckOptions& opt) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> leaves;
    for (const auto& p : points) leaves.push_back(g.leaf(p, true));
    const Var out = f(g, leaves);
    g.backward(out);
    for (const auto& v : leaves) analytic.push_back(g.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor> probe = points;
  const double base = evaluate(f, probe);
  for (std::size_t t = 0; t < points.size(); ++t) {
    for (std::size_t i :
         pick_coords(points[t].size(), opt.max_coords, derive_seed(opt.seed, t))) {
      const double x0 = points[t][i];
      probe[t][i] = x0 + opt.step;
      const double fp = evaluate(f, probe);
      probe[t][i] = x0 - opt.step;
      const double fm = evaluate(f, probe);
      probe[t][i] = x0;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("grad_check: non-finite value probing input " +
                           std::to_string(t) + " coordinate " + std::to_string(i));
      }
      const double fwd = (fp - base) / opt.step;
      const double bwd = (base - fm) / opt.step;
      const double scale = std::max({1.0, std::abs(fwd), std::abs(bwd)});
      if (std::abs(fwd - bwd) > opt.kink_threshold * scale) {
        report.excluded.push_back({t, i});
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double a = analytic[t][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++report.probed;
      if (err >= report.max_rel_err) {
        report.max_rel_err = err;
        report.worst = {t, i};
      }
    }
  }
  report.pass = report.max_rel_err <= opt.tol;
  return report;
}

GradCheckReport grad_check(const SingleFn& f, const Tensor& point,
                           const GradCheckOptions& options) {
  return grad_check(
      [&f](Graph& g, std::span<const Var> leaves) { return f(g, leaves[0]); },
      std::vector<Tensor>{point}, options);
}

}  // namespace mkc
