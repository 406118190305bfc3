#include "mkc/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "mkc/errors.hpp"
#include "mkc/ops.hpp"

namespace mkc {
namespace {

constexpr std::size_t kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr std::array<double, 5> kScaleWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
// Floor for per-scale terms in the differentiable form (fractional powers
// of zero have unbounded slope).
constexpr double kTermFloor = 1e-6;

std::vector<double> gaussian_taps() {
  std::vector<double> taps(kWindow);
  const double mid = (kWindow - 1) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - mid;
    taps[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    sum += taps[i];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

// Valid separable filtering of a single plane (h x w).
std::vector<double> filter_plane(const std::vector<double>& in, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
  const std::size_t t = taps.size(), oh = h - t + 1, ow = w - t + 1;
  std::vector<double> tmp(h * ow, 0.0), out(oh * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t i = 0; i < t; ++i) tmp[y * ow + x] += taps[i] * in[y * w + x + i];
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t x = 0; x < ow; ++x) out[y * ow + x] += taps[i] * tmp[(y + i) * ow + x];
  return out;
}

std::vector<double> pool_plane(const std::vector<double>& in, std::size_t h, std::size_t w) {
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      out[y * ow + x] = 0.25 * (in[2 * y * w + 2 * x] + in[2 * y * w + 2 * x + 1] +
                                in[(2 * y + 1) * w + 2 * x] + in[(2 * y + 1) * w + 2 * x + 1]);
  return out;
}

struct ScaleStats {
  double cs = 0.0;    // mean contrast-structure term
  double ssim = 0.0;  // mean luminance * contrast-structure
};

ScaleStats scale_stats(const std::vector<double>& a, const std::vector<double>& b,
                       std::size_t h, std::size_t w, const std::vector<double>& taps) {
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_plane(a, h, w, taps);
  const auto mu_b = filter_plane(b, h, w, taps);
  const auto s_aa = filter_plane(aa, h, w, taps);
  const auto s_bb = filter_plane(bb, h, w, taps);
  const auto s_ab = filter_plane(ab, h, w, taps);
  ScaleStats st;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = s_aa[i] - mu_a[i] * mu_a[i];
    const double vb = s_bb[i] - mu_b[i] * mu_b[i];
    const double cov = s_ab[i] - mu_a[i] * mu_b[i];
    const double cs = (2.0 * cov + kC2) / (va + vb + kC2);
    const double l = (2.0 * mu_a[i] * mu_b[i] + kC1) /
                     (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1);
    st.cs += cs;
    st.ssim += l * cs;
  }
  st.cs /= static_cast<double>(mu_a.size());
  st.ssim /= static_cast<double>(mu_a.size());
  return st;
}

void check_pair(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                      shape_str(b));
  }
  if (a.size() != 3) {
    throw ConfigError(std::string(op) + ": expected [h,w,c] images, got " + shape_str(a));
  }
}

double poly(const std::array<double, 4>& c, double t) {
  return ((c[3] * t + c[2]) * t + c[1]) * t + c[0];
}

double poly_antiderivative(const std::array<double, 4>& c, double t) {
  return (((c[3] / 4.0 * t + c[2] / 3.0) * t + c[1] / 2.0) * t + c[0]) * t;
}

struct Overlap {
  double lo;
  double hi;
};

Overlap overlap(const CubicFit& a, const CubicFit& b) {
  return {std::max(a.min_psnr, b.min_psnr), std::min(a.max_psnr, b.max_psnr)};
}

}  // namespace

double mse(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) {
    throw ConfigError("mse: shape mismatch " + shape_str(x.shape()) + " vs " +
                      shape_str(y.shape()));
  }
  if (x.size() == 0) throw ConfigError("mse: empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

double psnr(const Tensor& x, const Tensor& y) {
  const double m = mse(x, y);
  if (m == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / m);
}

std::size_t ms_ssim_scales(std::size_t height, std::size_t width) {
  std::size_t h = height, w = width, scales = 0;
  while (scales < kScaleWeights.size() && h >= kWindow && w >= kWindow) {
    ++scales;
    h /= 2;
    w /= 2;
  }
  if (scales == 0) {
    throw ConfigError("ms_ssim: image " + std::to_string(height) + "x" +
                      std::to_string(width) + " smaller than the 11x11 window");
  }
  return scales;
}

std::vector<double> ms_ssim_weights(std::size_t scales) {
  std::vector<double> w(kScaleWeights.begin(), kScaleWeights.begin() + scales);
  // The published weights sum to 1.0001 and are used as-is at full depth.
  if (scales == kScaleWeights.size()) return w;
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= s;
  return w;
}

double ms_ssim(const Tensor& x, const Tensor& y) {
  check_pair(x.shape(), y.shape(), "ms_ssim");
  const std::size_t scales = ms_ssim_scales(x.dim(0), x.dim(1));
  const auto weights = ms_ssim_weights(scales);
  const auto taps = gaussian_taps();
  const std::size_t c = x.dim(2);
  double total = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t h = x.dim(0), w = x.dim(1);
    std::vector<double> a(h * w), b(h * w);
    for (std::size_t p = 0; p < h * w; ++p) {
      a[p] = x[p * c + k];
      b[p] = y[p * c + k];
    }
    double value = 1.0;
    for (std::size_t s = 0; s < scales; ++s) {
      const ScaleStats st = scale_stats(a, b, h, w, taps);
      const double term = s + 1 == scales ? st.ssim : st.cs;
      value *= std::pow(std::max(term, 0.0), weights[s]);
      if (s + 1 < scales) {
        a = pool_plane(a, h, w);
        b = pool_plane(b, h, w);
        h /= 2;
        w /= 2;
      }
    }
    total += value;
  }
  return total / static_cast<double>(c);
}

Var ms_ssim(Var x, Var y) {
  check_pair(x.shape(), y.shape(), "ms_ssim");
  const std::size_t scales = ms_ssim_scales(x.shape()[0], x.shape()[1]);
  const auto weights = ms_ssim_weights(scales);
  const auto taps = gaussian_taps();
  Var value;
  for (std::size_t s = 0; s < scales; ++s) {
    Var mu_a = separable_filter_valid(x, taps);
    Var mu_b = separable_filter_valid(y, taps);
    Var s_aa = separable_filter_valid(square(x), taps);
    Var s_bb = separable_filter_valid(square(y), taps);
    Var s_ab = separable_filter_valid(x * y, taps);
    Var mu_aa = square(mu_a), mu_bb = square(mu_b), mu_ab = mu_a * mu_b;
    Var cs = (2.0 * (s_ab - mu_ab) + kC2) / ((s_aa - mu_aa) + (s_bb - mu_bb) + kC2);
    Var term;
    if (s + 1 == scales) {
      Var l = (2.0 * mu_ab + kC1) / (mu_aa + mu_bb + kC1);
      term = channel_mean(l * cs);
    } else {
      term = channel_mean(cs);
    }
    Var powered = pow(clamp_min(term, kTermFloor), weights[s]);
    value = value.valid() ? value * powered : powered;
    if (s + 1 < scales) {
      x = avg_pool2(x);
      y = avg_pool2(y);
    }
  }
  return mean(value);
}

double delta_bpp(double bpp, double baseline) {
  if (!(baseline > 0.0)) throw ConfigError("delta_bpp: baseline must be positive");
  return (bpp - baseline) / baseline * 100.0;
}

RDCurve::RDCurve(std::vector<RDPoint> points) : points_(std::move(points)) {
  std::stable_sort(points_.begin(), points_.end(),
                   [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (!(points_[i].bpp > points_[i - 1].bpp)) {
      throw ConfigError("rd curve: bpp values must be strictly increasing");
    }
    if (points_[i].psnr < points_[i - 1].psnr) {
      warnings_.push_back("rd curve: psnr decreases between bpp " +
                          std::to_string(points_[i - 1].bpp) + " and " +
                          std::to_string(points_[i].bpp));
    }
  }
}

double CubicFit::operator()(double psnr) const {
  return poly(coeff, (psnr - center) / scale);
}

double CubicFit::integral(double a, double b) const {
  const double ta = (a - center) / scale, tb = (b - center) / scale;
  return scale * (poly_antiderivative(coeff, tb) - poly_antiderivative(coeff, ta));
}

CubicFit fit_log_rate(const RDCurve& curve) {
  std::vector<RDPoint> pts;
  for (const auto& p : curve.points()) {
    if (std::isfinite(p.psnr)) pts.push_back(p);
  }
  if (pts.size() < 4) {
    throw ConfigError("bd-rate: a curve needs at least 4 points with finite psnr, got " +
                      std::to_string(pts.size()));
  }
  CubicFit fit;
  fit.min_psnr = fit.max_psnr = pts[0].psnr;
  double sum = 0.0;
  for (const auto& p : pts) {
    fit.min_psnr = std::min(fit.min_psnr, p.psnr);
    fit.max_psnr = std::max(fit.max_psnr, p.psnr);
    sum += p.psnr;
  }
  fit.center = sum / static_cast<double>(pts.size());
  fit.scale = std::max(0.5 * (fit.max_psnr - fit.min_psnr), 1e-12);

  Eigen::MatrixXd a(pts.size(), 4);
  Eigen::VectorXd b(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!(pts[i].bpp > 0.0)) throw ConfigError("bd-rate: bpp must be positive");
    const double t = (pts[i].psnr - fit.center) / fit.scale;
    a(i, 0) = 1.0;
    a(i, 1) = t;
    a(i, 2) = t * t;
    a(i, 3) = t * t * t;
    b(i) = std::log10(pts[i].bpp);
  }
  const Eigen::Vector4d c = a.colPivHouseholderQr().solve(b);
  for (int i = 0; i < 4; ++i) fit.coeff[i] = c(i);
  return fit;
}

double bd_rate(const RDCurve& test, const RDCurve& anchor) {
  const CubicFit ft = fit_log_rate(test);
  const CubicFit fa = fit_log_rate(anchor);
  const Overlap o = overlap(ft, fa);
  if (!(o.hi > o.lo)) throw ConfigError("bd-rate: curves have no PSNR overlap");
  const double avg = (ft.integral(o.lo, o.hi) - fa.integral(o.lo, o.hi)) / (o.hi - o.lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

SavingsCurve rate_savings_curve(const RDCurve& test, const RDCurve& anchor,
                                const std::vector<double>& quality_grid) {
  const CubicFit ft = fit_log_rate(test);
  const CubicFit fa = fit_log_rate(anchor);
  const Overlap o = overlap(ft, fa);
  SavingsCurve out;
  for (double q : quality_grid) {
    if (q < o.lo || q > o.hi) {
      out.warnings.push_back("rate savings: psnr " + std::to_string(q) +
                             " outside overlap; omitted");
      continue;
    }
    out.points.push_back({q, (1.0 - std::pow(10.0, ft(q) - fa(q))) * 100.0});
  }
  return out;
}

}  // namespace mkc
