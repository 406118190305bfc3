#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "mkc/graph.hpp"

namespace mkc {

// PSNR reported for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mse(const Tensor& x, const Tensor& y);
// 10 log10(1 / MSE) at peak 1.0; kPsnrIdentical when MSE == 0.
double psnr(const Tensor& x, const Tensor& y);

// MS-SSIM over [h, w, c] images with values in [0, 1]: 11x11 Gaussian window
// (sigma 1.5, valid filtering), 2x2 mean downsampling, C1 = 0.01^2,
// C2 = 0.03^2, scale weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333).
// Up to five scales; smaller images use fewer scales with the leading
// weights renormalised to sum to 1. Per-channel scores are averaged.
double ms_ssim(const Tensor& x, const Tensor& y);
// Differentiable form used as a training distortion. Negative per-scale
// terms are clamped to a small positive floor instead of zero.
Var ms_ssim(Var x, Var y);

std::size_t ms_ssim_scales(std::size_t height, std::size_t width);
std::vector<double> ms_ssim_weights(std::size_t scales);

// (bpp - baseline) / baseline * 100.
double delta_bpp(double bpp, double baseline);

struct RDPoint {
  double bpp = 0.0;
  double psnr = 0.0;
  double msssim = 0.0;
};

// Rate-distortion points sorted by bpp. Non-monotone PSNR only produces a
// warning.
class RDCurve {
 public:
  RDCurve() = default;
  explicit RDCurve(std::vector<RDPoint> points);

  const std::vector<RDPoint>& points() const { return points_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<RDPoint> points_;
  std::vector<std::string> warnings_;
};

// Least-squares cubic log10(bpp) = p(psnr), fitted in a centred variable.
struct CubicFit {
  std::array<double, 4> coeff{};  // in t = (psnr - center) / scale
  double center = 0.0;
  double scale = 1.0;
  double min_psnr = 0.0;
  double max_psnr = 0.0;

  double operator()(double psnr) const;
  // Integral of p over [a, b] in PSNR units.
  double integral(double a, double b) const;
};

CubicFit fit_log_rate(const RDCurve& curve);

// Average log-rate difference of the fitted curves over the overlapping
// PSNR interval, as (10^delta - 1) * 100 percent.
double bd_rate(const RDCurve& test, const RDCurve& anchor);

struct SavingsPoint {
  double psnr = 0.0;
  double savings = 0.0;  // percent
};

struct SavingsCurve {
  std::vector<SavingsPoint> points;
  std::vector<std::string> warnings;
};

// (1 - bpp_test(q) / bpp_anchor(q)) * 100 on the fitted curves; grid points
// outside the overlap are omitted with a warning.
SavingsCurve rate_savings_curve(const RDCurve& test, const RDCurve& anchor,
                                const std::vector<double>& quality_grid);

}  // namespace mkc
