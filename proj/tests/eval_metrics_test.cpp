#include <gtest/gtest.h>

#include <cmath>

#include "mkc/errors.hpp"
#include "mkc/graph.hpp"
#include "mkc/grad_check.hpp"
#include "mkc/metrics.hpp"
#include "mkc/ops.hpp"
#include "test_util.hpp"

namespace mkc {
namespace {

using testing::random_tensor;

TEST(Psnr, KnownMse) {
  const Tensor a({4, 4, 3}, 0.5);
  const Tensor b({4, 4, 3}, 0.6);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
  EXPECT_EQ(psnr(a, a), kPsnrIdentical);
  EXPECT_THROW(psnr(a, Tensor({4, 4, 1})), ConfigError);
}

TEST(MsSsim, IdenticalImagesScoreOne) {
  const Tensor x = random_tensor({64, 64, 3}, 1, 0, 1);
  EXPECT_NEAR(ms_ssim(x, x), 1.0, 1e-12);
}

TEST(MsSsim, ConstantImagesClosedForm) {
  // Only the luminance term survives: (2*0.5*0.25 + C1) / (0.25 + 0.0625 + C1)
  // at the last of five scales, weight 0.1333.
  EXPECT_NEAR(ms_ssim(Tensor({192, 192, 1}, 0.5), Tensor({192, 192, 1}, 0.25)),
              0.9707033421609148, 1e-12);
}

TEST(MsSsim, ScaleCountFollowsImageSize) {
  EXPECT_EQ(ms_ssim_scales(256, 256), 5u);
  EXPECT_EQ(ms_ssim_scales(176, 300), 5u);
  EXPECT_EQ(ms_ssim_scales(175, 300), 4u);
  EXPECT_EQ(ms_ssim_scales(64, 64), 3u);
  EXPECT_EQ(ms_ssim_scales(11, 11), 1u);
  EXPECT_THROW(ms_ssim_scales(10, 64), ConfigError);
  const auto w = ms_ssim_weights(3);
  EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-15);
  EXPECT_EQ(ms_ssim_weights(5)[4], 0.1333);
}

TEST(MsSsim, DifferentiableFormMatchesMetric) {
  const Tensor x = random_tensor({48, 48, 3}, 2, 0, 1);
  Tensor y = x;
  Rng rng(3);
  for (auto& v : y.data()) v = std::clamp(v + 0.05 * rng.normal(), 0.0, 1.0);
  Graph g;
  EXPECT_NEAR(ms_ssim(g.constant(x), g.constant(y)).value().item(), ms_ssim(x, y), 1e-12);
}

TEST(MsSsim, GradientMatchesFiniteDifferences) {
  const Tensor x = random_tensor({24, 24, 1}, 4, 0, 1);
  const Tensor target = random_tensor({24, 24, 1}, 5, 0, 1);
  const auto f = [&](Graph& g, Var v) { return ms_ssim(v, g.constant(target)); };
  const auto r = grad_check(f, x, {.step = 1e-5, .tol = 1e-4, .max_coords = 60, .seed = 6});
  EXPECT_TRUE(r.pass) << r.max_rel_err;
}

TEST(DeltaBpp, MaskingRatioTable) {
  EXPECT_NEAR(delta_bpp(0.4133, 0.4298), -3.83, 0.01);
  EXPECT_NEAR(delta_bpp(0.4343, 0.4298), 1.04, 0.01);
  EXPECT_NEAR(delta_bpp(0.4664, 0.4382), 6.43, 0.01);
  EXPECT_THROW(delta_bpp(0.4, 0.0), ConfigError);
}

RDCurve synthetic_curve(double rate_factor) {
  std::vector<RDPoint> pts;
  for (double q : {28.0, 30.5, 33.0, 35.0, 37.5}) {
    pts.push_back({rate_factor * std::pow(10.0, 0.08 * q - 2.9), q, 0.0});
  }
  return RDCurve(pts);
}

TEST(BdRate, IdenticalDoubledAndHalvedCurves) {
  const RDCurve base = synthetic_curve(1.0);
  EXPECT_NEAR(bd_rate(base, base), 0.0, 1e-9);
  EXPECT_NEAR(bd_rate(synthetic_curve(2.0), base), 100.0, 1e-9);
  EXPECT_NEAR(bd_rate(synthetic_curve(0.5), base), -50.0, 1e-9);
}

TEST(BdRate, NeedsFourPointsAndOverlap) {
  std::vector<RDPoint> three = {{0.1, 28, 0}, {0.2, 30, 0}, {0.3, 32, 0}};
  EXPECT_THROW(bd_rate(RDCurve(three), synthetic_curve(1.0)), ConfigError);
  std::vector<RDPoint> high = {{1, 50, 0}, {2, 51, 0}, {3, 52, 0}, {4, 53, 0}};
  EXPECT_THROW(bd_rate(RDCurve(high), synthetic_curve(1.0)), ConfigError);
}

TEST(RdCurve, SortsByRateAndWarnsOnDip) {
  const RDCurve c({{0.3, 31, 0}, {0.1, 28, 0}, {0.2, 29.5, 0}, {0.4, 30.9, 0}});
  EXPECT_EQ(c.points().front().bpp, 0.1);
  EXPECT_EQ(c.warnings().size(), 1u);
}

TEST(RateSavings, ConstantFactorAndOutOfRangeGrid) {
  const SavingsCurve s =
      rate_savings_curve(synthetic_curve(0.8), synthetic_curve(1.0), {27.0, 30.0, 34.0, 40.0});
  ASSERT_EQ(s.points.size(), 2u);
  EXPECT_EQ(s.warnings.size(), 2u);
  for (const auto& p : s.points) EXPECT_NEAR(p.savings, 20.0, 1e-9);
}

}  // namespace
}  // namespace mkc
