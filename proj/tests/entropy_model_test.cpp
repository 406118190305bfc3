#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mkc/entropy.hpp"
#include "mkc/errors.hpp"
#include "mkc/grad_check.hpp"
#include "mkc/nn.hpp"
#include "mkc/ops.hpp"
#include "test_util.hpp"

namespace mkc {
namespace {

using testing::random_tensor;

// Reference masses computed with 40-digit arithmetic.
TEST(Gaussian, BinProbabilityMatchesReference) {
  EXPECT_NEAR(gaussian_bin_probability(0, 0.0, 1.0), 0.3829249225480262, 1e-15);
  EXPECT_NEAR(gaussian_bin_probability(0, 0.5, 1.0), 0.3413447460685429, 1e-15);
  EXPECT_NEAR(gaussian_bin_probability(1, 0.0, 1.0), 0.2417303374571288, 1e-15);
  EXPECT_NEAR(gaussian_bin_probability(3, 1.2, 2.5), 0.1227454079325945, 1e-15);
  EXPECT_NEAR(gaussian_bin_probability(0, 0.0, 0.11), 0.9999945183173473, 1e-15);
}

TEST(Gaussian, ScaleBelowBoundIsClamped) {
  EXPECT_EQ(gaussian_bin_probability(0, 0.0, 0.01), gaussian_bin_probability(0, 0.0, kSigmaMin));
}

TEST(Gaussian, FarTailHitsFloor) {
  EXPECT_EQ(gaussian_bin_probability(200, 0.0, 1.0), kProbFloor);
  EXPECT_EQ(gaussian_bin_probability(-9, 0.0, 0.5), kProbFloor);
}

TEST(Gaussian, PmfSumsToAboutOne) {
  std::vector<double> pmf(kAlphabetSize);
  gaussian_pmf(2.3, 4.0, pmf);
  const double floors = kAlphabetSize * kProbFloor;  // upper bound on floor mass
  const double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
  EXPECT_GT(total, 1.0 - 1e-9);
  EXPECT_LT(total, 1.0 + floors);
}

TEST(Logistic, BinProbabilityMatchesReference) {
  EXPECT_NEAR(logistic_bin_probability(0, 0.0, 1.0), 0.2449186624037091, 1e-15);
  EXPECT_NEAR(logistic_bin_probability(2, 0.3, 1.7), 0.1153526554115656, 1e-15);
}

TEST(Quantize, RoundsHalfAwayAndClamps) {
  const QuantizedLatent q = quantize(Tensor::of({6}, {0.5, -0.5, 1.49, -2.5, 300.0, -1e6}));
  EXPECT_EQ(q.symbols, (std::vector<std::int32_t>{1, -1, 1, -3, 255, -255}));
}

TEST(Quantize, PerturbationIsBoundedAndSeeded) {
  const Tensor x = random_tensor({4, 4, 3}, 1);
  const Tensor a = train_perturb(x, 5);
  EXPECT_EQ(a, train_perturb(x, 5));
  EXPECT_NE(a, train_perturb(x, 6));
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_GE(a[i] - x[i], -0.5);
    EXPECT_LT(a[i] - x[i], 0.5);
  }
}

TEST(Factorized, RejectsNonPositiveScale) {
  FactorizedPrior p = FactorizedPrior::standard(2);
  p.scale[1] = 0.0;
  EXPECT_THROW(factorized_likelihood(Tensor({1, 1, 2}), p), ConfigError);
  EXPECT_THROW(factorized_likelihood(Tensor({1, 1, 3}), FactorizedPrior::standard(2)),
               ConfigError);
}

TEST(Rate, BitsAreNegativeLog2Likelihood) {
  const Tensor py = Tensor::of({2}, {0.5, 0.25});
  const Tensor pz = Tensor::of({1}, {0.125});
  const RateEstimate r = rate_estimate(py, pz, 4);
  EXPECT_EQ(r.bits_y, 3.0);
  EXPECT_EQ(r.bits_z, 3.0);
  EXPECT_EQ(r.bpp, 1.5);
  Graph g;
  EXPECT_NEAR(total_bits(g.constant(py)).value().item(), 3.0, 1e-15);
}

TEST(GaussianLikelihood, GradientMatchesFiniteDifferences) {
  // Values kept inside the differentiable region: sigma above the bound and
  // |y - mu| within a few scales.
  const Tensor y = random_tensor({3, 3, 2}, 2, -2.0, 2.0);
  const Tensor mu = random_tensor({3, 3, 2}, 3, -1.0, 1.0);
  const Tensor sigma = random_tensor({3, 3, 2}, 4, 0.6, 2.0);
  const auto f = [](Graph&, std::span<const Var> v) {
    return total_bits(gaussian_likelihood(v[0], v[1], v[2]));
  };
  const auto r = grad_check(f, {y, mu, sigma}, {.step = 1e-5, .tol = 1e-4});
  EXPECT_TRUE(r.pass) << r.max_rel_err;
}

TEST(FactorizedLikelihood, GradientMatchesFiniteDifferences) {
  const Tensor z = random_tensor({3, 3, 2}, 5, -2.0, 2.0);
  const Tensor loc = random_tensor({2}, 6, -0.5, 0.5);
  const Tensor scale = random_tensor({2}, 7, 0.5, 1.5);
  const auto f = [](Graph&, std::span<const Var> v) {
    return total_bits(factorized_likelihood(v[0], v[1], v[2]));
  };
  const auto r = grad_check(f, {z, loc, scale}, {.step = 1e-5, .tol = 1e-4});
  EXPECT_TRUE(r.pass) << r.max_rel_err;
}

TEST(GaussianLikelihood, FlooredEntriesOnlyPassRaisingGradients) {
  Graph g;
  Var y = g.leaf(Tensor::of({1}, {20.0}), true);
  Var mu = g.leaf(Tensor::of({1}, {0.0}), true);
  Var sigma = g.leaf(Tensor::of({1}, {1.0}), true);
  Var p = gaussian_likelihood(y, mu, sigma);
  EXPECT_EQ(p.value().item(), kProbFloor);
  g.backward(total_bits(p));
  // Rate falls as P rises, so descent on the pass-through gradient moves y
  // toward mu.
  EXPECT_GT(g.grad(y).item(), 0.0);
  EXPECT_LT(g.grad(mu).item(), 0.0);
}

}  // namespace
}  // namespace mkc
