#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mkc/graph.hpp"

namespace mkc {

inline constexpr int kSymbolMin = -255;
inline constexpr int kSymbolMax = 255;
inline constexpr int kAlphabetSize = kSymbolMax - kSymbolMin + 1;
// Probability floor, matching the 16-bit precision of the range coder.
inline constexpr double kProbFloor = 1.0 / 65536.0;

// Integer-valued latent, every element in [kSymbolMin, kSymbolMax].
struct QuantizedLatent {
  Shape shape;
  std::vector<std::int32_t> symbols;

  Tensor to_tensor() const;
  friend bool operator==(const QuantizedLatent&, const QuantizedLatent&) = default;
};

// Round half away from zero, then clamp to the alphabet.
QuantizedLatent quantize(const Tensor& x);
std::int32_t quantize_value(double v);

// x + u, u ~ U[-0.5, 0.5) i.i.d., deterministic in seed.
Tensor train_perturb(const Tensor& x, std::uint64_t seed);
Var train_perturb(Var x, std::uint64_t seed);

// Mean-scale Gaussian conditional of y_hat. sigma is clamped to kSigmaMin.
struct EntropyParams {
  Tensor mu;
  Tensor sigma;
};

// Per-channel logistic prior over z_hat.
struct FactorizedPrior {
  Tensor loc;
  Tensor scale;

  static FactorizedPrior standard(std::size_t channels);
  void validate() const;
};

// Probability mass of the unit bin centred on `value`, floored at kProbFloor.
double gaussian_bin_probability(double value, double mu, double sigma);
double logistic_bin_probability(double value, double loc, double scale);

// Probabilities for every symbol of the alphabet (size kAlphabetSize).
void gaussian_pmf(double mu, double sigma, std::span<double> out);
void logistic_pmf(double loc, double scale, std::span<double> out);

Tensor gaussian_likelihood(const QuantizedLatent& y, const EntropyParams& p);
// Element-wise over real-valued (possibly perturbed) y.
Tensor gaussian_likelihood(const Tensor& y, const Tensor& mu, const Tensor& sigma);
Var gaussian_likelihood(Var y, Var mu, Var sigma);

// z is [h, w, c]; loc and scale are [c].
Tensor factorized_likelihood(const QuantizedLatent& z, const FactorizedPrior& prior);
Tensor factorized_likelihood(const Tensor& z, const FactorizedPrior& prior);
Var factorized_likelihood(Var z, Var loc, Var scale);

struct RateEstimate {
  double bits_y = 0.0;
  double bits_z = 0.0;
  double bpp = 0.0;
};

// bits = sum(-log2 P); bpp = (bits_y + bits_z) / num_pixels.
RateEstimate rate_estimate(const Tensor& p_y, const Tensor& p_z, std::size_t num_pixels);

// sum(-log2 P) as a graph node.
Var total_bits(Var probabilities);

}  // namespace mkc
