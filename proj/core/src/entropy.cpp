#include "mkc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mkc/errors.hpp"
#include "mkc/nn.hpp"
#include "mkc/ops.hpp"
#include "mkc/random.hpp"

namespace mkc {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
// Beyond this many scales from the bin edge, the mass is far below the floor.
constexpr double kTailCutoff = 12.0;

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(what) + ": shapes " + shape_str(a.shape()) +
                      " and " + shape_str(b.shape()) + " differ");
  }
}

// Per-element (dP/dy, dP/dsigma) of the discretized Gaussian before flooring.
struct GaussianGrad {
  double dy;
  double dsigma;
};

GaussianGrad gaussian_bin_grad(double y, double mu, double sigma) {
  const double a = (y + 0.5 - mu) / sigma;
  const double b = (y - 0.5 - mu) / sigma;
  const double pa = std_normal_pdf(a), pb = std_normal_pdf(b);
  return {(pa - pb) / sigma, (-a * pa + b * pb) / sigma};
}

struct LogisticGrad {
  double dz;
  double dscale;
};

LogisticGrad logistic_bin_grad(double z, double loc, double scale) {
  const double a = (z + 0.5 - loc) / scale;
  const double b = (z - 0.5 - loc) / scale;
  const double sa = logistic(a), sb = logistic(b);
  const double da = sa * (1.0 - sa), db = sb * (1.0 - sb);
  return {(da - db) / scale, (-a * da + b * db) / scale};
}

}  // namespace

Tensor QuantizedLatent::to_tensor() const {
  Tensor t(shape);
  for (std::size_t i = 0; i < symbols.size(); ++i) t[i] = symbols[i];
  return t;
}

std::int32_t quantize_value(double v) {
  return static_cast<std::int32_t>(
      std::clamp(round_half_away(v), double{kSymbolMin}, double{kSymbolMax}));
}

QuantizedLatent quantize(const Tensor& x) {
  QuantizedLatent q{x.shape(), std::vector<std::int32_t>(x.size())};
  for (std::size_t i = 0; i < x.size(); ++i) q.symbols[i] = quantize_value(x[i]);
  return q;
}

Tensor train_perturb(const Tensor& x, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6e6f697365ull));
  Tensor out = x;
  for (auto& v : out.data()) v += rng.uniform() - 0.5;
  return out;
}

Var train_perturb(Var x, std::uint64_t seed) {
  Tensor noise = train_perturb(Tensor(x.shape()), seed);
  return add(x, x.graph().constant(std::move(noise)));
}

FactorizedPrior FactorizedPrior::standard(std::size_t channels) {
  return {Tensor({channels}, 0.0), Tensor({channels}, 1.0)};
}

void FactorizedPrior::validate() const {
  if (loc.size() != scale.size()) {
    throw ConfigError("factorized prior: loc and scale sizes differ");
  }
  for (std::size_t i = 0; i < scale.size(); ++i) {
    if (!(scale[i] > 0.0)) {
      throw ConfigError("factorized prior: scale[" + std::to_string(i) +
                        "] must be positive");
    }
  }
}

double gaussian_bin_probability(double value, double mu, double sigma) {
  sigma = std::max(sigma, kSigmaMin);
  // Work on the tail side so both CDF terms are small and the difference
  // keeps its precision.
  const double v = std::abs(value - mu);
  if ((v - 0.5) / sigma > kTailCutoff) return kProbFloor;
  const double upper = std_normal_cdf((0.5 - v) / sigma);
  const double lower = std_normal_cdf((-0.5 - v) / sigma);
  return std::max(upper - lower, kProbFloor);
}

double logistic_bin_probability(double value, double loc, double scale) {
  const double v = std::abs(value - loc);
  const double upper = logistic((0.5 - v) / scale);
  const double lower = logistic((-0.5 - v) / scale);
  return std::max(upper - lower, kProbFloor);
}

void gaussian_pmf(double mu, double sigma, std::span<double> out) {
  if (out.size() != static_cast<std::size_t>(kAlphabetSize)) {
    throw ConfigError("gaussian_pmf: output span must cover the alphabet");
  }
  for (int s = kSymbolMin; s <= kSymbolMax; ++s) {
    out[s - kSymbolMin] = gaussian_bin_probability(s, mu, sigma);
  }
}

void logistic_pmf(double loc, double scale, std::span<double> out) {
  if (out.size() != static_cast<std::size_t>(kAlphabetSize)) {
    throw ConfigError("logistic_pmf: output span must cover the alphabet");
  }
  for (int s = kSymbolMin; s <= kSymbolMax; ++s) {
    out[s - kSymbolMin] = logistic_bin_probability(s, loc, scale);
  }
}

Tensor gaussian_likelihood(const Tensor& y, const Tensor& mu, const Tensor& sigma) {
  require_same_shape(y, mu, "gaussian_likelihood");
  require_same_shape(y, sigma, "gaussian_likelihood");
  Tensor p(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    p[i] = gaussian_bin_probability(y[i], mu[i], sigma[i]);
  }
  return p;
}

Tensor gaussian_likelihood(const QuantizedLatent& y, const EntropyParams& p) {
  return gaussian_likelihood(y.to_tensor(), p.mu, p.sigma);
}

Var gaussian_likelihood(Var y, Var mu, Var sigma) {
  Tensor p = gaussian_likelihood(y.value(), mu.value(), sigma.value());
  return y.graph().record(
      "gaussian_likelihood", std::move(p), {y, mu, sigma},
      [y, mu, sigma](Graph& g, const Tensor& go) {
        const Tensor& yv = g.value(y);
        const Tensor& mv = g.value(mu);
        const Tensor& sv = g.value(sigma);
        Tensor* gy = g.requires_grad(y) ? &g.grad_buffer(y) : nullptr;
        Tensor* gm = g.requires_grad(mu) ? &g.grad_buffer(mu) : nullptr;
        Tensor* gs = g.requires_grad(sigma) ? &g.grad_buffer(sigma) : nullptr;
        for (std::size_t i = 0; i < go.size(); ++i) {
          const double s = std::max(sv[i], kSigmaMin);
          const double raw = std_normal_cdf((0.5 - std::abs(yv[i] - mv[i])) / s) -
                             std_normal_cdf((-0.5 - std::abs(yv[i] - mv[i])) / s);
          // Floored entries only pass gradients that raise the probability.
          if (raw < kProbFloor && go[i] >= 0.0) continue;
          const GaussianGrad d = gaussian_bin_grad(yv[i], mv[i], s);
          if (gy) (*gy)[i] += go[i] * d.dy;
          if (gm) (*gm)[i] -= go[i] * d.dy;
          if (gs && sv[i] >= kSigmaMin) (*gs)[i] += go[i] * d.dsigma;
        }
      });
}

Tensor factorized_likelihood(const Tensor& z, const FactorizedPrior& prior) {
  prior.validate();
  if (z.rank() != 3 || z.dim(2) != prior.loc.size()) {
    throw ConfigError("factorized_likelihood: latent " + shape_str(z.shape()) +
                      " does not match prior of " + std::to_string(prior.loc.size()) +
                      " channels");
  }
  const std::size_t c = z.dim(2);
  Tensor p(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = logistic_bin_probability(z[i], prior.loc[i % c], prior.scale[i % c]);
  }
  return p;
}

Tensor factorized_likelihood(const QuantizedLatent& z, const FactorizedPrior& prior) {
  return factorized_likelihood(z.to_tensor(), prior);
}

Var factorized_likelihood(Var z, Var loc, Var scale) {
  const FactorizedPrior prior{loc.value(), scale.value()};
  Tensor p = factorized_likelihood(z.value(), prior);
  return z.graph().record(
      "factorized_likelihood", std::move(p), {z, loc, scale},
      [z, loc, scale](Graph& g, const Tensor& go) {
        const Tensor& zv = g.value(z);
        const Tensor& lv = g.value(loc);
        const Tensor& sv = g.value(scale);
        const std::size_t c = lv.size();
        Tensor* gz = g.requires_grad(z) ? &g.grad_buffer(z) : nullptr;
        Tensor* gl = g.requires_grad(loc) ? &g.grad_buffer(loc) : nullptr;
        Tensor* gs = g.requires_grad(scale) ? &g.grad_buffer(scale) : nullptr;
        for (std::size_t i = 0; i < go.size(); ++i) {
          const std::size_t k = i % c;
          const double v = std::abs(zv[i] - lv[k]);
          const double raw = logistic((0.5 - v) / sv[k]) - logistic((-0.5 - v) / sv[k]);
          if (raw < kProbFloor && go[i] >= 0.0) continue;
          const LogisticGrad d = logistic_bin_grad(zv[i], lv[k], sv[k]);
          if (gz) (*gz)[i] += go[i] * d.dz;
          if (gl) (*gl)[k] -= go[i] * d.dz;
          if (gs) (*gs)[k] += go[i] * d.dscale;
        }
      });
}

RateEstimate rate_estimate(const Tensor& p_y, const Tensor& p_z, std::size_t num_pixels) {
  if (num_pixels == 0) throw ConfigError("rate_estimate: zero pixels");
  RateEstimate r;
  for (double p : p_y.data()) r.bits_y -= std::log2(p);
  for (double p : p_z.data()) r.bits_z -= std::log2(p);
  r.bpp = (r.bits_y + r.bits_z) / static_cast<double>(num_pixels);
  return r;
}

Var total_bits(Var probabilities) {
  return mul(sum(log(probabilities)), -1.0 / std::numbers::ln2);
}

}  // namespace mkc
