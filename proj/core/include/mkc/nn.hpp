#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mkc/graph.hpp"
#include "mkc/params.hpp"
#include "mkc/random.hpp"

namespace mkc {

inline constexpr double kBetaMin = 1e-6;
inline constexpr double kSigmaMin = 0.11;

// Divisive normalization parameters for one layer of c channels.
// gamma is stored row-major as [c, c] with gamma[i * c + j] = gamma_ij.
struct GdnParams {
  Tensor beta;
  Tensor gamma;

  static GdnParams identity(std::size_t channels, double gamma_diag = 0.1);
};

// Clamps beta to >= kBetaMin and gamma to >= 0 in place.
void project_gdn(Tensor& beta, Tensor& gamma);
inline void project_gdn(GdnParams& p) { project_gdn(p.beta, p.gamma); }

// y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2), per spatial position.
Var gdn(Var x, Var beta, Var gamma);
// x_i = y_i * sqrt(beta_i + sum_j gamma_ij y_j^2).
Var igdn(Var y, Var beta, Var gamma);

// Tensor forms apply project_gdn to a copy of p before evaluating.
Tensor gdn(const Tensor& x, const GdnParams& p);
Tensor igdn(const Tensor& y, const GdnParams& p);

struct TransformConfig {
  // Intermediate analysis widths; the analysis path has widths.size() + 1
  // stride-2 blocks ending at latent_channels.
  std::vector<std::size_t> widths = {32, 64};
  std::size_t latent_channels = 64;
  std::size_t hyper_channels = 32;
  std::size_t image_channels = 3;
  int kernel = 5;
  int hyper_kernel = 3;

  std::size_t num_blocks() const { return widths.size() + 1; }
  // Total stride of the analysis transform.
  std::size_t downsampling() const { return std::size_t{1} << num_blocks(); }
  // Additional stride of the hyper analysis (two stride-2 convolutions).
  static constexpr std::size_t hyper_downsampling() { return 4; }
  // Image dimensions must be multiples of this.
  std::size_t pad_multiple() const { return downsampling() * hyper_downsampling(); }

  void validate() const;
};

// Adds analysis, synthesis and hyper parameters for a latent of
// `entropy_channels` (M) channels out of cfg.latent_channels (N).
void init_transform_params(ParameterSet& params, const TransformConfig& cfg,
                           std::size_t entropy_channels, Rng& rng);

// Re-applies GDN invariants to every GDN parameter in the set.
void project_transform_params(ParameterSet& params);

// f_a: [H, W, 3] -> [H/s, W/s, N].
Var analysis_forward(BoundParams& p, Var image, const TransformConfig& cfg);
// f_s: [h, w, N] -> [h*s, w*s, 3]; no clamping.
Var synthesis_forward(BoundParams& p, Var latent, const TransformConfig& cfg);

// h_a: [h, w, M] -> [h/4, w/4, hyper_channels].
Var hyper_analysis(BoundParams& p, Var y, const TransformConfig& cfg);

struct EntropyVars {
  Var mu;
  Var sigma;
};
// h_s: [h/4, w/4, hyper_channels] -> (mu, sigma) each [h, w, M], sigma >= kSigmaMin.
EntropyVars hyper_synthesis(BoundParams& p, Var z_hat, const TransformConfig& cfg,
                            std::size_t entropy_channels);

struct HyperOutputs {
  Var z;
  Var z_hat;
  Var mu;
  Var sigma;
};

enum class QuantMode { kHard, kNoise };

// z = h_a(y); z_hat = quantize(z) (kHard) or z + U(-0.5, 0.5) (kNoise, seeded);
// (mu, sigma) = h_s(z_hat).
HyperOutputs hyper_forward(BoundParams& p, Var y, const TransformConfig& cfg,
                           QuantMode mode, std::uint64_t noise_seed = 0);

// Evaluation-time clamp of reconstructions to [0, 1].
Tensor clamp_unit(const Tensor& image);

}  // namespace mkc
