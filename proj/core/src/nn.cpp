#include "mkc/nn.hpp"

#include <algorithm>
#include <cmath>

#include "mkc/entropy.hpp"
#include "mkc/errors.hpp"
#include "mkc/ops.hpp"

namespace mkc {
namespace {

void check_gdn_params(const Tensor& x, const Tensor& beta, const Tensor& gamma,
                      const char* op) {
  if (x.rank() != 3) {
    throw ConfigError(std::string(op) + ": expected [h,w,c] input, got " +
                      shape_str(x.shape()));
  }
  const std::size_t c = x.dim(2);
  if (beta.size() != c || gamma.size() != c * c) {
    throw ConfigError(std::string(op) + ": parameters beta " +
                      shape_str(beta.shape()) + " / gamma " +
                      shape_str(gamma.shape()) + " do not fit " +
                      std::to_string(c) + " channels");
  }
  for (std::size_t i = 0; i < c; ++i) {
    if (!(beta[i] >= kBetaMin)) {
      throw ConfigError(std::string(op) + ": beta[" + std::to_string(i) +
                        "] = " + std::to_string(beta[i]) + " below beta_min");
    }
  }
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    if (gamma[i] < 0.0) {
      throw ConfigError(std::string(op) + ": negative gamma entry " +
                        std::to_string(i));
    }
  }
}

// norm[p, i] = beta_i + sum_j gamma_ij x[p, j]^2
Tensor gdn_norm(const Tensor& x, const Tensor& beta, const Tensor& gamma) {
  const std::size_t c = x.dim(2), n = x.dim(0) * x.dim(1);
  Tensor norm(x.shape());
  std::vector<double> sq(c);
  for (std::size_t p = 0; p < n; ++p) {
    const double* xp = &x[p * c];
    for (std::size_t j = 0; j < c; ++j) sq[j] = xp[j] * xp[j];
    double* np = &norm[p * c];
    for (std::size_t i = 0; i < c; ++i) {
      const double* gr = &gamma[i * c];
      double acc = beta[i];
      for (std::size_t j = 0; j < c; ++j) acc += gr[j] * sq[j];
      np[i] = acc;
    }
  }
  return norm;
}

// Shared backward for gdn (inverse = false) and igdn (inverse = true).
// With s_i = sqrt(norm_i): gdn y_i = x_i / s_i, igdn y_i = x_i * s_i.
void divisive_backward(Graph& g, const Tensor& go, Var xv, Var bv, Var gv,
                       bool inverse) {
  const Tensor& x = g.value(xv);
  const Tensor& beta = g.value(bv);
  const Tensor& gamma = g.value(gv);
  const std::size_t c = x.dim(2), n = x.dim(0) * x.dim(1);
  const Tensor norm = gdn_norm(x, beta, gamma);

  Tensor* gx = g.requires_grad(xv) ? &g.grad_buffer(xv) : nullptr;
  Tensor* gb = g.requires_grad(bv) ? &g.grad_buffer(bv) : nullptr;
  Tensor* gg = g.requires_grad(gv) ? &g.grad_buffer(gv) : nullptr;

  // dy_i/dnorm_i = -x_i / (2 norm^{3/2}) for gdn and x_i / (2 sqrt(norm)) for igdn.
  std::vector<double> dnorm(c), sq(c);
  for (std::size_t p = 0; p < n; ++p) {
    const double* xp = &x[p * c];
    const double* np = &norm[p * c];
    const double* gp = &go[p * c];
    for (std::size_t i = 0; i < c; ++i) {
      const double s = std::sqrt(np[i]);
      dnorm[i] = inverse ? gp[i] * xp[i] * 0.5 / s
                         : -gp[i] * xp[i] * 0.5 / (np[i] * s);
      sq[i] = xp[i] * xp[i];
    }
    if (gx) {
      double* gxp = &(*gx)[p * c];
      for (std::size_t j = 0; j < c; ++j) {
        const double s = std::sqrt(np[j]);
        double acc = 0.0;
        for (std::size_t i = 0; i < c; ++i) acc += dnorm[i] * gamma[i * c + j];
        gxp[j] += (inverse ? gp[j] * s : gp[j] / s) + 2.0 * xp[j] * acc;
      }
    }
    if (gb) {
      for (std::size_t i = 0; i < c; ++i) (*gb)[i] += dnorm[i];
    }
    if (gg) {
      for (std::size_t i = 0; i < c; ++i) {
        double* row = &(*gg)[i * c];
        for (std::size_t j = 0; j < c; ++j) row[j] += dnorm[i] * sq[j];
      }
    }
  }
}

Var divisive(Var x, Var beta, Var gamma, bool inverse) {
  const char* name = inverse ? "igdn" : "gdn";
  check_gdn_params(x.value(), beta.value(), gamma.value(), name);
  const Tensor& xv = x.value();
  const Tensor norm = gdn_norm(xv, beta.value(), gamma.value());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = std::sqrt(norm[i]);
    out[i] = inverse ? xv[i] * s : xv[i] / s;
  }
  return x.graph().record(name, std::move(out), {x, beta, gamma},
                          [x, beta, gamma, inverse](Graph& g, const Tensor& go) {
                            divisive_backward(g, go, x, beta, gamma, inverse);
                          });
}

Tensor glorot(std::size_t k, std::size_t cin, std::size_t cout, Rng& rng) {
  const double fan_in = static_cast<double>(k * k * cin);
  const double fan_out = static_cast<double>(k * k * cout);
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor w({k, k, cin, cout});
  for (auto& v : w.data()) v = rng.uniform(-bound, bound);
  return w;
}

void add_conv(ParameterSet& params, const std::string& prefix, std::size_t k,
              std::size_t cin, std::size_t cout, Rng& rng) {
  params.add(prefix + ".weight", glorot(k, cin, cout, rng));
  params.add(prefix + ".bias", Tensor({cout}));
}

void add_gdn(ParameterSet& params, const std::string& prefix, std::size_t c) {
  GdnParams g = GdnParams::identity(c);
  params.add(prefix + ".beta", std::move(g.beta));
  params.add(prefix + ".gamma", std::move(g.gamma));
}

// Channel widths along the analysis path: image, widths..., N.
std::vector<std::size_t> analysis_channels(const TransformConfig& cfg) {
  std::vector<std::size_t> ch{cfg.image_channels};
  ch.insert(ch.end(), cfg.widths.begin(), cfg.widths.end());
  ch.push_back(cfg.latent_channels);
  return ch;
}

Var conv_block(BoundParams& p, const std::string& prefix, Var x, int k) {
  return add(conv2d(x, p(prefix + ".weight"), 2, k / 2), p(prefix + ".bias"));
}

Var tconv_block(BoundParams& p, const std::string& prefix, Var x, int k) {
  return add(conv_transpose2d(x, p(prefix + ".weight"), 2, k / 2, 1),
             p(prefix + ".bias"));
}

}  // namespace

GdnParams GdnParams::identity(std::size_t channels, double gamma_diag) {
  GdnParams p{Tensor({channels}, 1.0), Tensor({channels, channels})};
  for (std::size_t i = 0; i < channels; ++i) p.gamma[i * channels + i] = gamma_diag;
  return p;
}

void project_gdn(Tensor& beta, Tensor& gamma) {
  for (auto& b : beta.data()) b = std::max(b, kBetaMin);
  for (auto& g : gamma.data()) g = std::max(g, 0.0);
}

Var gdn(Var x, Var beta, Var gamma) { return divisive(x, beta, gamma, false); }
Var igdn(Var y, Var beta, Var gamma) { return divisive(y, beta, gamma, true); }

// The tensor forms project a copy of the parameters first, so beta = 0 acts
// as beta_min.
Tensor gdn(const Tensor& x, const GdnParams& p) {
  GdnParams q = p;
  project_gdn(q);
  Graph g;
  return gdn(g.constant(x), g.constant(q.beta), g.constant(q.gamma)).value();
}

Tensor igdn(const Tensor& y, const GdnParams& p) {
  GdnParams q = p;
  project_gdn(q);
  Graph g;
  return igdn(g.constant(y), g.constant(q.beta), g.constant(q.gamma)).value();
}

void TransformConfig::validate() const {
  if (latent_channels == 0 || hyper_channels == 0 || image_channels == 0) {
    throw ConfigError("transform channel counts must be positive");
  }
  for (auto w : widths) {
    if (w == 0) throw ConfigError("transform widths must be positive");
  }
  if (kernel < 1 || kernel % 2 == 0 || hyper_kernel < 1 || hyper_kernel % 2 == 0) {
    throw ConfigError("kernel sizes must be odd and positive");
  }
}

void init_transform_params(ParameterSet& params, const TransformConfig& cfg,
                           std::size_t entropy_channels, Rng& rng) {
  cfg.validate();
  const auto ch = analysis_channels(cfg);
  const std::size_t k = static_cast<std::size_t>(cfg.kernel);
  const std::size_t hk = static_cast<std::size_t>(cfg.hyper_kernel);
  for (std::size_t i = 0; i + 1 < ch.size(); ++i) {
    const std::string prefix = "g_a." + std::to_string(i);
    add_conv(params, prefix, k, ch[i], ch[i + 1], rng);
    add_gdn(params, prefix + ".gdn", ch[i + 1]);
  }
  // Synthesis block i maps ch[n - i] -> ch[n - i - 1].
  const std::size_t n = ch.size() - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string prefix = "g_s." + std::to_string(i);
    add_gdn(params, prefix + ".igdn", ch[n - i]);
    add_conv(params, prefix, k, ch[n - i], ch[n - i - 1], rng);
  }
  const std::size_t hc = cfg.hyper_channels, m = entropy_channels;
  add_conv(params, "h_a.0", hk, m, hc, rng);
  add_conv(params, "h_a.1", hk, hc, hc, rng);
  add_conv(params, "h_s.0", hk, hc, hc, rng);
  add_conv(params, "h_s.1", hk, hc, 2 * m, rng);
  // Start the scale half of h_s well above the lower bound.
  Tensor& bias = params.get("h_s.1.bias");
  for (std::size_t i = m; i < 2 * m; ++i) bias[i] = 1.0;
}

void project_transform_params(ParameterSet& params) {
  for (const auto& name : params.names()) {
    const auto is_suffix = [&](const std::string& s) {
      return name.size() >= s.size() &&
             name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    if (is_suffix(".beta")) {
      const std::string base = name.substr(0, name.size() - 5);
      project_gdn(params.get(name), params.get(base + ".gamma"));
    }
  }
}

Var analysis_forward(BoundParams& p, Var image, const TransformConfig& cfg) {
  const Shape& s = image.shape();
  const std::size_t f = cfg.downsampling();
  if (s.size() != 3 || s[2] != cfg.image_channels) {
    throw ConfigError("analysis: expected [H,W," + std::to_string(cfg.image_channels) +
                      "] image, got " + shape_str(s));
  }
  if (s[0] < f || s[1] < f) {
    throw ConfigError("analysis: image " + shape_str(s) +
                      " smaller than one downsampling block of " + std::to_string(f));
  }
  if (s[0] % f != 0 || s[1] % f != 0) {
    throw ConfigError("analysis: image " + shape_str(s) +
                      " not a multiple of " + std::to_string(f) + "; pad first");
  }
  Var x = image;
  for (std::size_t i = 0; i < cfg.num_blocks(); ++i) {
    const std::string prefix = "g_a." + std::to_string(i);
    x = conv_block(p, prefix, x, cfg.kernel);
    x = gdn(x, p(prefix + ".gdn.beta"), p(prefix + ".gdn.gamma"));
  }
  return x;
}

Var synthesis_forward(BoundParams& p, Var latent, const TransformConfig& cfg) {
  const Shape& s = latent.shape();
  if (s.size() != 3 || s[2] != cfg.latent_channels) {
    throw ConfigError("synthesis: expected " + std::to_string(cfg.latent_channels) +
                      " latent channels, got " + shape_str(s) +
                      " (was channel completion skipped?)");
  }
  Var x = latent;
  for (std::size_t i = 0; i < cfg.num_blocks(); ++i) {
    const std::string prefix = "g_s." + std::to_string(i);
    x = igdn(x, p(prefix + ".igdn.beta"), p(prefix + ".igdn.gamma"));
    x = tconv_block(p, prefix, x, cfg.kernel);
  }
  return x;
}

Var hyper_analysis(BoundParams& p, Var y, const TransformConfig& cfg) {
  const Shape& s = y.shape();
  const std::size_t f = TransformConfig::hyper_downsampling();
  if (s.size() != 3 || s[0] % f != 0 || s[1] % f != 0 || s[0] == 0 || s[1] == 0) {
    throw ConfigError("hyper analysis: latent " + shape_str(s) +
                      " must have spatial extents divisible by " + std::to_string(f));
  }
  Var z = relu(conv_block(p, "h_a.0", y, cfg.hyper_kernel));
  return conv_block(p, "h_a.1", z, cfg.hyper_kernel);
}

EntropyVars hyper_synthesis(BoundParams& p, Var z_hat, const TransformConfig& cfg,
                            std::size_t entropy_channels) {
  Var h = relu(tconv_block(p, "h_s.0", z_hat, cfg.hyper_kernel));
  Var params = tconv_block(p, "h_s.1", h, cfg.hyper_kernel);
  const std::size_t m = entropy_channels;
  if (params.shape()[2] != 2 * m) {
    throw ConfigError("hyper synthesis emits " + std::to_string(params.shape()[2]) +
                      " channels, expected " + std::to_string(2 * m));
  }
  return {slice_channels(params, 0, m),
          lower_bound(slice_channels(params, m, m), kSigmaMin)};
}

HyperOutputs hyper_forward(BoundParams& p, Var y, const TransformConfig& cfg,
                           QuantMode mode, std::uint64_t noise_seed) {
  HyperOutputs out;
  out.z = hyper_analysis(p, y, cfg);
  out.z_hat = mode == QuantMode::kHard ? ste_round(out.z)
                                       : train_perturb(out.z, noise_seed);
  const EntropyVars ev = hyper_synthesis(p, out.z_hat, cfg, y.shape()[2]);
  out.mu = ev.mu;
  out.sigma = ev.sigma;
  return out;
}

Tensor clamp_unit(const Tensor& image) {
  Tensor out = image;
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace mkc
