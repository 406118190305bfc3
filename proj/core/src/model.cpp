#include "mkc/model.hpp"

#include <algorithm>

#include "mkc/errors.hpp"
#include "mkc/random.hpp"

namespace mkc {

std::string_view to_string(LossType l) { return l == LossType::kMse ? "mse" : "msssim"; }

LossType parse_loss(std::string_view s) {
  if (s == "mse") return LossType::kMse;
  if (s == "msssim") return LossType::kMsSsim;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected mse or msssim)");
}

void ModelConfig::validate() const {
  transform.validate();
  entropy_channels();  // throws on a keep ratio that leaves no channel
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  const TransformConfig &x = a.transform, &y = b.transform;
  return x.widths == y.widths && x.latent_channels == y.latent_channels &&
         x.hyper_channels == y.hyper_channels && x.image_channels == y.image_channels &&
         x.kernel == y.kernel && x.hyper_kernel == y.hyper_kernel &&
         a.keep_ratio == b.keep_ratio && a.gate_learnable == b.gate_learnable &&
         a.seed == b.seed && a.loss == b.loss;
}

TransformConfig transform_preset(const std::string& name) {
  TransformConfig c;
  if (name == "toy") {
    c.widths = {32, 48};
    c.latent_channels = 64;
    c.hyper_channels = 32;
    c.kernel = 3;
    c.hyper_kernel = 3;
  } else if (name == "desk") {
    c.widths = {64, 96};
    c.latent_channels = 128;
    c.hyper_channels = 64;
    c.kernel = 5;
    c.hyper_kernel = 3;
  } else if (name == "full") {
    c.widths = {192, 192};
    c.latent_channels = 320;
    c.hyper_channels = 192;
    c.kernel = 5;
    c.hyper_kernel = 3;
  } else {
    throw ConfigError("unknown model preset '" + name + "' (expected toy, desk or full)");
  }
  return c;
}

ModelState ModelState::init(const ModelConfig& config) {
  config.validate();
  ModelState m;
  m.config = config;
  Rng rng(derive_seed(config.seed, 0x696e6974ull));
  const std::size_t n = config.transform.latent_channels;
  const std::size_t keep = config.entropy_channels();
  init_transform_params(m.params, config.transform, keep, rng);
  const ChannelGate gate = ChannelGate::random(n, keep, rng, config.gate_learnable);
  m.params.add(kGateScores, gate.v_mat);
  m.params.add(kGateTokens, gate.tokens);
  const FactorizedPrior prior = FactorizedPrior::standard(config.transform.hyper_channels);
  m.params.add(kPriorLoc, prior.loc);
  m.params.add(kPriorScale, prior.scale);
  return m;
}

ChannelGate ModelState::gate() const {
  ChannelGate g{params.get(kGateScores), params.get(kGateTokens), keep(),
                config.gate_learnable};
  g.validate();
  return g;
}

FactorizedPrior ModelState::prior() const {
  return {params.get(kPriorLoc), params.get(kPriorScale)};
}

std::vector<std::size_t> ModelState::kept_channels() const {
  return top_channels(params.get(kGateScores).data(), keep());
}

bool ModelState::trainable(const std::string& name) const {
  return config.gate_learnable || name != kGateScores;
}

void ModelState::project() {
  project_transform_params(params);
  for (auto& s : params.get(kPriorScale).data()) s = std::max(s, kPriorScaleMin);
}

}  // namespace mkc
