#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "mkc/entropy.hpp"
#include "mkc/masking.hpp"
#include "mkc/nn.hpp"
#include "mkc/params.hpp"

namespace mkc {

enum class LossType { kMse, kMsSsim };

std::string_view to_string(LossType l);
LossType parse_loss(std::string_view s);

// Architecture and gate settings; everything needed to rebuild the
// parameter layout of a model.
struct ModelConfig {
  TransformConfig transform;
  double keep_ratio = 0.75;   // gate M = round(keep_ratio * N)
  bool gate_learnable = true;  // false freezes v_mat at its random init
  std::uint64_t seed = 0;      // parameter initialisation
  LossType loss = LossType::kMse;  // distortion the model is trained for

  std::size_t entropy_channels() const {
    return keep_count(keep_ratio, transform.latent_channels);
  }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&);
};

// Named presets for TransformConfig: "toy", "desk" and "full".
TransformConfig transform_preset(const std::string& name);

// Parameter names of the gate and the hyperprior's factorized prior.
inline constexpr const char* kGateScores = "gate.v_mat";
inline constexpr const char* kGateTokens = "gate.tokens";
inline constexpr const char* kPriorLoc = "prior.loc";
inline constexpr const char* kPriorScale = "prior.scale";

// Lower bound kept on the factorized prior's scales.
inline constexpr double kPriorScaleMin = 0.05;

// Every trainable tensor lives in `params`, including the gate (v_mat,
// tokens) and the factorized prior (loc, scale).
struct ModelState {
  ModelConfig config;
  ParameterSet params;
  // Free-form provenance carried through checkpoints (e.g. "stage").
  std::map<std::string, std::string> info;

  static ModelState init(const ModelConfig& config);

  std::size_t keep() const { return config.entropy_channels(); }
  ChannelGate gate() const;
  FactorizedPrior prior() const;
  // Kept channel indices implied by the current v_mat.
  std::vector<std::size_t> kept_channels() const;
  // Whether a parameter is updated by the optimizer.
  bool trainable(const std::string& name) const;
  // Restores GDN and prior-scale invariants after an update.
  void project();
};

}  // namespace mkc
