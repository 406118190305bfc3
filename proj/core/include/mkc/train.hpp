#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mkc/dataset.hpp"
#include "mkc/graph.hpp"
#include "mkc/masking.hpp"
#include "mkc/model.hpp"

namespace mkc {

enum class Stage { kPretrain, kFinetune };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

// MSE on [0, 1] images is multiplied by this before weighting with lambda,
// i.e. distortion is measured on the 8-bit scale.
inline constexpr double kMseScale8Bit = 255.0 * 255.0;

// Step decay: lr(e) = initial * factor^k where k counts the milestones m
// with e >= round(m * total_epochs). Milestones are fractions of the run.
struct LrSchedule {
  double initial = 1e-4;
  std::vector<double> milestones;
  double factor = 1.0;

  double at(std::size_t epoch, std::size_t total_epochs) const;
  void validate() const;
};

struct TrainConfig {
  Stage stage = Stage::kPretrain;
  double lambda = 0.01;
  LossType loss = LossType::kMse;
  double mse_scale = kMseScale8Bit;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::size_t crop = 64;
  double downsample_prob = 0.3;
  LrSchedule lr;
  double weight_decay = 0.0;
  // Strategy and ratio of the pretraining mask; the seed field is ignored
  // because masks are re-drawn per step from `seed`.
  MaskSpec mask;
  std::uint64_t seed = 0;
  // Stops the stage early after this many optimizer steps (0 = no cap).
  std::size_t max_steps = 0;
  // When false the synthesis sees the noisy latents as well, which makes the
  // whole loss differentiable (used by gradient checks).
  bool ste_synthesis = true;

  void validate() const;
  static TrainConfig pretrain_defaults();
  static TrainConfig finetune_defaults();
};

// bpp + lambda * d.
double rd_loss(double bpp, double distortion, double lambda);

struct RdTerms {
  Var loss;        // mean over the batch of bpp + lambda * d
  Var bpp;         // mean estimated bpp
  Var distortion;  // mean d (scaled MSE or 1 - MS-SSIM)
  double mse = 0.0;  // mean MSE on the [0, 1] scale, for reporting
  std::vector<Var> reconstructions;
};

// Builds the training graph for one batch on `p` (parameters bound from
// m.params). In the pretrain stage the analysis output passes through the
// configured mask (seeded per step and image); in finetune it does not.
// The rate uses noisy latents; the synthesis sees straight-through rounded
// latents unless cfg.ste_synthesis is off.
RdTerms forward_train(BoundParams& p, const std::vector<Tensor>& batch, const ModelState& m,
                      const TrainConfig& cfg, std::uint64_t step);

// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ModelState& m, const std::map<std::string, Tensor>& grads, double lr,
            double weight_decay);
  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double bpp = 0.0;
  double distortion = 0.0;
  double mse = 0.0;
};

struct TrainResult {
  ModelState model;
  std::vector<StepRecord> history;
  std::vector<std::string> warnings;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Runs one stage from `start`. The returned model records the stage and
// lambda in info["stage"] / info["lambda"] and the loss in its config.
// Throws NumericError with step diagnostics when the loss or a gradient
// stops being finite.
TrainResult train_stage(const DatasetIndex& data, const ModelState& start,
                        const TrainConfig& cfg, const StepCallback& on_step = {});

// Number of optimizer steps per epoch: ceil(images / batch).
std::size_t steps_per_epoch(std::size_t images, std::size_t batch);

}  // namespace mkc
