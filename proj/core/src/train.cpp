#include "mkc/train.hpp"

#include <cmath>
#include <sstream>

#include "mkc/config.hpp"
#include "mkc/entropy.hpp"
#include "mkc/errors.hpp"
#include "mkc/metrics.hpp"
#include "mkc/ops.hpp"
#include "mkc/random.hpp"

namespace mkc {
namespace {

// Salts separating the independent random streams of a training step.
constexpr std::uint64_t kMaskSalt = 0x6d61736bull;
constexpr std::uint64_t kLatentNoiseSalt = 0x6c6174ull;
constexpr std::uint64_t kHyperNoiseSalt = 0x687970ull;

}  // namespace

std::string_view to_string(Stage s) {
  return s == Stage::kPretrain ? "pretrain" : "finetune";
}

Stage parse_stage(std::string_view s) {
  if (s == "pretrain") return Stage::kPretrain;
  if (s == "finetune") return Stage::kFinetune;
  throw ConfigError("unknown stage '" + std::string(s) + "' (expected pretrain or finetune)");
}

double LrSchedule::at(std::size_t epoch, std::size_t total_epochs) const {
  double lr = initial;
  for (double m : milestones) {
    if (static_cast<long long>(epoch) >= std::llround(m * static_cast<double>(total_epochs))) {
      lr *= factor;
    }
  }
  return lr;
}

void LrSchedule::validate() const {
  if (!(initial > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(factor > 0.0)) throw ConfigError("learning-rate decay factor must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (!(milestones[i] >= 0.0 && milestones[i] <= 1.0)) {
      throw ConfigError("learning-rate milestones are fractions of the run in [0, 1]");
    }
    if (i > 0 && milestones[i] < milestones[i - 1]) {
      throw ConfigError("learning-rate milestones must be non-decreasing");
    }
  }
}

void TrainConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(mse_scale > 0.0)) throw ConfigError("mse scale must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (crop == 0) throw ConfigError("crop size must be positive");
  if (!(downsample_prob >= 0.0 && downsample_prob <= 1.0)) {
    throw ConfigError("downsample probability outside [0, 1]");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  lr.validate();
  mask.validate();
}

TrainConfig TrainConfig::pretrain_defaults() {
  TrainConfig c;
  c.stage = Stage::kPretrain;
  c.lambda = 0.3;
  c.epochs = 30;
  c.lr = {1e-4, {1.0 / 3.0, 2.0 / 3.0}, 0.8};
  c.mask = {MaskStrategy::kCube, 0.5, 0};
  return c;
}

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.stage = Stage::kFinetune;
  c.lambda = 0.01;
  c.epochs = 100;
  c.lr = {8e-5, {0.2, 0.4, 0.8}, 0.5};
  c.mask = {MaskStrategy::kCube, 0.5, 0};
  return c;
}

double rd_loss(double bpp, double distortion, double lambda) {
  return bpp + lambda * distortion;
}

RdTerms forward_train(BoundParams& p, const std::vector<Tensor>& batch, const ModelState& m,
                      const TrainConfig& cfg, std::uint64_t step) {
  if (batch.empty()) throw ConfigError("forward_train: empty batch");
  Graph& g = p.graph();
  const TransformConfig& tc = m.config.transform;
  const auto stage_id = static_cast<std::uint64_t>(cfg.stage);
  RdTerms out;
  Var loss_sum, bpp_sum, dist_sum;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor& image = batch[b];
    const double pixels = static_cast<double>(image.dim(0) * image.dim(1));
    Var x = g.constant(image);
    Var y = analysis_forward(p, x, tc);
    if (cfg.stage == Stage::kPretrain) {
      MaskSpec spec = cfg.mask;
      spec.seed = derive_seed(cfg.seed, kMaskSalt, step, b);
      y = apply_mask(y, spec);
    }
    GateVars sel = lcmm_select(y, p(kGateScores), m.keep());
    const HyperOutputs h = hyper_forward(p, sel.y, tc, QuantMode::kNoise,
                                         derive_seed(cfg.seed, kHyperNoiseSalt, stage_id, step, b));
    Var y_noisy =
        train_perturb(sel.y, derive_seed(cfg.seed, kLatentNoiseSalt, stage_id, step, b));
    Var bits = total_bits(gaussian_likelihood(y_noisy, h.mu, h.sigma)) +
               total_bits(factorized_likelihood(h.z_hat, p(kPriorLoc), p(kPriorScale)));
    Var bpp = bits * (1.0 / pixels);

    Var full = lccm_complete(cfg.ste_synthesis ? ste_round(sel.y) : y_noisy, sel.kept,
                             p(kGateTokens));
    Var x_hat = synthesis_forward(p, full, tc);
    Var mse = mean(square(x_hat - x));
    Var d = cfg.loss == LossType::kMse ? mse * cfg.mse_scale : -ms_ssim(x_hat, x) + 1.0;
    Var loss = bpp + d * cfg.lambda;

    out.mse += mse.value().item();
    out.reconstructions.push_back(x_hat);
    loss_sum = loss_sum.valid() ? loss_sum + loss : loss;
    bpp_sum = bpp_sum.valid() ? bpp_sum + bpp : bpp;
    dist_sum = dist_sum.valid() ? dist_sum + d : d;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss = loss_sum * inv;
  out.bpp = bpp_sum * inv;
  out.distortion = dist_sum * inv;
  out.mse *= inv;
  return out;
}

void AdamW::step(ModelState& m, const std::map<std::string, Tensor>& grads, double lr,
                 double weight_decay) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, grad] : grads) {
    if (!m.trainable(name)) continue;
    Tensor& w = m.params.get(name);
    auto [mit, fresh] = m_.try_emplace(name, w.shape());
    if (fresh) v_.emplace(name, Tensor(w.shape()));
    Tensor& mom = mit->second;
    Tensor& vel = v_.at(name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = grad[i];
      mom[i] = beta1_ * mom[i] + (1.0 - beta1_) * gi;
      vel[i] = beta2_ * vel[i] + (1.0 - beta2_) * gi * gi;
      w[i] -= lr * weight_decay * w[i];
      w[i] -= lr * (mom[i] / c1) / (std::sqrt(vel[i] / c2) + eps_);
    }
  }
}

std::size_t steps_per_epoch(std::size_t images, std::size_t batch) {
  if (images == 0 || batch == 0) throw ConfigError("steps_per_epoch: empty dataset or batch");
  return (images + batch - 1) / batch;
}

TrainResult train_stage(const DatasetIndex& data, const ModelState& start,
                        const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  const std::size_t multiple = start.config.transform.pad_multiple();
  if (cfg.crop % multiple != 0) {
    throw ConfigError("crop " + std::to_string(cfg.crop) + " must be a multiple of " +
                      std::to_string(multiple));
  }
  TrainResult result{start, {}, {}};
  ModelState& m = result.model;
  m.config.loss = cfg.loss;
  m.info["stage"] = std::string(to_string(cfg.stage));
  m.info["lambda"] = format_double(cfg.lambda);
  AdamW opt;
  const std::size_t spe = steps_per_epoch(data.size(), cfg.batch_size);
  std::size_t total = cfg.epochs * spe;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);
  const BatchOptions bo{cfg.batch_size, cfg.crop, cfg.downsample_prob};

  for (std::size_t step = 0; step < total; ++step) {
    const std::size_t epoch = step / spe;
    const double lr = cfg.lr.at(epoch, cfg.epochs);
    Batch batch = make_batch(data, bo, cfg.seed, epoch, step % spe);
    for (auto& w : batch.warnings) result.warnings.push_back(std::move(w));

    Graph g;
    BoundParams p(g, m.params, true);
    const RdTerms t = forward_train(p, batch.images, m, cfg, step);
    StepRecord rec{step,
                   epoch,
                   lr,
                   t.loss.value().item(),
                   t.bpp.value().item(),
                   t.distortion.value().item(),
                   t.mse};
    if (!std::isfinite(rec.loss)) {
      std::ostringstream msg;
      msg << to_string(cfg.stage) << " step " << step << " (epoch " << epoch
          << "): non-finite loss " << rec.loss << " (bpp " << rec.bpp << ", distortion "
          << rec.distortion << ", lr " << lr << ")";
      throw NumericError(msg.str());
    }
    g.backward(t.loss);
    std::map<std::string, Tensor> grads;
    for (const auto& [name, var] : p.leaves()) {
      Tensor gr = g.grad(var);
      if (const std::size_t bad = gr.first_non_finite(); bad != gr.size()) {
        throw NumericError(std::string(to_string(cfg.stage)) + " step " + std::to_string(step) +
                           ": non-finite gradient in " + name + " at element " +
                           std::to_string(bad));
      }
      grads.emplace(name, std::move(gr));
    }
    opt.step(m, grads, lr, cfg.weight_decay);
    m.project();
    result.history.push_back(rec);
    if (on_step) on_step(rec);
  }
  return result;
}

}  // namespace mkc
