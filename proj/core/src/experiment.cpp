#include "mkc/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mkc/checkpoint.hpp"
#include "mkc/codec.hpp"
#include "mkc/errors.hpp"
#include "mkc/image_io.hpp"

namespace mkc {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string log_step(const char* stage, const StepRecord& r) {
  std::ostringstream os;
  os << stage << " step " << r.step << " epoch " << r.epoch << " lr " << r.lr << " loss "
     << r.loss << " bpp " << r.bpp << " mse " << r.mse;
  return os.str();
}

TrainResult run_stage(const DatasetIndex& data, const ModelState& start, const TrainConfig& cfg,
                      const char* name, const Logger& log) {
  const std::size_t spe = steps_per_epoch(data.size(), cfg.batch_size);
  const std::size_t every = std::max<std::size_t>(1, spe * cfg.epochs / 20);
  return train_stage(data, start, cfg, [&](const StepRecord& r) {
    if (log && r.step % every == 0) log(log_step(name, r));
  });
}

}  // namespace

std::string format_rd_row(const RdRow& r) {
  return r.image + "," + format_double(r.bpp) + "," + format_double(r.psnr) + "," +
         format_double(r.msssim) + "," + format_double(r.lambda) + "," + r.stage;
}

void append_rd_csv(const std::vector<RdRow>& rows, const std::string& path) {
  namespace fs = std::filesystem;
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot write " + path);
  if (fresh) out << kRdCsvHeader << "\n";
  for (const auto& r : rows) {
    if (r.image.find(',') != std::string::npos) {
      throw DataError("image name '" + r.image + "' contains a comma");
    }
    out << format_rd_row(r) << "\n";
  }
  if (!out) throw DataError("cannot write " + path);
}

std::vector<RdRow> read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read RD CSV " + path);
  std::string line;
  if (!std::getline(in, line) || line != kRdCsvHeader) {
    throw DataError(path + ": expected header '" + kRdCsvHeader + "'");
  }
  std::vector<RdRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (f.size() != 6) throw DataError(where + ": expected 6 fields");
    try {
      rows.push_back({f[0], parse_double("bpp", f[1]), parse_double("psnr", f[2]),
                      parse_double("msssim", f[3]), parse_double("lambda", f[4]), f[5]});
    } catch (const ConfigError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return rows;
}

RDCurve curve_from_rows(const std::vector<RdRow>& rows) {
  struct Acc {
    double bpp = 0.0, psnr = 0.0, msssim = 0.0;
    std::size_t n = 0;
  };
  std::map<double, Acc> groups;
  for (const auto& r : rows) {
    Acc& a = groups[r.lambda];
    a.bpp += r.bpp;
    a.psnr += r.psnr;
    a.msssim += r.msssim;
    ++a.n;
  }
  std::vector<RDPoint> points;
  for (const auto& [lambda, a] : groups) {
    const double n = static_cast<double>(a.n);
    points.push_back({a.bpp / n, a.psnr / n, a.msssim / n});
  }
  return RDCurve(std::move(points));
}

TrainingRun run_training(const RunConfig& cfg, const DatasetIndex& data, const Logger& log) {
  cfg.validate();
  TrainingRun run;
  ModelState m;
  if (cfg.stages == StagePlan::kFinetune) {
    if (cfg.init_checkpoint.empty()) {
      throw ConfigError("finetune-only run needs train.init_checkpoint (a pretrain checkpoint)");
    }
    m = load_checkpoint(cfg.init_checkpoint, cfg.model);
  } else {
    m = ModelState::init(cfg.model);
  }
  if (cfg.stages != StagePlan::kFinetune) {
    TrainResult r = run_stage(data, m, cfg.pretrain, "pretrain", log);
    m = std::move(r.model);
    run.pretrain_history = std::move(r.history);
    for (auto& w : r.warnings) run.warnings.push_back(std::move(w));
  }
  if (cfg.stages != StagePlan::kPretrain) {
    TrainResult r = run_stage(data, m, cfg.finetune, "finetune", log);
    m = std::move(r.model);
    run.finetune_history = std::move(r.history);
    for (auto& w : r.warnings) run.warnings.push_back(std::move(w));
  }
  run.model = std::move(m);
  return run;
}

std::vector<RdRow> evaluate_images(const ModelState& m, const DatasetIndex& images) {
  const auto info = [&](const char* key) {
    auto it = m.info.find(key);
    return it == m.info.end() ? std::string() : it->second;
  };
  const std::string lambda = info("lambda");
  const double lam = lambda.empty() ? 0.0 : parse_double("lambda", lambda);
  std::vector<RdRow> rows;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor& x = images.image(i);
    const EncodeResult e = encode_image(x, m);
    const Tensor x_hat = quantize_8bit(decode_image(e.stream, m));
    rows.push_back({images.name(i), stream_bpp(e.stream), psnr(x, x_hat), ms_ssim(x, x_hat), lam,
                    info("stage")});
  }
  return rows;
}

std::string format_ablation_row(const AblationRow& r) {
  return std::string(to_string(r.strategy)) + "," + format_double(r.ratio) + "," +
         format_double(r.bpp) + "," + format_double(r.psnr) + "," + format_double(r.msssim) +
         "," + format_double(r.lambda);
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const DatasetIndex& train,
                                      const DatasetIndex& eval,
                                      const std::vector<MaskStrategy>& strategies,
                                      const std::vector<double>& ratios, const Logger& log) {
  if (strategies.empty() || ratios.empty()) {
    throw ConfigError("ablation needs at least one strategy and one ratio");
  }
  std::vector<AblationRow> rows;
  for (MaskStrategy s : strategies) {
    for (double ratio : ratios) {
      RunConfig c = cfg;
      c.stages = StagePlan::kBoth;
      c.pretrain.mask.strategy = s;
      c.pretrain.mask.ratio = ratio;
      if (log) log("ablation " + std::string(to_string(s)) + " ratio " + format_double(ratio));
      const TrainingRun run = run_training(c, train, log);
      const auto scores = evaluate_images(run.model, eval);
      AblationRow row{s, ratio, 0.0, 0.0, 0.0, c.finetune.lambda};
      for (const auto& r : scores) {
        row.bpp += r.bpp;
        row.psnr += r.psnr;
        row.msssim += r.msssim;
      }
      const double n = static_cast<double>(scores.size());
      row.bpp /= n;
      row.psnr /= n;
      row.msssim /= n;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace mkc
