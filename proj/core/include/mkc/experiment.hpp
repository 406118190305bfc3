#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mkc/config.hpp"
#include "mkc/dataset.hpp"
#include "mkc/metrics.hpp"
#include "mkc/model.hpp"
#include "mkc/train.hpp"

namespace mkc {

// One row of the RD CSV: image,bpp,psnr,msssim,lambda,stage.
struct RdRow {
  std::string image;
  double bpp = 0.0;
  double psnr = 0.0;
  double msssim = 0.0;
  double lambda = 0.0;
  std::string stage;

  friend bool operator==(const RdRow&, const RdRow&) = default;
};

inline constexpr const char* kRdCsvHeader = "image,bpp,psnr,msssim,lambda,stage";

// Appends rows, writing the header first when the file is new or empty.
void append_rd_csv(const std::vector<RdRow>& rows, const std::string& path);
// Throws DataError on a missing file, wrong header or malformed row.
std::vector<RdRow> read_rd_csv(const std::string& path);
std::string format_rd_row(const RdRow& r);

// Averages rows sharing a lambda into one RD point per lambda.
RDCurve curve_from_rows(const std::vector<RdRow>& rows);

struct TrainingRun {
  ModelState model;
  std::vector<StepRecord> pretrain_history;
  std::vector<StepRecord> finetune_history;
  std::vector<std::string> warnings;
};

using Logger = std::function<void(const std::string&)>;

// Executes the stages selected by cfg.stages. A finetune-only run starts
// from cfg.init_checkpoint and fails with ConfigError when none is given.
TrainingRun run_training(const RunConfig& cfg, const DatasetIndex& data,
                         const Logger& log = {});

// Encodes every image and scores the decoded 8-bit reconstruction. bpp
// counts the whole stream, header included.
std::vector<RdRow> evaluate_images(const ModelState& m, const DatasetIndex& images);

struct AblationRow {
  MaskStrategy strategy = MaskStrategy::kCube;
  double ratio = 0.0;
  double bpp = 0.0;
  double psnr = 0.0;
  double msssim = 0.0;
  double lambda = 0.0;
};

inline constexpr const char* kAblationCsvHeader = "strategy,ratio,bpp,psnr,msssim,lambda";
std::string format_ablation_row(const AblationRow& r);

// Pretrains with each (strategy, ratio) pair, finetunes, and reports mean
// metrics over `eval`. Every pair starts from the same initial model.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const DatasetIndex& train,
                                      const DatasetIndex& eval,
                                      const std::vector<MaskStrategy>& strategies,
                                      const std::vector<double>& ratios,
                                      const Logger& log = {});

}  // namespace mkc
