#pragma once

#include <map>
#include <string>
#include <string_view>

#include "mkc/model.hpp"
#include "mkc/train.hpp"

namespace mkc {

// Flat dotted-key configuration, e.g. "mask.ratio=0.5". Ordered so that
// formatted output is stable.
using KeyValues = std::map<std::string, std::string>;

// One "key=value" per line; blank lines and lines starting with '#' are
// skipped, whitespace around key and value is trimmed. Duplicate keys and
// malformed lines raise ConfigError citing `source` and the line number.
KeyValues parse_key_values(std::string_view text, const std::string& source = "<text>");
std::string format_key_values(const KeyValues& kv);
// Throws ConfigError if the file cannot be read.
KeyValues read_key_value_file(const std::string& path);
void write_key_value_file(const KeyValues& kv, const std::string& path);

// Typed value parsers used by the config layer; each throws ConfigError
// naming `key` on malformed input.
double parse_double(const std::string& key, const std::string& value);
std::size_t parse_size(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<double> parse_double_list(const std::string& key, const std::string& value);
std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value);
std::string format_double(double v);
std::vector<MaskStrategy> parse_strategy_list(const std::string& value);
std::string format_strategy_list(const std::vector<MaskStrategy>& strategies);

// "model.*" and "gate.*" keys of a ModelConfig, including the loss.
KeyValues model_config_to_kv(const ModelConfig& c);
ModelConfig model_config_from_kv(const KeyValues& kv);

// Which stages a train run executes.
enum class StagePlan { kPretrain, kFinetune, kBoth };
std::string_view to_string(StagePlan p);
StagePlan parse_stage_plan(std::string_view s);

// Everything a CLI run can be configured with. Every field has a default
// and appears in to_key_values(), which is what the run manifest records.
struct RunConfig {
  std::string preset = "toy";
  ModelConfig model;
  StagePlan stages = StagePlan::kBoth;
  TrainConfig pretrain = TrainConfig::pretrain_defaults();
  TrainConfig finetune = TrainConfig::finetune_defaults();
  // Checkpoint a finetune-only run starts from.
  std::string init_checkpoint;
  std::string train_dir;
  std::string eval_dir;
  std::string output_dir = "runs/default";
  // Sweep of the ablate command.
  std::vector<MaskStrategy> ablate_strategies = {MaskStrategy::kCube, MaskStrategy::kSpatial,
                                                 MaskStrategy::kChannel,
                                                 MaskStrategy::kSpatialMerge};
  std::vector<double> ablate_ratios = {0.25, 0.5, 0.75};

  RunConfig();

  // Applies overrides on top of the current values. "model.preset" is applied
  // first so explicit architecture keys win over it; "manifest.*" keys are
  // ignored so a manifest can be fed back as a config. Unknown keys raise
  // ConfigError.
  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;
  void validate() const;
};

}  // namespace mkc
