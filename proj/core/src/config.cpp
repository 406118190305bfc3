#include "mkc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "mkc/errors.hpp"

namespace mkc {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& value) {
  std::vector<std::string> out;
  std::string_view rest = value;
  while (true) {
    const auto comma = rest.find(',');
    out.emplace_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values, const std::function<std::string(T)>& fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += fmt(values[i]);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " + expected);
}

std::string format_widths(const std::vector<std::size_t>& w) {
  return join<std::size_t>(w, [](std::size_t v) { return std::to_string(v); });
}

std::string format_list(const std::vector<double>& v) {
  return join<double>(v, format_double);
}

}  // namespace

std::vector<MaskStrategy> parse_strategy_list(const std::string& value) {
  std::vector<MaskStrategy> out;
  for (const auto& item : split_commas(value)) out.push_back(parse_mask_strategy(item));
  return out;
}

std::string format_strategy_list(const std::vector<MaskStrategy>& strategies) {
  return join<MaskStrategy>(strategies,
                            [](MaskStrategy s) { return std::string(to_string(s)); });
}

KeyValues parse_key_values(std::string_view text, const std::string& source) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) {
      throw ConfigError(where + ": expected key=value, got '" + std::string(line) + "'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!kv.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

KeyValues read_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path);
}

void write_key_value_file(const KeyValues& kv, const std::string& path) {
  std::ofstream out(path);
  out << format_key_values(kv);
  if (!out) throw DataError("cannot write " + path);
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a number");
  }
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "a boolean (true/false)");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split_commas(value)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  for (const auto& item : split_commas(value)) out.push_back(parse_size(key, item));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

KeyValues model_config_to_kv(const ModelConfig& c) {
  const TransformConfig& t = c.transform;
  return {
      {"model.widths", format_widths(t.widths)},
      {"model.latent_channels", std::to_string(t.latent_channels)},
      {"model.hyper_channels", std::to_string(t.hyper_channels)},
      {"model.image_channels", std::to_string(t.image_channels)},
      {"model.kernel", std::to_string(t.kernel)},
      {"model.hyper_kernel", std::to_string(t.hyper_kernel)},
      {"model.seed", std::to_string(c.seed)},
      {"model.loss", std::string(to_string(c.loss))},
      {"gate.keep_ratio", format_double(c.keep_ratio)},
      {"gate.learnable", c.gate_learnable ? "true" : "false"},
  };
}

ModelConfig model_config_from_kv(const KeyValues& kv) {
  ModelConfig c;
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("missing model key '" + key + "'");
    return it->second;
  };
  TransformConfig& t = c.transform;
  t.widths = parse_size_list("model.widths", get("model.widths"));
  t.latent_channels = parse_size("model.latent_channels", get("model.latent_channels"));
  t.hyper_channels = parse_size("model.hyper_channels", get("model.hyper_channels"));
  t.image_channels = parse_size("model.image_channels", get("model.image_channels"));
  t.kernel = static_cast<int>(parse_size("model.kernel", get("model.kernel")));
  t.hyper_kernel = static_cast<int>(parse_size("model.hyper_kernel", get("model.hyper_kernel")));
  c.seed = parse_u64("model.seed", get("model.seed"));
  c.loss = parse_loss(get("model.loss"));
  c.keep_ratio = parse_double("gate.keep_ratio", get("gate.keep_ratio"));
  c.gate_learnable = parse_bool("gate.learnable", get("gate.learnable"));
  c.validate();
  return c;
}

std::string_view to_string(StagePlan p) {
  switch (p) {
    case StagePlan::kPretrain: return "pretrain";
    case StagePlan::kFinetune: return "finetune";
    case StagePlan::kBoth: return "both";
  }
  return "both";
}

StagePlan parse_stage_plan(std::string_view s) {
  if (s == "pretrain") return StagePlan::kPretrain;
  if (s == "finetune") return StagePlan::kFinetune;
  if (s == "both") return StagePlan::kBoth;
  throw ConfigError("unknown train.stages '" + std::string(s) +
                    "' (expected pretrain, finetune or both)");
}

RunConfig::RunConfig() { model.transform = transform_preset(preset); }

void RunConfig::apply(const KeyValues& kv) {
  if (auto it = kv.find("model.preset"); it != kv.end()) {
    preset = it->second;
    model.transform = transform_preset(preset);
  }
  TransformConfig& t = model.transform;
  auto both = [&](auto&& fn) {
    fn(pretrain);
    fn(finetune);
  };
  for (const auto& [key, value] : kv) {
    if (key == "model.preset" || key.rfind("manifest.", 0) == 0) continue;
    const std::string& k = key;
    const std::string& v = value;
    if (k == "model.widths") {
      t.widths = parse_size_list(k, v);
    } else if (k == "model.latent_channels") {
      t.latent_channels = parse_size(k, v);
    } else if (k == "model.hyper_channels") {
      t.hyper_channels = parse_size(k, v);
    } else if (k == "model.kernel") {
      t.kernel = static_cast<int>(parse_size(k, v));
    } else if (k == "model.hyper_kernel") {
      t.hyper_kernel = static_cast<int>(parse_size(k, v));
    } else if (k == "model.seed") {
      model.seed = parse_u64(k, v);
    } else if (k == "gate.keep_ratio") {
      model.keep_ratio = parse_double(k, v);
    } else if (k == "gate.learnable") {
      model.gate_learnable = parse_bool(k, v);
    } else if (k == "mask.strategy") {
      const MaskStrategy s = parse_mask_strategy(v);
      both([&](TrainConfig& c) { c.mask.strategy = s; });
    } else if (k == "mask.ratio") {
      const double r = parse_double(k, v);
      both([&](TrainConfig& c) { c.mask.ratio = r; });
    } else if (k == "train.stages") {
      stages = parse_stage_plan(v);
    } else if (k == "train.loss") {
      const LossType l = parse_loss(v);
      both([&](TrainConfig& c) { c.loss = l; });
      model.loss = l;
    } else if (k == "train.batch_size") {
      const std::size_t b = parse_size(k, v);
      both([&](TrainConfig& c) { c.batch_size = b; });
    } else if (k == "train.crop") {
      const std::size_t c0 = parse_size(k, v);
      both([&](TrainConfig& c) { c.crop = c0; });
    } else if (k == "train.downsample_prob") {
      const double p = parse_double(k, v);
      both([&](TrainConfig& c) { c.downsample_prob = p; });
    } else if (k == "train.weight_decay") {
      const double w = parse_double(k, v);
      both([&](TrainConfig& c) { c.weight_decay = w; });
    } else if (k == "train.seed") {
      const std::uint64_t s = parse_u64(k, v);
      both([&](TrainConfig& c) { c.seed = s; });
    } else if (k == "train.mse_scale") {
      const double s = parse_double(k, v);
      both([&](TrainConfig& c) { c.mse_scale = s; });
    } else if (k == "train.init_checkpoint") {
      init_checkpoint = v;
    } else if (k == "data.train_dir") {
      train_dir = v;
    } else if (k == "data.eval_dir") {
      eval_dir = v;
    } else if (k == "output.dir") {
      output_dir = v;
    } else if (k == "ablate.strategies") {
      ablate_strategies = parse_strategy_list(v);
    } else if (k == "ablate.ratios") {
      ablate_ratios = parse_double_list(k, v);
    } else {
      const auto dot = k.find('.');
      const std::string section = k.substr(0, dot);
      const std::string field = dot == std::string::npos ? "" : k.substr(dot + 1);
      TrainConfig* stage = section == "pretrain"   ? &pretrain
                           : section == "finetune" ? &finetune
                                                   : nullptr;
      if (stage == nullptr) throw ConfigError("unknown config key '" + k + "'");
      if (field == "lambda") {
        stage->lambda = parse_double(k, v);
      } else if (field == "epochs") {
        stage->epochs = parse_size(k, v);
      } else if (field == "lr") {
        stage->lr.initial = parse_double(k, v);
      } else if (field == "lr_milestones") {
        stage->lr.milestones = parse_double_list(k, v);
      } else if (field == "lr_decay") {
        stage->lr.factor = parse_double(k, v);
      } else if (field == "max_steps") {
        stage->max_steps = parse_size(k, v);
      } else {
        throw ConfigError("unknown config key '" + k + "'");
      }
    }
  }
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv = model_config_to_kv(model);
  kv.erase("model.image_channels");
  kv.erase("model.loss");
  kv["model.preset"] = preset;
  kv["mask.strategy"] = std::string(to_string(pretrain.mask.strategy));
  kv["mask.ratio"] = format_double(pretrain.mask.ratio);
  kv["train.stages"] = std::string(to_string(stages));
  kv["train.loss"] = std::string(to_string(pretrain.loss));
  kv["train.batch_size"] = std::to_string(pretrain.batch_size);
  kv["train.crop"] = std::to_string(pretrain.crop);
  kv["train.downsample_prob"] = format_double(pretrain.downsample_prob);
  kv["train.weight_decay"] = format_double(pretrain.weight_decay);
  kv["train.seed"] = std::to_string(pretrain.seed);
  kv["train.mse_scale"] = format_double(pretrain.mse_scale);
  kv["train.init_checkpoint"] = init_checkpoint;
  for (const auto* s : {&pretrain, &finetune}) {
    const std::string p = s == &pretrain ? "pretrain." : "finetune.";
    kv[p + "lambda"] = format_double(s->lambda);
    kv[p + "epochs"] = std::to_string(s->epochs);
    kv[p + "lr"] = format_double(s->lr.initial);
    kv[p + "lr_milestones"] = format_list(s->lr.milestones);
    kv[p + "lr_decay"] = format_double(s->lr.factor);
    kv[p + "max_steps"] = std::to_string(s->max_steps);
  }
  kv["data.train_dir"] = train_dir;
  kv["data.eval_dir"] = eval_dir;
  kv["output.dir"] = output_dir;
  kv["ablate.strategies"] = format_strategy_list(ablate_strategies);
  kv["ablate.ratios"] = format_list(ablate_ratios);
  return kv;
}

void RunConfig::validate() const {
  model.validate();
  pretrain.validate();
  finetune.validate();
  if (pretrain.stage != Stage::kPretrain || finetune.stage != Stage::kFinetune) {
    throw ConfigError("stage configs are out of order");
  }
}

}  // namespace mkc
