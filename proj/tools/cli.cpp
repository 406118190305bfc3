#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>

#include "mkc/checkpoint.hpp"
#include "mkc/codec.hpp"
#include "mkc/config.hpp"
#include "mkc/errors.hpp"
#include "mkc/experiment.hpp"
#include "mkc/image_io.hpp"

#ifndef MKC_VERSION
#define MKC_VERSION "unknown"
#endif

namespace mkc {
namespace {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path);
}

std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

// Shared state of one invocation.
struct Session {
  std::string command_line;
  std::string config_file;
  std::vector<std::string> sets;
  bool quiet = false;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  RunConfig resolve(const KeyValues& flag_overrides) const {
    RunConfig cfg;
    if (!config_file.empty()) cfg.apply(read_key_value_file(config_file));
    KeyValues kv;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    cfg.apply(kv);
    cfg.apply(flag_overrides);
    cfg.validate();
    return cfg;
  }

  Logger logger() const {
    if (quiet) return {};
    return [this](const std::string& line) { *err << "[mkc] " << line << "\n"; };
  }

  void write_manifest(const RunConfig& cfg, const std::string& subcommand,
                      const std::string& path, const KeyValues& extra = {}) const {
    KeyValues kv = cfg.to_key_values();
    kv["manifest.subcommand"] = subcommand;
    kv["manifest.command"] = command_line;
    kv["manifest.version"] = MKC_VERSION;
    kv["manifest.compiler"] = __VERSION__;
    kv["manifest.bitstream_version"] = std::to_string(kBitstreamVersion);
    kv["manifest.checkpoint_version"] = std::to_string(kCheckpointVersion);
    for (const auto& [k, v] : extra) kv["manifest." + k] = v;
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
    write_key_value_file(kv, path);
    if (auto log = logger()) log("manifest written to " + path);
  }
};

void write_history(const std::vector<StepRecord>& pre, const std::vector<StepRecord>& fine,
                   const std::string& path) {
  std::ofstream out(path);
  out << "stage,step,epoch,lr,loss,bpp,distortion,mse\n";
  auto rows = [&](const char* stage, const std::vector<StepRecord>& h) {
    for (const auto& r : h) {
      out << stage << "," << r.step << "," << r.epoch << "," << format_double(r.lr) << ","
          << format_double(r.loss) << "," << format_double(r.bpp) << ","
          << format_double(r.distortion) << "," << format_double(r.mse) << "\n";
    }
  };
  rows("pretrain", pre);
  rows("finetune", fine);
  if (!out) throw DataError("cannot write " + path);
}

int cmd_train(const Session& s, const KeyValues& flags) {
  const RunConfig cfg = s.resolve(flags);
  if (cfg.train_dir.empty()) throw ConfigError("train needs data.train_dir (or --train-dir)");
  ensure_dir(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  s.write_manifest(cfg, "train", (dir / "train.manifest").string());
  const DatasetIndex data = DatasetIndex::from_directory(cfg.train_dir);
  const auto log = s.logger();

  TrainingRun run;
  if (cfg.stages == StagePlan::kBoth) {
    // Keep the intermediate pretrain checkpoint so finetuning can be rerun.
    RunConfig pre = cfg;
    pre.stages = StagePlan::kPretrain;
    TrainingRun p = run_training(pre, data, log);
    const std::string pre_ckpt = (dir / "pretrain.ckpt").string();
    save_checkpoint(p.model, pre_ckpt);
    RunConfig fine = cfg;
    fine.stages = StagePlan::kFinetune;
    fine.init_checkpoint = pre_ckpt;
    run = run_training(fine, data, log);
    run.pretrain_history = std::move(p.pretrain_history);
    run.warnings.insert(run.warnings.begin(), p.warnings.begin(), p.warnings.end());
  } else {
    run = run_training(cfg, data, log);
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& w : run.warnings) ++counts[w];
  for (const auto& [w, n] : counts) {
    *s.err << "[mkc] warning: " << w << (n > 1 ? " (x" + std::to_string(n) + ")" : "") << "\n";
  }
  const std::string ckpt = (dir / "model.ckpt").string();
  save_checkpoint(run.model, ckpt);
  write_history(run.pretrain_history, run.finetune_history, (dir / "history.csv").string());
  *s.out << ckpt << "\n";
  return kExitOk;
}

int cmd_encode(const Session& s, const std::string& model, const std::string& in,
               const std::string& out_path, const std::string& recon) {
  const RunConfig cfg = s.resolve({});
  const auto ckpt_bytes = read_bytes(model);
  const ModelState m = load_checkpoint(model);
  const Tensor x = load_image(in);
  const EncodeResult e = encode_image(x, m);
  write_bytes(e.stream.serialize(), out_path);
  if (!recon.empty()) save_image(e.reconstruction, recon);
  s.write_manifest(cfg, "encode", out_path + ".manifest",
                   {{"model", model}, {"model_fnv1a", fnv1a_hex(ckpt_bytes)}, {"input", in}});
  std::ostringstream os;
  os << in << ": " << e.stream.size_bytes() << " bytes, " << format_double(stream_bpp(e.stream))
     << " bpp (estimate " << format_double(e.estimate.bpp) << ")";
  *s.out << os.str() << "\n";
  return kExitOk;
}

int cmd_decode(const Session& s, const std::string& model, const std::string& in,
               const std::string& out_path) {
  const RunConfig cfg = s.resolve({});
  const auto ckpt_bytes = read_bytes(model);
  const ModelState m = load_checkpoint(model);
  const Bitstream bs = Bitstream::parse(read_bytes(in));
  save_image(decode_image(bs, m), out_path);
  s.write_manifest(cfg, "decode", out_path + ".manifest",
                   {{"model", model}, {"model_fnv1a", fnv1a_hex(ckpt_bytes)}, {"input", in}});
  *s.out << out_path << "\n";
  return kExitOk;
}

int cmd_eval(const Session& s, const std::string& model, const KeyValues& flags,
             const std::string& csv) {
  const RunConfig cfg = s.resolve(flags);
  if (cfg.eval_dir.empty()) throw ConfigError("eval needs data.eval_dir (or --images)");
  const auto ckpt_bytes = read_bytes(model);
  const ModelState m = load_checkpoint(model);
  const DatasetIndex images = DatasetIndex::from_directory(cfg.eval_dir);
  const auto rows = evaluate_images(m, images);
  const std::string path = csv.empty() ? (fs::path(cfg.output_dir) / "rd.csv").string() : csv;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  append_rd_csv(rows, path);
  s.write_manifest(cfg, "eval", (fs::path(cfg.output_dir) / "eval.manifest").string(),
                   {{"model", model}, {"model_fnv1a", fnv1a_hex(ckpt_bytes)}, {"csv", path}});
  for (const auto& r : rows) *s.out << format_rd_row(r) << "\n";
  return kExitOk;
}

int cmd_ablate(const Session& s, const KeyValues& flags, const std::string& csv) {
  const RunConfig cfg = s.resolve(flags);
  if (cfg.train_dir.empty()) throw ConfigError("ablate needs data.train_dir (or --train-dir)");
  ensure_dir(cfg.output_dir);
  const std::string path =
      csv.empty() ? (fs::path(cfg.output_dir) / "ablation.csv").string() : csv;
  s.write_manifest(cfg, "ablate", (fs::path(cfg.output_dir) / "ablate.manifest").string(),
                   {{"csv", path}});
  const DatasetIndex train = DatasetIndex::from_directory(cfg.train_dir);
  const DatasetIndex eval =
      cfg.eval_dir.empty() ? train : DatasetIndex::from_directory(cfg.eval_dir);
  const auto rows =
      run_ablation(cfg, train, eval, cfg.ablate_strategies, cfg.ablate_ratios, s.logger());
  std::ofstream out(path);
  out << kAblationCsvHeader << "\n";
  for (const auto& r : rows) out << format_ablation_row(r) << "\n";
  if (!out) throw DataError("cannot write " + path);
  *s.out << kAblationCsvHeader << "\n";
  for (const auto& r : rows) *s.out << format_ablation_row(r) << "\n";
  return kExitOk;
}

int cmd_bdrate(const Session& s, const KeyValues& flags, const std::string& test,
               const std::string& anchor, const std::string& table, const std::string& savings) {
  const RunConfig cfg = s.resolve(flags);
  const RDCurve t = curve_from_rows(read_rd_csv(test));
  const RDCurve a = curve_from_rows(read_rd_csv(anchor));
  for (const auto* c : {&t, &a}) {
    for (const auto& w : c->warnings()) *s.err << "[mkc] warning: " << w << "\n";
  }
  const double bd = bd_rate(t, a);
  std::ostringstream pct;
  pct << std::fixed << std::setprecision(2) << (bd == 0.0 ? 0.0 : bd) << "%";
  *s.out << "BD-rate (PSNR): " << pct.str() << "\n";
  if (!table.empty()) {
    std::ofstream out(table);
    out << "test,anchor,bd_rate_percent\n" << test << "," << anchor << "," << format_double(bd)
        << "\n";
    if (!out) throw DataError("cannot write " + table);
  }
  if (!savings.empty()) {
    const CubicFit ft = fit_log_rate(t), fa = fit_log_rate(a);
    const double lo = std::max(ft.min_psnr, fa.min_psnr), hi = std::min(ft.max_psnr, fa.max_psnr);
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(lo + (hi - lo) * i / 20.0);
    const SavingsCurve curve = rate_savings_curve(t, a, grid);
    std::ofstream out(savings);
    out << "psnr,savings_percent\n";
    for (const auto& p : curve.points) {
      out << format_double(p.psnr) << "," << format_double(p.savings) << "\n";
    }
    if (!out) throw DataError("cannot write " + savings);
  }
  s.write_manifest(cfg, "bdrate", (fs::path(cfg.output_dir) / "bdrate.manifest").string(),
                   {{"test", test}, {"anchor", anchor}});
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Session s;
  s.out = &out;
  s.err = &err;
  for (int i = 0; i < argc; ++i) s.command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Masked learned image codec"};
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--config", s.config_file, "key=value config file (a manifest also works)");
  app.add_option("--set", s.sets, "override one config key, e.g. --set mask.ratio=0.5");
  app.add_flag("--quiet", s.quiet, "suppress progress logs");

  std::string train_dir, eval_dir, out_dir, model, in, out_path, recon, csv, strategies, ratios;
  std::string test, anchor, table, savings;
  auto dir_flags = [&](CLI::App* sub) {
    sub->add_option("--train-dir", train_dir, "training image folder (data.train_dir)");
    sub->add_option("--out-dir", out_dir, "output directory (output.dir)");
  };

  CLI::App* train = app.add_subcommand("train", "run pretrain and/or finetune stages");
  dir_flags(train);

  CLI::App* encode = app.add_subcommand("encode", "compress an image to a .mkc bitstream");
  encode->add_option("--model", model, "checkpoint")->required();
  encode->add_option("--in", in, "input PNG/PPM")->required();
  encode->add_option("--out", out_path, "output .mkc")->required();
  encode->add_option("--recon", recon, "also write the encoder-side reconstruction");

  CLI::App* decode = app.add_subcommand("decode", "reconstruct an image from a .mkc bitstream");
  decode->add_option("--model", model, "checkpoint")->required();
  decode->add_option("--in", in, "input .mkc")->required();
  decode->add_option("--out", out_path, "output PNG/PPM")->required();

  CLI::App* eval = app.add_subcommand("eval", "append RD rows for a folder of images");
  eval->add_option("--model", model, "checkpoint")->required();
  eval->add_option("--images", eval_dir, "image folder (data.eval_dir)");
  eval->add_option("--csv", csv, "RD CSV to append to (default <output.dir>/rd.csv)");
  eval->add_option("--out-dir", out_dir, "output directory (output.dir)");

  CLI::App* ablate = app.add_subcommand("ablate", "sweep mask strategies x ratios");
  dir_flags(ablate);
  ablate->add_option("--eval-dir", eval_dir, "evaluation folder (data.eval_dir)");
  ablate->add_option("--strategies", strategies, "e.g. cube,spatial,channel,spatial_merge");
  ablate->add_option("--ratios", ratios, "e.g. 0.2,0.5");
  ablate->add_option("--csv", csv, "output CSV (default <output.dir>/ablation.csv)");

  CLI::App* bdrate = app.add_subcommand("bdrate", "BD-rate of two RD CSVs");
  bdrate->add_option("--test", test, "RD CSV of the tested codec")->required();
  bdrate->add_option("--anchor", anchor, "RD CSV of the anchor")->required();
  bdrate->add_option("--table", table, "write a one-row BD-rate CSV");
  bdrate->add_option("--savings", savings, "write a rate-savings curve CSV");
  bdrate->add_option("--out-dir", out_dir, "output directory (output.dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  KeyValues flags;
  if (!train_dir.empty()) flags["data.train_dir"] = train_dir;
  if (!eval_dir.empty()) flags["data.eval_dir"] = eval_dir;
  if (!out_dir.empty()) flags["output.dir"] = out_dir;
  if (!strategies.empty()) flags["ablate.strategies"] = strategies;
  if (!ratios.empty()) flags["ablate.ratios"] = ratios;

  try {
    if (train->parsed()) return cmd_train(s, flags);
    if (encode->parsed()) return cmd_encode(s, model, in, out_path, recon);
    if (decode->parsed()) return cmd_decode(s, model, in, out_path);
    if (eval->parsed()) return cmd_eval(s, model, flags, csv);
    if (ablate->parsed()) return cmd_ablate(s, flags, csv);
    if (bdrate->parsed()) return cmd_bdrate(s, flags, test, anchor, table, savings);
  } catch (const ConfigError& e) {
    err << "mkc: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "mkc: numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "mkc: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "mkc: data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace mkc
