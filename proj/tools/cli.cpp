#include "cli.hpp"

#include <torch/torch.h>
#include <torch/version.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "viteraser/checkpoint.hpp"
#include "viteraser/data.hpp"
#include "viteraser/errors.hpp"
#include "viteraser/image_io.hpp"
#include "viteraser/kv.hpp"
#include "viteraser/metrics.hpp"
#include "viteraser/random.hpp"
#include "viteraser/trainer.hpp"

namespace fs = std::filesystem;

namespace viteraser::cli {
namespace {

constexpr const char* kCheckpointName = "checkpoint.vtck";
constexpr const char* kLogName = "loss_log.jsonl";

// Usage errors found after argument parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') {
      out += "; ";
      while (i + 1 < text.size() && text[i + 1] == ' ') ++i;
    } else {
      out += text[i];
    }
  }
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

// Config file, then --set overrides, then --seed. Dotted keys may carry a
// `model.` or `train.` prefix.
KvDocument config_document(const CliInvocation& inv) {
  KvDocument doc;
  if (!inv.config_path.empty()) doc = KvDocument::load(inv.config_path);
  for (const auto& item : inv.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + item + "'");
    auto key = item.substr(0, eq);
    for (const char* prefix : {"model.", "train."}) {
      if (key.rfind(prefix, 0) == 0) key = key.substr(std::string(prefix).size());
    }
    doc.set(key, item.substr(eq + 1));
  }
  if (inv.seed) doc.set("seed", std::to_string(*inv.seed));
  return doc;
}

nlohmann::json kv_json(const KvDocument& doc) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : doc.entries()) j[k] = v;
  return j;
}

void write_manifest(const CliInvocation& inv, const nlohmann::json& extra) {
  nlohmann::json m;
  m["command"] = inv.command;
  m["inputs"] = {{"config", inv.config_path}, {"in", inv.in}, {"ckpt", inv.ckpt}, {"gt", inv.gt}};
  m["overrides"] = inv.overrides;
  m["device"] = inv.device;
  m["versions"] = {{"viteraser", VITERASER_VERSION}, {"libtorch", TORCH_VERSION}};
  m.update(extra);
  std::ofstream out(fs::path(inv.out) / "manifest.json");
  out << m.dump(2) << '\n';
  if (!out) throw Error("cannot write manifest in '" + inv.out + "'");
}

int cmd_make_data(const CliInvocation& inv, std::ostream& out) {
  require(inv.count > 0, "--count must be positive");
  require(inv.size > 0 && inv.size % 32 == 0, "--size must be a positive multiple of 32");
  const std::uint64_t seed = inv.seed.value_or(0);
  fs::create_directories(inv.out);
  for (std::int64_t i = 0; i < inv.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05lld", static_cast<long long>(i));
    write_synth_sample(inv.out, name, synth_sample_with_boxes(derive_seed(seed, {static_cast<std::uint64_t>(i)}), inv.size));
  }
  write_manifest(inv, {{"seed", seed}, {"count", inv.count}, {"size", inv.size}});
  out << "wrote " << inv.count << " samples to " << inv.out << '\n';
  return kOk;
}

// Drops log lines for steps at or after `global_step`: a run interrupted
// between checkpoints logged steps that the resumed run repeats.
void truncate_log(const fs::path& path, std::int64_t global_step) {
  std::ifstream in(path);
  if (!in) return;
  std::string kept;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.contains("global_step")) continue;
    if (j["global_step"].get<std::int64_t>() < global_step) kept += line + '\n';
  }
  in.close();
  std::ofstream(path, std::ios::trunc) << kept;
}

int cmd_train(const CliInvocation& inv, TrainMode mode, std::ostream& out, std::ostream& err) {
  require(!inv.in.empty(), "--in is required");
  const auto resolved = resolve_config(config_document(inv), mode);
  fs::create_directories(inv.out);

  std::unique_ptr<TrainSource> str_data;
  std::unique_ptr<PretrainSource> pre_data;
  if (mode == TrainMode::kStr) {
    str_data = std::make_unique<PairedDirDataset>(inv.in);
  } else {
    pre_data = std::make_unique<PretrainDirDataset>(inv.in);
  }

  Trainer trainer(resolved.model, resolved.train, mode);
  bool resumed = false;
  if (!inv.ckpt.empty()) {
    const auto ckpt = load_checkpoint(inv.ckpt);
    const auto it = ckpt.metadata.find("mode");
    if (it != ckpt.metadata.end() && it->second == to_string(mode)) {
      for (const auto& w : trainer.restore(ckpt)) err << "warning: " << w << '\n';
      resumed = true;
    } else {
      const auto cfg = ckpt.metadata.find("model_config");
      if (cfg != ckpt.metadata.end() && cfg->second != serialize(resolved.model)) {
        err << "warning: checkpoint model config differs from the requested config\n";
      }
      trainer.load_generator_weights(ckpt);
    }
  }

  const auto log_path = fs::path(inv.out) / kLogName;
  if (resumed) truncate_log(log_path, trainer.progress().global_step);
  std::ofstream log(log_path, resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("cannot open loss log '" + log_path.string() + "'");

  nlohmann::json extra;
  extra["seed"] = resolved.train.seed;
  extra["config"] = kv_json(to_kv(resolved));
  extra["init"] = inv.ckpt.empty() ? "scratch" : (resumed ? "resume" : "weights");
  write_manifest(inv, extra);

  const auto ckpt_path = (fs::path(inv.out) / kCheckpointName).string();
  trainer.fit(str_data.get(), pre_data.get(), &log, ckpt_path, [&](const TrainProgress& p) {
    err << to_string(mode) << ": epoch " << p.epoch << "/" << resolved.train.epochs << " done\n";
  });
  out << "checkpoint: " << ckpt_path << '\n';
  return kOk;
}

fs::path image_dir_of(const std::string& root) {
  const auto sub = fs::path(root) / "image";
  return fs::is_directory(sub) ? sub : fs::path(root);
}

int cmd_erase(const CliInvocation& inv, std::ostream& out) {
  require(!inv.in.empty(), "--in is required");
  require(!inv.ckpt.empty(), "--ckpt is required");
  require(fs::absolute(inv.in) != fs::absolute(inv.out), "--out must differ from --in");
  auto model = load_generator(inv.ckpt);
  const auto size = model->config().input_size;
  const auto in_dir = image_dir_of(inv.in);
  const auto names = list_png(in_dir.string());
  fs::create_directories(inv.out);
  torch::NoGradGuard no_grad;
  namespace F = torch::nn::functional;
  for (const auto& name : names) {
    const auto image = to_tensor(read_png((in_dir / name).string()));
    const auto h = image.size(1), w = image.size(2);
    auto x = image.unsqueeze(0);
    const bool resize = h != size || w != size;
    auto opts = F::InterpolateFuncOptions().mode(torch::kBilinear).align_corners(false);
    if (resize) x = F::interpolate(x, opts.size(std::vector<std::int64_t>{size, size}));
    auto y = model->forward(x).image;
    if (resize) y = F::interpolate(y, opts.size(std::vector<std::int64_t>{h, w}));
    write_png((fs::path(inv.out) / name).string(), to_image8(y.clamp(0.0, 1.0)));
  }
  write_manifest(inv, {{"images", names.size()}, {"model_config", kv_json(to_kv(model->config()))}});
  out << "erased " << names.size() << " images into " << inv.out << '\n';
  return kOk;
}

int cmd_eval(const CliInvocation& inv, std::ostream& out) {
  require(!inv.in.empty(), "--in is required");
  require(!inv.gt.empty(), "--gt is required");
  require(inv.format == "csv" || inv.format == "summary" || inv.format == "both",
          "--format must be csv, summary or both");
  auto gt = fs::path(inv.gt);
  if (fs::is_directory(gt / "label")) gt /= "label";
  const auto threshold_doc = config_document(inv);
  int threshold = 20;
  if (const auto t = threshold_doc.get("error_threshold")) threshold = static_cast<int>(kv::parse_int("error_threshold", *t));
  const auto report = evaluate_corpus(image_dir_of(inv.in).string(), gt.string(), threshold);
  if (!inv.out.empty()) {
    fs::create_directories(inv.out);
    if (inv.format != "summary") std::ofstream(fs::path(inv.out) / "metrics.csv") << report.csv();
    if (inv.format != "csv") std::ofstream(fs::path(inv.out) / "summary.txt") << report.summary();
    write_manifest(inv, {{"error_threshold", threshold}, {"images", report.images.size()}});
  }
  if (report.psnr_excluded > 0) {
    out << "note: " << report.psnr_excluded << " identical pair(s) excluded from the PSNR mean\n";
  }
  if (inv.format == "csv") out << report.csv(); else out << report.summary();
  return kOk;
}

void mark_failed(const CliInvocation& inv, const std::string& message) {
  if (inv.out.empty()) return;
  std::error_code ec;
  fs::create_directories(inv.out, ec);
  if (!fs::is_directory(inv.out, ec)) return;
  std::ofstream(fs::path(inv.out) / "FAILED") << message << '\n';
}

}  // namespace

std::optional<int> parse_args(int argc, const char* const* argv, CliInvocation& inv, std::ostream& out,
                              std::ostream& err) {
  CLI::App app{"Scene text removal with a vision-transformer encoder-decoder"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", inv.overrides, "override a config key (key=value), repeatable");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--device", inv.device, "compute device (cpu)");
  };

  auto* make = app.add_subcommand("make-data", "write a synthetic paired corpus");
  make->add_option("--out", inv.out, "output directory")->required();
  make->add_option("--count", inv.count, "number of samples");
  make->add_option("--size", inv.size, "image side (multiple of 32)");
  common(make);

  for (const char* name : {"pretrain", "finetune-encoder", "train"}) {
    auto* sub = app.add_subcommand(name, std::string(name) + " the model");
    sub->add_option("--in", inv.in, "training data directory")->required();
    sub->add_option("--out", inv.out, "run directory")->required();
    sub->add_option("--ckpt", inv.ckpt, "checkpoint to resume or initialize from");
    common(sub);
  }

  auto* erase = app.add_subcommand("erase", "remove text from a directory of images");
  erase->add_option("--in", inv.in, "input image directory")->required();
  erase->add_option("--out", inv.out, "output directory")->required();
  erase->add_option("--ckpt", inv.ckpt, "trained checkpoint")->required();
  common(erase);

  auto* eval = app.add_subcommand("eval", "image-quality metrics against ground truth");
  eval->add_option("--in", inv.in, "predicted image directory")->required();
  eval->add_option("--gt", inv.gt, "ground-truth directory")->required();
  eval->add_option("--out", inv.out, "report directory");
  eval->add_option("--format", inv.format, "csv, summary or both");
  common(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kUsage;
  }
  inv.command = app.get_subcommands().front()->get_name();
  if (app.get_subcommands().front()->count("--seed") > 0) inv.seed = seed;
  return std::nullopt;
}

int run(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  try {
    if (inv.device != "cpu") throw UsageError("device '" + inv.device + "' is not available; this build runs on cpu");
    // Denormal arithmetic slows CPU training several-fold once activations
    // or gradients decay towards zero.
    at::globalContext().setFlushDenormal(true);
    if (inv.command == "make-data") return cmd_make_data(inv, out);
    if (inv.command == "pretrain") return cmd_train(inv, TrainMode::kPretrain, out, err);
    if (inv.command == "finetune-encoder") return cmd_train(inv, TrainMode::kFinetuneEncoder, out, err);
    if (inv.command == "train") return cmd_train(inv, TrainMode::kStr, out, err);
    if (inv.command == "erase") return cmd_erase(inv, out);
    if (inv.command == "eval") return cmd_eval(inv, out);
    throw UsageError("unknown command '" + inv.command + "'");
  } catch (const UsageError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    const auto msg = one_line(e.what());
    err << "error: " << msg << '\n';
    mark_failed(inv, msg);
    return kRuntime;
  }
}

}  // namespace viteraser::cli
