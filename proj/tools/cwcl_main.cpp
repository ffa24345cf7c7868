// cwcl: noisy-label training lab with channel-wise contrastive pretraining
// and progressive confident-sample finetuning.
//
// Subcommands: inject | train | eval | report. Exit codes: 0 success,
// 2 configuration error, 3 runtime abort.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "cwcl/config.hpp"
#include "cwcl/errors.hpp"
#include "cwcl/metrics_io.hpp"
#include "cwcl/nn/checkpoint.hpp"
#include "cwcl/report.hpp"
#include "cwcl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cwcl;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<double> lambda;
  std::optional<std::string> noise_kind;
  std::optional<double> noise_rate;
  std::optional<double> gamma;
  std::optional<std::string> stage;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path, "experiment config file");
  cmd->add_option("--lambda", ov.lambda, "override train.lambda");
  cmd->add_option("--noise-kind", ov.noise_kind, "override noise.kind");
  cmd->add_option("--noise-rate", ov.noise_rate, "override noise.rate");
  cmd->add_option("--gamma", ov.gamma, "override train.gamma");
  cmd->add_option("--stage", ov.stage, "override run.stage (both|1-only|2-only)");
  cmd->add_option("--seed", ov.seed, "override run.seed");
  cmd->add_option("--out", ov.out, "override run.out");
}

ExperimentConfig resolve_config(const Overrides& ov) {
  ExperimentConfig cfg;
  if (!ov.config_path.empty()) cfg = ExperimentConfig::parse_file(ov.config_path);
  if (ov.lambda) cfg.plan.lambda = *ov.lambda;
  if (ov.noise_kind) cfg.noise.kind = NoiseSpec::kind_from_str(*ov.noise_kind);
  if (ov.noise_rate) cfg.noise.rate = *ov.noise_rate;
  if (ov.gamma) cfg.plan.gamma = *ov.gamma;
  if (ov.stage) cfg.stage = *ov.stage;
  if (ov.seed) cfg.plan.seed = *ov.seed;
  if (ov.out) cfg.out_dir = *ov.out;
  cfg.validate();
  return cfg;
}

void check_device_env() {
  const char* device = std::getenv("CWCL_DEVICE");
  if (device && std::string(device) != "cpu" && std::string(device) != "")
    throw ConfigError("CWCL_DEVICE='" + std::string(device) +
                      "' is not available in this build; only 'cpu' is supported");
}

std::string git_describe() {
  FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128] = {0};
  std::string out;
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

NoisyCorpus prepare_corpus(const ExperimentConfig& cfg, LabeledImageSet train,
                           const std::string& overlay_out) {
  if (!cfg.noise_file.empty()) {
    auto overlay = load_noise_file(cfg.noise_file, train.num_classes);
    return apply_overlay(std::move(train), overlay, cfg.noise, cfg.plan.seed);
  }
  auto corpus = make_noisy_corpus(std::move(train), cfg.noise, cfg.plan.seed);
  if (!overlay_out.empty()) save_noise_file(corpus, overlay_out);
  return corpus;
}

int find_best_epoch(const RunMetrics& metrics) {
  int best = 0;
  double best_acc = -1.0;
  for (const auto& rec : metrics.records) {
    if (rec.test_acc_ema > best_acc) {
      best_acc = rec.test_acc_ema;
      best = rec.epoch;
    }
  }
  return best;
}

void write_summary(const ExperimentConfig& cfg, const Trainer& trainer,
                   double final_live, double final_ema) {
  json j;
  j["arm"] = cfg.arm();
  j["noise_kind"] = cfg.noise.kind_str();
  j["noise_rate"] = cfg.noise.rate;
  j["dataset"] = cfg.dataset_kind;
  j["config_hash"] = cfg.hash();
  j["group_hash"] = cfg.group_hash();
  j["seed"] = cfg.plan.seed;
  j["epochs_stage1"] = cfg.plan.epochs_stage1;
  j["epochs_stage2"] = cfg.plan.epochs_stage2;
  j["final_test_acc_live"] = final_live;
  j["final_test_acc_ema"] = final_ema;
  double best = -1.0;
  for (const auto& rec : trainer.metrics().records)
    best = std::max(best, rec.test_acc_ema);
  j["best_test_acc_ema"] = best;
  j["best_epoch"] = find_best_epoch(trainer.metrics());
  j["git_describe"] = git_describe();
  j["config"] = cfg.serialize();
  std::ofstream out(cfg.out_dir + "/summary.json");
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write summary.json");
}

int cmd_inject(const Overrides& ov, const std::string& out_file) {
  auto cfg = resolve_config(ov);
  auto train = cfg.load_train();
  if (cfg.dataset_kind == "folder") cfg.classes = train.num_classes;

  std::string path = out_file;
  if (path.empty()) {
    fs::create_directories(cfg.out_dir);
    path = cfg.out_dir + "/noise.csv";
  }
  auto corpus = make_noisy_corpus(std::move(train), cfg.noise, cfg.plan.seed);
  save_noise_file(corpus, path);
  std::printf("wrote %s (%lld labels)\n", path.c_str(),
              static_cast<long long>(corpus.size()));
  std::printf("empirical_noise_rate=%.6f\n", empirical_noise_rate(corpus));
  return 0;
}

int cmd_train(const Overrides& ov, bool dry_run, const std::string& resume) {
  auto cfg = resolve_config(ov);
  auto train = cfg.load_train();
  if (cfg.dataset_kind == "folder") cfg.classes = train.num_classes;
  auto test = cfg.load_test();
  auto spec = cfg.backbone_spec();

  if (dry_run) {
    spec.validate();
    nn::TappedBackbone net(spec, cfg.plan.seed);
    Tensor probe({2, spec.in_channels, spec.in_hw, spec.in_hw});
    Tensor logits;
    std::vector<Tensor> taps;
    net.forward_with_taps(probe, false, logits, &taps);
    std::printf("config ok: hash=%s\n", cfg.hash().c_str());
    std::printf("train=%lld test=%lld classes=%d input=%dx%d\n",
                static_cast<long long>(train.size()),
                static_cast<long long>(test.size()), spec.num_classes, spec.in_hw,
                spec.in_hw);
    std::printf("backbone params=%lld taps=%zu\n",
                static_cast<long long>(net.param_count()), taps.size());
    return 0;
  }

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream echo(cfg.out_dir + "/config.txt");
    echo << "# config_hash=" << cfg.hash() << "\n" << cfg.serialize();
  }
  auto corpus = prepare_corpus(cfg, std::move(train), cfg.out_dir + "/noise.csv");
  std::printf("corpus: %lld samples, empirical noise rate %.4f\n",
              static_cast<long long>(corpus.size()), empirical_noise_rate(corpus));

  Trainer trainer(cfg.plan, std::move(corpus), std::move(test), spec, cfg.out_dir,
                  cfg.hash());
  if (!resume.empty()) {
    trainer.load_checkpoint(resume);
    std::printf("resumed from %s at epoch %d (stage %d)\n", resume.c_str(),
                trainer.epoch(), trainer.stage());
  }

  if (cfg.stage == "2-only") {
    if (resume.empty()) {
      const std::string auto_ckpt = cfg.out_dir + "/ckpt/1-" +
                                    std::to_string(cfg.plan.epochs_stage1);
      if (!fs::exists(auto_ckpt + "/manifest.json"))
        throw ConfigError("run.stage=2-only needs --resume or an existing " +
                          auto_ckpt);
      trainer.load_checkpoint(auto_ckpt);
    }
    trainer.train_stage2();
  } else {
    if (trainer.epoch() < cfg.plan.epochs_stage1) trainer.train_stage1();
    if (cfg.stage == "both" && cfg.plan.epochs_stage2 > 0) trainer.train_stage2();
  }

  const double live = trainer.evaluate_live();
  const double ema = trainer.evaluate_ema();
  write_summary(cfg, trainer, live, ema);
  std::printf("done: test_acc_live=%.4f test_acc_ema=%.4f (run dir %s)\n", live,
              ema, cfg.out_dir.c_str());
  return 0;
}

int cmd_eval(const Overrides& ov, const std::string& ckpt_dir) {
  auto cfg = resolve_config(ov);
  std::ifstream mf(ckpt_dir + "/manifest.json");
  if (!mf) throw std::runtime_error("cannot read manifest under '" + ckpt_dir + "'");
  json manifest = json::parse(mf);
  const auto arch = manifest.at("arch");

  auto test = cfg.load_test();
  nn::BackboneSpec spec;
  spec.widths = arch.at("widths").get<std::vector<int>>();
  spec.blocks = arch.at("blocks").get<std::vector<int>>();
  spec.in_hw = arch.at("in_hw").get<int>();
  spec.in_channels = arch.at("in_channels").get<int>();
  spec.num_classes = arch.at("num_classes").get<int>();
  if (spec.in_hw != test.height() || spec.num_classes != test.num_classes)
    throw std::runtime_error(
        "architecture mismatch: checkpoint expects " + std::to_string(spec.in_hw) +
        "px/" + std::to_string(spec.num_classes) + " classes, test set has " +
        std::to_string(test.height()) + "px/" + std::to_string(test.num_classes));

  nn::TappedBackbone net(spec, cfg.plan.seed);
  auto weights = nn::read_f32_arrays(ckpt_dir + "/weights.bin");
  auto load_into = [&](const std::string& name, float* dst, std::int64_t size) {
    auto it = weights.find(name);
    if (it == weights.end())
      throw std::runtime_error("checkpoint missing array '" + name + "'");
    if (static_cast<std::int64_t>(it->second.size()) != size)
      throw std::runtime_error("checkpoint array '" + name + "' size mismatch");
    std::copy(it->second.begin(), it->second.end(), dst);
  };
  for (auto& p : net.params()) load_into(p.name, p.data, p.size);
  for (auto& b : net.buffers()) load_into(b.name, b.data, b.size);
  const double live = evaluate(net, test);

  nn::EmaState ema(net.params(), net.buffers(), 0.0);
  auto shadow = nn::read_f64_array(ckpt_dir + "/ema.bin");
  if (shadow.size() != ema.shadow().size())
    throw std::runtime_error("checkpoint EMA shadow size mismatch");
  ema.shadow() = std::move(shadow);
  ema.apply_to(net.params(), net.buffers());
  const double ema_acc = evaluate(net, test);

  std::printf("live_accuracy=%.6f\n", live);
  std::printf("ema_accuracy=%.6f\n", ema_acc);

  // Atomic eval record: never leave a partial file behind.
  json record;
  record["checkpoint"] = ckpt_dir;
  record["config_hash"] = manifest.at("config_hash").get<std::string>();
  record["epoch"] = manifest.at("epoch").get<int>();
  record["stage"] = manifest.at("stage").get<int>();
  record["live_accuracy"] = live;
  record["ema_accuracy"] = ema_acc;
  const std::string tmp = ckpt_dir + "/eval.json.tmp";
  {
    std::ofstream out(tmp);
    out << record.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write eval record");
  }
  fs::rename(tmp, ckpt_dir + "/eval.json");
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs,
               const std::string& plot_dir) {
  std::vector<RunSummary> summaries;
  for (const auto& dir : run_dirs) summaries.push_back(read_run_summary(dir));
  std::vector<std::string> warnings;
  const auto groups = aggregate_runs(summaries, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << format_report_table(groups);

  fs::create_directories(plot_dir);
  // One curve sheet per (noise kind, rate, arm) group, tagged by group hash.
  std::map<std::string, std::vector<std::string>> by_group;
  for (const auto& s : summaries) {
    std::ostringstream key;
    key << s.noise_kind << "|" << s.noise_rate << "|" << s.arm << "|"
        << s.group_hash.substr(0, 8);
    by_group[key.str()].push_back(s.dir);
  }
  for (const auto& [key, dirs] : by_group) {
    std::string tag = key;
    for (auto& c : tag)
      if (c == '|' || c == '.') c = '-';
    const std::string png = plot_dir + "/curves-" + tag + ".png";
    write_learning_curves(dirs, png);
    std::cout << "wrote " << png << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cwcl: channel-wise contrastive learning under label noise"};
  app.require_subcommand(1);

  Overrides ov;
  std::string inject_out, resume, ckpt_dir, plot_dir = ".";
  bool dry_run = false;
  std::vector<std::string> run_dirs;

  auto* inject = app.add_subcommand("inject", "corrupt labels and write the overlay");
  add_common_flags(inject, ov);
  inject->add_option("--overlay-out", inject_out,
                     "overlay file path (default {out}/noise.csv)");

  auto* train = app.add_subcommand("train", "run the two-stage training procedure");
  add_common_flags(train, ov);
  train->add_flag("--dry-run", dry_run, "validate config and shapes, then exit");
  train->add_option("--resume", resume, "checkpoint directory to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test set");
  add_common_flags(eval, ov);
  eval->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();

  auto* report = app.add_subcommand("report", "aggregate run summaries");
  report->add_option("runs", run_dirs, "run directories")->required();
  report->add_option("--plot-dir", plot_dir, "where to write curve images");

  CLI11_PARSE(app, argc, argv);

  try {
    check_device_env();
    if (inject->parsed()) return cmd_inject(ov, inject_out);
    if (train->parsed()) return cmd_train(ov, dry_run, resume);
    if (eval->parsed()) return cmd_eval(ov, ckpt_dir);
    if (report->parsed()) return cmd_report(run_dirs, plot_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const TrainAbort& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
