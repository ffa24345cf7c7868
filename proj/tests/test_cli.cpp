#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cwcl/metrics_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
  int exit_code;
  std::string out;
};

CmdResult run_cli(const std::string& args) {
  const auto out_file = (fs::temp_directory_path() / "cwcl_cli_out.txt").string();
  const std::string cmd =
      std::string(CWCL_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out_file);
  std::stringstream buf;
  buf << in.rdbuf();
  return {WEXITSTATUS(status), buf.str()};
}

std::string write_config(const std::string& name, const std::string& extra) {
  const auto path = (fs::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << "dataset.kind = synthetic\n"
         "dataset.train_count = 64\n"
         "dataset.test_count = 32\n"
         "dataset.image_hw = 16\n"
         "dataset.classes = 4\n"
         "noise.kind = symmetric\n"
         "noise.rate = 0.4\n"
         "backbone.name = custom\n"
         "backbone.widths = 4,6\n"
         "backbone.blocks = 1,1\n"
         "train.batch_size = 32\n"
         "train.epochs_stage1 = 1\n"
         "train.epochs_stage2 = 1\n"
         "train.round_length = 1\n"
         "train.gamma = 0.05\n"
         "train.proj_hidden = 16\n"
         "train.proj_dim = 8\n"
         "run.seed = 5\n"
      << extra;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double parse_metric(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + "=");
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + key.size() + 1));
}

}  // namespace

TEST_CASE("inject is deterministic and reports the empirical rate") {
  const auto cfg = write_config("cwcl_cli_inject.cfg", "");
  const auto overlay_a = (fs::temp_directory_path() / "cwcl_cli_a.csv").string();
  const auto overlay_b = (fs::temp_directory_path() / "cwcl_cli_b.csv").string();

  auto r1 = run_cli("inject --config " + cfg + " --overlay-out " + overlay_a);
  CHECK(r1.exit_code == 0);
  const double rate = parse_metric(r1.out, "empirical_noise_rate");
  CHECK(rate > 0.2);
  CHECK(rate < 0.6);

  auto r2 = run_cli("inject --config " + cfg + " --overlay-out " + overlay_b);
  CHECK(r2.exit_code == 0);
  CHECK(slurp(overlay_a) == slurp(overlay_b));  // byte identical rerun

  SUBCASE("rate zero keeps labels clean") {
    auto r3 = run_cli("inject --config " + cfg + " --noise-rate 0 --overlay-out " +
                      overlay_b);
    CHECK(r3.exit_code == 0);
    CHECK(parse_metric(r3.out, "empirical_noise_rate") == doctest::Approx(0.0));
  }
}

TEST_CASE("config errors exit with code 2") {
  const auto bad = (fs::temp_directory_path() / "cwcl_cli_bad.cfg").string();
  std::ofstream(bad) << "train.lambda = 7\n";
  auto r = run_cli("train --config " + bad);
  CHECK(r.exit_code == 2);
  CHECK(r.out.find("config error") != std::string::npos);

  auto r2 = run_cli("train --config /does/not/exist.cfg");
  CHECK(r2.exit_code == 2);
}

TEST_CASE("unsupported device env is rejected") {
  const auto cfg = write_config("cwcl_cli_dev.cfg", "");
  const std::string out_file =
      (fs::temp_directory_path() / "cwcl_cli_out.txt").string();
  const std::string cmd = std::string("CWCL_DEVICE=cuda ") + CWCL_CLI_PATH +
                          " train --dry-run --config " + cfg + " > " + out_file +
                          " 2>&1";
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("dry run validates without creating a run directory") {
  const auto cfg = write_config("cwcl_cli_dry.cfg", "run.out = /tmp/cwcl_cli_never\n");
  fs::remove_all("/tmp/cwcl_cli_never");
  auto r = run_cli("train --dry-run --config " + cfg);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("config ok") != std::string::npos);
  CHECK_FALSE(fs::exists("/tmp/cwcl_cli_never"));
}

TEST_CASE("end-to-end micro run: train, eval, report") {
  const auto out1 = (fs::temp_directory_path() / "cwcl_cli_run1").string();
  const auto out2 = (fs::temp_directory_path() / "cwcl_cli_run2").string();
  fs::remove_all(out1);
  fs::remove_all(out2);
  const auto cfg = write_config("cwcl_cli_e2e.cfg", "");

  auto r1 = run_cli("train --config " + cfg + " --out " + out1);
  REQUIRE(r1.exit_code == 0);
  CHECK(fs::exists(out1 + "/metrics.csv"));
  CHECK(fs::exists(out1 + "/summary.json"));
  CHECK(fs::exists(out1 + "/noise.csv"));
  CHECK(fs::exists(out1 + "/config.txt"));
  CHECK(fs::exists(out1 + "/confident/round-0.csv"));
  CHECK(fs::exists(out1 + "/ckpt/1-1/manifest.json"));
  CHECK(fs::exists(out1 + "/ckpt/2-2/manifest.json"));

  auto r2 = run_cli("train --config " + cfg + " --out " + out2 + " --seed 6");
  REQUIRE(r2.exit_code == 0);

  SUBCASE("eval of the stage-1 checkpoint matches the logged epoch") {
    auto ev = run_cli("eval --config " + cfg + " --ckpt " + out1 + "/ckpt/1-1");
    REQUIRE(ev.exit_code == 0);
    const double live = parse_metric(ev.out, "live_accuracy");
    const double ema = parse_metric(ev.out, "ema_accuracy");
    auto metrics = cwcl::load_metrics_csv(out1 + "/metrics.csv");
    REQUIRE(metrics.records.size() == 2);
    CHECK(live == doctest::Approx(metrics.records[0].test_acc_live).epsilon(1e-9));
    CHECK(ema == doctest::Approx(metrics.records[0].test_acc_ema).epsilon(1e-9));
    CHECK(fs::exists(out1 + "/ckpt/1-1/eval.json"));
  }
  SUBCASE("corrupted checkpoint fails cleanly without partial records") {
    const auto broken = out1 + "/ckpt/broken";
    fs::create_directories(broken);
    fs::copy(out1 + "/ckpt/1-1/manifest.json", broken + "/manifest.json",
             fs::copy_options::overwrite_existing);
    std::ofstream(broken + "/weights.bin") << "garbage";
    auto ev = run_cli("eval --config " + cfg + " --ckpt " + broken);
    CHECK(ev.exit_code == 3);
    CHECK_FALSE(fs::exists(broken + "/eval.json"));
  }
  SUBCASE("report aggregates seeds and writes plots") {
    const auto plots = (fs::temp_directory_path() / "cwcl_cli_plots").string();
    fs::remove_all(plots);
    auto rep = run_cli("report " + out1 + " " + out2 + " --plot-dir " + plots);
    REQUIRE(rep.exit_code == 0);
    CHECK(rep.out.find("symmetric") != std::string::npos);
    CHECK(rep.out.find("runs") != std::string::npos);
    bool has_png = false;
    for (const auto& entry : fs::directory_iterator(plots))
      if (entry.path().extension() == ".png") has_png = true;
    CHECK(has_png);
    auto rep1 = run_cli("report " + out1);
    CHECK(rep1.exit_code == 0);
  }
  SUBCASE("summary records the arm and hashes") {
    std::ifstream in(out1 + "/summary.json");
    json j = json::parse(in);
    CHECK(j.at("arm").get<std::string>() == "stage1+2");
    CHECK(j.at("config_hash").get<std::string>().size() == 16);
    CHECK(j.at("final_test_acc_ema").get<double>() >= 0.0);
  }
}
