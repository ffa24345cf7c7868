#pragma once

#include <string>
#include <vector>

namespace cwcl {

/// One run's summary.json, as read back for aggregation.
struct RunSummary {
  std::string dir;
  std::string arm;
  std::string noise_kind;
  double noise_rate = 0.0;
  std::string config_hash;
  std::string group_hash;
  std::uint64_t seed = 0;
  double final_test_acc_live = 0.0;
  double final_test_acc_ema = 0.0;
  double best_test_acc_ema = 0.0;
  int best_epoch = 0;
};

RunSummary read_run_summary(const std::string& run_dir);

struct ReportGroup {
  std::string noise_kind;
  double noise_rate = 0.0;
  std::string arm;
  int runs = 0;
  double mean_ema = 0.0;
  double std_ema = 0.0;
  double mean_live = 0.0;
  double std_live = 0.0;
};

/// Groups summaries by (noise kind, rate, arm); mean and std over runs.
/// Mixed group hashes within one group append a warning instead of
/// aggregating silently across configurations.
std::vector<ReportGroup> aggregate_runs(const std::vector<RunSummary>& summaries,
                                        std::vector<std::string>* warnings);

std::string format_report_table(const std::vector<ReportGroup>& groups);

/// Renders test_acc_ema learning curves of all runs into one PNG.
void write_learning_curves(const std::vector<std::string>& run_dirs,
                           const std::string& out_png);

}  // namespace cwcl
