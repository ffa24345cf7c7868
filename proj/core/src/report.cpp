#include "cwcl/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cwcl/metrics_io.hpp"

using nlohmann::json;

namespace cwcl {

RunSummary read_run_summary(const std::string& run_dir) {
  const std::string path = run_dir + "/summary.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  json j = json::parse(in);
  RunSummary s;
  s.dir = run_dir;
  s.arm = j.at("arm").get<std::string>();
  s.noise_kind = j.at("noise_kind").get<std::string>();
  s.noise_rate = j.at("noise_rate").get<double>();
  s.config_hash = j.at("config_hash").get<std::string>();
  s.group_hash = j.at("group_hash").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.final_test_acc_live = j.at("final_test_acc_live").get<double>();
  s.final_test_acc_ema = j.at("final_test_acc_ema").get<double>();
  s.best_test_acc_ema = j.at("best_test_acc_ema").get<double>();
  s.best_epoch = j.at("best_epoch").get<int>();
  return s;
}

std::vector<ReportGroup> aggregate_runs(const std::vector<RunSummary>& summaries,
                                        std::vector<std::string>* warnings) {
  if (summaries.empty())
    throw std::runtime_error("report needs at least one run directory");

  std::map<std::string, std::vector<const RunSummary*>> groups;
  for (const auto& s : summaries) {
    std::ostringstream key;
    key << s.noise_kind << "|" << s.noise_rate << "|" << s.arm;
    groups[key.str()].push_back(&s);
  }

  std::vector<ReportGroup> out;
  for (const auto& [key, members] : groups) {
    for (const auto* m : members) {
      if (m->group_hash != members.front()->group_hash && warnings) {
        warnings->push_back("group '" + key + "' mixes config hashes (" +
                            members.front()->group_hash + " vs " + m->group_hash +
                            " from " + m->dir + "); results are not comparable");
        break;
      }
    }
    ReportGroup g;
    g.noise_kind = members.front()->noise_kind;
    g.noise_rate = members.front()->noise_rate;
    g.arm = members.front()->arm;
    g.runs = static_cast<int>(members.size());
    double sum_e = 0, sum_l = 0;
    for (const auto* m : members) {
      sum_e += m->final_test_acc_ema;
      sum_l += m->final_test_acc_live;
    }
    g.mean_ema = sum_e / g.runs;
    g.mean_live = sum_l / g.runs;
    double var_e = 0, var_l = 0;
    for (const auto* m : members) {
      var_e += (m->final_test_acc_ema - g.mean_ema) * (m->final_test_acc_ema - g.mean_ema);
      var_l += (m->final_test_acc_live - g.mean_live) * (m->final_test_acc_live - g.mean_live);
    }
    g.std_ema = g.runs > 1 ? std::sqrt(var_e / (g.runs - 1)) : 0.0;
    g.std_live = g.runs > 1 ? std::sqrt(var_l / (g.runs - 1)) : 0.0;
    out.push_back(g);
  }
  std::sort(out.begin(), out.end(), [](const ReportGroup& a, const ReportGroup& b) {
    return std::tie(a.noise_kind, a.noise_rate, a.arm) <
           std::tie(b.noise_kind, b.noise_rate, b.arm);
  });
  return out;
}

std::string format_report_table(const std::vector<ReportGroup>& groups) {
  std::ostringstream os;
  os << "noise            rate   arm        runs  test_acc_ema        test_acc_live\n";
  os << "---------------------------------------------------------------------------\n";
  char buf[160];
  for (const auto& g : groups) {
    std::snprintf(buf, sizeof(buf),
                  "%-16s %5.2f  %-9s %5d  %6.2f%% +/- %5.2f  %6.2f%% +/- %5.2f\n",
                  g.noise_kind.c_str(), g.noise_rate, g.arm.c_str(), g.runs,
                  100.0 * g.mean_ema, 100.0 * g.std_ema, 100.0 * g.mean_live,
                  100.0 * g.std_live);
    os << buf;
  }
  return os.str();
}

void write_learning_curves(const std::vector<std::string>& run_dirs,
                           const std::string& out_png) {
  const int width = 960, height = 600, margin = 60;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

  int max_epoch = 1;
  std::vector<RunMetrics> all;
  for (const auto& dir : run_dirs) {
    all.push_back(load_metrics_csv(dir + "/metrics.csv"));
    if (!all.back().records.empty())
      max_epoch = std::max(max_epoch, all.back().records.back().epoch + 1);
  }

  cv::rectangle(canvas, cv::Point(margin, margin),
                cv::Point(width - margin, height - margin), cv::Scalar(0, 0, 0));
  for (int tick = 0; tick <= 10; ++tick) {
    const int y = height - margin - tick * (height - 2 * margin) / 10;
    cv::putText(canvas, std::to_string(tick * 10) + "%",
                cv::Point(8, y + 4), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                cv::Scalar(60, 60, 60));
    cv::line(canvas, cv::Point(margin - 4, y), cv::Point(margin, y),
             cv::Scalar(0, 0, 0));
  }
  cv::putText(canvas, "epoch", cv::Point(width / 2 - 20, height - 16),
              cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(60, 60, 60));
  cv::putText(canvas, "test accuracy (EMA)", cv::Point(margin, margin - 16),
              cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(60, 60, 60));

  const cv::Scalar palette[] = {
      {180, 60, 30},  {30, 120, 180}, {40, 160, 40},  {160, 30, 160},
      {20, 160, 200}, {120, 120, 20}, {90, 90, 90},   {0, 60, 200},
  };
  for (std::size_t r = 0; r < all.size(); ++r) {
    const auto& recs = all[r].records;
    cv::Point prev;
    bool has_prev = false;
    for (const auto& rec : recs) {
      const int x = margin + static_cast<int>(
                                 static_cast<double>(rec.epoch) /
                                 std::max(1, max_epoch - 1) * (width - 2 * margin));
      const int y = height - margin -
                    static_cast<int>(rec.test_acc_ema * (height - 2 * margin));
      const cv::Point p(x, y);
      if (has_prev)
        cv::line(canvas, prev, p, palette[r % 8], 1, cv::LINE_AA);
      prev = p;
      has_prev = true;
    }
    cv::putText(canvas, run_dirs[r],
                cv::Point(margin + 8, margin + 16 + 14 * static_cast<int>(r)),
                cv::FONT_HERSHEY_SIMPLEX, 0.35, palette[r % 8]);
  }
  if (!cv::imwrite(out_png, canvas))
    throw std::runtime_error("cannot write plot '" + out_png + "'");
}

}  // namespace cwcl
