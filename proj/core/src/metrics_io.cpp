#include "cwcl/metrics_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cwcl {

std::string metrics_csv_header() {
  return "epoch,stage,lr,ce,contrastive_mean,total,train_acc_noisy,"
         "test_acc_live,test_acc_ema,selection_size,selection_noise_rate";
}

std::string metrics_csv_row(const EpochRecord& rec) {
  std::ostringstream os;
  os.precision(10);
  os << rec.epoch << "," << rec.stage << "," << rec.lr << "," << rec.ce << ","
     << rec.contrastive_mean << "," << rec.total << "," << rec.train_acc_noisy
     << "," << rec.test_acc_live << "," << rec.test_acc_ema << ","
     << rec.selection_size << ",";
  if (std::isnan(rec.selection_noise_rate))
    os << "nan";
  else
    os << rec.selection_noise_rate;
  return os.str();
}

void append_metrics_csv(const std::string& path, const std::string& config_hash,
                        const EpochRecord& rec) {
  const bool fresh =
      !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to '" + path + "'");
  if (fresh)
    out << "# config_hash=" << config_hash << "\n" << metrics_csv_header() << "\n";
  out << metrics_csv_row(rec) << "\n";
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

RunMetrics load_metrics_csv(const std::string& path, std::string* config_hash) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read metrics '" + path + "'");
  RunMetrics metrics;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    if (line.rfind("# config_hash=", 0) == 0) {
      if (config_hash) *config_hash = line.substr(14);
      continue;
    }
    if (line.rfind("epoch,", 0) == 0) continue;
    std::istringstream ss(line);
    EpochRecord rec;
    char c;
    std::string tail;
    if (!(ss >> rec.epoch >> c >> rec.stage >> c >> rec.lr >> c >> rec.ce >> c >>
          rec.contrastive_mean >> c >> rec.total >> c >> rec.train_acc_noisy >>
          c >> rec.test_acc_live >> c >> rec.test_acc_ema >> c >>
          rec.selection_size >> c))
      throw std::runtime_error("metrics '" + path + "' row " + std::to_string(row) +
                               ": unparseable '" + line + "'");
    ss >> tail;
    rec.selection_noise_rate =
        (tail == "nan" || tail.empty())
            ? std::numeric_limits<double>::quiet_NaN()
            : std::stod(tail);
    metrics.records.push_back(rec);
  }
  return metrics;
}

}  // namespace cwcl
