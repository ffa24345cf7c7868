#pragma once

#include <string>

#include "cwcl/trainer.hpp"

namespace cwcl {

/// Fixed RunMetrics CSV header.
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRecord& rec);

/// Appends one row; creates the file with a `# config_hash=` comment line
/// plus the header when absent.
void append_metrics_csv(const std::string& path, const std::string& config_hash,
                        const EpochRecord& rec);

/// Reads a metrics file back (comment line tolerated). Returns the stored
/// config hash through `config_hash` when non-null.
RunMetrics load_metrics_csv(const std::string& path,
                            std::string* config_hash = nullptr);

}  // namespace cwcl
