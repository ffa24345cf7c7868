#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cwcl::nn {

/// Flat named-array container IO (little-endian, f32). Used for live
/// weights and optimizer state; the EMA shadow is stored as f64.
struct NamedArray {
  std::string name;
  std::vector<float> values;
};

void write_f32_arrays(const std::string& path,
                      const std::vector<NamedArray>& arrays);
std::map<std::string, std::vector<float>> read_f32_arrays(const std::string& path);

void write_f64_array(const std::string& path, const std::vector<double>& values);
std::vector<double> read_f64_array(const std::string& path);

}  // namespace cwcl::nn
