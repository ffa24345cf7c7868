#include "cwcl/nn/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace cwcl::nn {

namespace {
constexpr char kMagicF32[8] = {'C', 'W', 'C', 'L', 'A', 'R', '3', '2'};
constexpr char kMagicF64[8] = {'C', 'W', 'C', 'L', 'A', 'R', '6', '4'};

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
}  // namespace

void write_f32_arrays(const std::string& path,
                      const std::vector<NamedArray>& arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(kMagicF32, sizeof(kMagicF32));
  write_u64(out, arrays.size());
  for (const auto& a : arrays) {
    write_u64(out, a.name.size());
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    write_u64(out, a.values.size());
    out.write(reinterpret_cast<const char*>(a.values.data()),
              static_cast<std::streamsize>(a.values.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

std::map<std::string, std::vector<float>> read_f32_arrays(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kMagicF32, 8))
    throw std::runtime_error("'" + path + "' is not a weight archive");
  const auto count = read_u64(in);
  std::map<std::string, std::vector<float>> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto size = read_u64(in);
    std::vector<float> values(size);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(size * sizeof(float)));
    if (!in) throw std::runtime_error("truncated archive '" + path + "'");
    out.emplace(std::move(name), std::move(values));
  }
  return out;
}

void write_f64_array(const std::string& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(kMagicF64, sizeof(kMagicF64));
  write_u64(out, values.size());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

std::vector<double> read_f64_array(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kMagicF64, 8))
    throw std::runtime_error("'" + path + "' is not an f64 archive");
  const auto size = read_u64(in);
  std::vector<double> values(size);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(size * sizeof(double)));
  if (!in) throw std::runtime_error("truncated archive '" + path + "'");
  return values;
}

}  // namespace cwcl::nn
