#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace cwcl {

using MatrixRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

/// Dense float tensor, row-major, up to 4 dims (NCHW for image batches).
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::initializer_list<std::int64_t> s) { resize(s); }
  explicit Tensor(const std::vector<std::int64_t>& s) { resize(s); }

  void resize(const std::vector<std::int64_t>& s) {
    shape.assign(s.begin(), s.end());
    data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0f);
  }
  void resize(std::initializer_list<std::int64_t> s) {
    resize(std::vector<std::int64_t>(s));
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(shape.size()); }

  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }

  void zero() { std::fill(data.begin(), data.end(), 0.0f); }

  /// View as a (rows x cols) row-major matrix; product must equal numel().
  MapRM mat(std::int64_t rows, std::int64_t cols) {
    check_view(rows, cols);
    return MapRM(data.data(), rows, cols);
  }
  ConstMapRM mat(std::int64_t rows, std::int64_t cols) const {
    check_view(rows, cols);
    return ConstMapRM(data.data(), rows, cols);
  }

  std::string shape_str() const;

 private:
  void check_view(std::int64_t rows, std::int64_t cols) const {
    if (rows * cols != numel())
      throw std::logic_error("tensor view " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " incompatible with " +
                             shape_str());
  }
};

/// Shape-contract failure with expected-vs-got in the message.
void require_shape(const Tensor& t, const std::vector<std::int64_t>& expect,
                   const std::string& what);

}  // namespace cwcl
