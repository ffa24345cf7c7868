#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cwcl/rng.hpp"
#include "cwcl/tensor.hpp"

namespace cwcl::nn {

/// Named view over a trainable array and its gradient.
struct ParamView {
  std::string name;
  float* data = nullptr;
  float* grad = nullptr;
  std::int64_t size = 0;
};

/// Named view over a non-trained state array (BN running stats).
struct BufferView {
  std::string name;
  float* data = nullptr;
  std::int64_t size = 0;
};

/// 3x3 (or 1x1) convolution, stride 1 or 2, zero padding, no bias.
/// im2col + GEMM; the column buffer is rebuilt in backward to keep
/// activation memory at one input per layer.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad,
         const std::string& name, Rng& rng);

  void forward(const Tensor& x, Tensor& y);
  /// dy -> dx; accumulates weight gradients.
  void backward(const Tensor& dy, Tensor& dx);

  void collect(std::vector<ParamView>& params);
  int out_hw(int in_hw) const { return (in_hw + 2 * pad_ - ksize_) / stride_ + 1; }
  int out_channels() const { return out_ch_; }

 private:
  void im2col(const Tensor& x, Tensor& cols) const;
  void col2im(const Tensor& cols, Tensor& dx) const;

  int in_ch_ = 0, out_ch_ = 0, ksize_ = 3, stride_ = 1, pad_ = 1;
  std::string name_;
  Tensor weight_;  // (out_ch, in_ch*k*k)
  Tensor wgrad_;
  Tensor x_cache_;
};

/// Per-channel batch normalization over (N,H,W).
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(int channels, const std::string& name);

  void forward(const Tensor& x, bool train, Tensor& y);
  void backward(const Tensor& dy, Tensor& dx);

  void collect(std::vector<ParamView>& params);
  void collect_buffers(std::vector<BufferView>& buffers);

  double momentum = 0.1;
  double eps = 1e-5;

 private:
  int channels_ = 0;
  std::string name_;
  Tensor gamma_, beta_, gamma_grad_, beta_grad_;
  Tensor running_mean_, running_var_;
  Tensor xhat_cache_;            // normalized input, train mode
  std::vector<float> inv_std_;   // per channel
};

/// ReLU keyed off the cached output (y > 0 gates the gradient).
class ReLU {
 public:
  void forward(const Tensor& x, Tensor& y);
  void backward(const Tensor& dy, Tensor& dx);

 private:
  Tensor y_cache_;
};

/// Fully connected y = x W^T + b over (B, in) rows.
class Linear {
 public:
  Linear() = default;
  Linear(int in_dim, int out_dim, bool bias, const std::string& name, Rng& rng);

  void forward(const Tensor& x, Tensor& y);
  void backward(const Tensor& dy, Tensor& dx);

  void collect(std::vector<ParamView>& params);
  int out_dim() const { return out_dim_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  bool has_bias() const { return has_bias_; }

 private:
  int in_dim_ = 0, out_dim_ = 0;
  bool has_bias_ = true;
  std::string name_;
  Tensor weight_, bias_, wgrad_, bgrad_;
  Tensor x_cache_;
};

/// Global average pooling (B,C,H,W) -> (B,C).
class GlobalAvgPool {
 public:
  void forward(const Tensor& x, Tensor& y);
  void backward(const Tensor& dy, Tensor& dx);

 private:
  std::vector<std::int64_t> x_shape_;
};

/// L2 row normalization with cached pre-normalization rows.
class RowNormalize {
 public:
  void forward(const Tensor& x, Tensor& y);
  void backward(const Tensor& dy, Tensor& dx);

 private:
  Tensor y_cache_;
  std::vector<float> norms_;
};

}  // namespace cwcl::nn
