#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cwcl/nn/layers.hpp"
#include "cwcl/tensor.hpp"

namespace cwcl::nn {

/// Per-sample result of projecting one tapped feature map: M unit-norm
/// channel vectors for one layer.
struct ChannelBank {
  int layer_index = 0;
  Tensor channels;  // (M, dim), rows unit-normalized
};

/// Shared-across-channels projection for one tap: each channel's H*W values
/// are flattened, passed through Linear-ReLU-Linear, then unit-normalized.
/// Channel identity is positional, so index i of a view pairs with index i
/// of the other view.
class ChannelProjectionHead {
 public:
  ChannelProjectionHead() = default;
  ChannelProjectionHead(int layer_index, int spatial, int hidden, int dim,
                        bool bias, std::uint64_t seed);

  /// tap: (B, M, H, W) with H*W == spatial. Returns (B*M, dim), rows grouped
  /// by sample then channel.
  Tensor forward(const Tensor& tap);
  /// dbank: (B*M, dim) -> gradient w.r.t. the tap, same shape as input.
  Tensor backward(const Tensor& dbank);

  /// Spec-facing convenience for a single sample's tap (M, H, W).
  ChannelBank project_channels(const Tensor& tap);

  std::vector<ParamView> params();
  int layer_index() const { return layer_index_; }
  int dim() const { return lin2_.out_dim(); }

 private:
  int layer_index_ = 0;
  int spatial_ = 0;
  std::vector<std::int64_t> tap_shape_;
  Linear lin1_, lin2_;
  ReLU relu_;
  RowNormalize norm_;
};

/// Instance-level embedding for one tap: spatial average over each channel
/// gives an M-vector per sample, then Linear-ReLU-Linear and normalization.
/// Carries the per-layer features for supervised contrast in stage 2.
class InstanceProjectionHead {
 public:
  InstanceProjectionHead() = default;
  InstanceProjectionHead(int layer_index, int channels, int hidden, int dim,
                         bool bias, std::uint64_t seed);

  /// tap: (B, M, H, W) with M == channels. Returns (B, dim) unit rows.
  Tensor forward(const Tensor& tap);
  Tensor backward(const Tensor& dfeat);

  std::vector<ParamView> params();
  int layer_index() const { return layer_index_; }

 private:
  int layer_index_ = 0;
  int channels_ = 0;
  GlobalAvgPool gap_;
  Linear lin1_, lin2_;
  ReLU relu_;
  RowNormalize norm_;
};

}  // namespace cwcl::nn
