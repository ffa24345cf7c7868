#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cwcl/nn/layers.hpp"
#include "cwcl/tensor.hpp"

namespace cwcl::nn {

/// Residual backbone geometry. One tap per stage, so L = widths.size().
struct BackboneSpec {
  int in_channels = 3;
  int in_hw = 32;
  int num_classes = 10;
  std::vector<int> widths = {64, 128, 256, 512};
  std::vector<int> blocks = {2, 2, 2, 2};

  /// 18-layer configuration ("layer1..4" taps).
  static BackboneSpec resnet18(int num_classes, int in_hw = 32);
  /// Reduced backbone for desk-scale runs and tests.
  static BackboneSpec tiny(int num_classes, int in_hw = 32);

  int num_stages() const { return static_cast<int>(widths.size()); }
  /// Spatial side of the tap at stage l (stride 2 from stage 2 on).
  int tap_hw(int stage) const;
  void validate() const;
};

/// conv-bn-relu-conv-bn plus identity (or 1x1 projection) skip, final relu.
class BasicBlock {
 public:
  BasicBlock(int in_ch, int out_ch, int stride, const std::string& name, Rng& rng);

  void forward(const Tensor& x, bool train, Tensor& y);
  void backward(const Tensor& dy, Tensor& dx);
  void collect(std::vector<ParamView>& params);
  void collect_buffers(std::vector<BufferView>& buffers);

 private:
  bool has_projection_;
  Conv2d conv1_, conv2_, down_conv_;
  BatchNorm2d bn1_, bn2_, down_bn_;
  ReLU relu1_, relu2_;
};

/// Backbone exposing the output of every stage ("tap") plus classifier
/// logits. A forward pass yields exactly L tapped maps and one logit row
/// per sample; evaluation mode is deterministic for fixed weights.
class TappedBackbone {
 public:
  TappedBackbone(const BackboneSpec& spec, std::uint64_t seed);

  /// x: (B, C, H, W). Fills logits (B, K); when taps != nullptr also fills
  /// L tapped maps (B, M_l, H_l, W_l).
  void forward_with_taps(const Tensor& x, bool train, Tensor& logits,
                         std::vector<Tensor>* taps);

  /// dlogits (B, K) and optionally per-stage tap gradients (empty tensors
  /// are treated as zero). Accumulates parameter gradients.
  void backward(const Tensor& dlogits, const std::vector<Tensor>* dtaps);

  std::vector<ParamView> params();
  std::vector<BufferView> buffers();
  void zero_grad();

  /// Copies weights and buffers from another instance of the same spec.
  void copy_weights_from(TappedBackbone& other);

  const BackboneSpec& spec() const { return spec_; }
  Linear& classifier() { return classifier_; }
  std::int64_t param_count();

 private:
  BackboneSpec spec_;
  Conv2d stem_conv_;
  BatchNorm2d stem_bn_;
  ReLU stem_relu_;
  std::vector<std::vector<BasicBlock>> stages_;
  GlobalAvgPool gap_;
  Linear classifier_;
  std::vector<Tensor> stage_out_;  // cached for the backward pass
  bool taps_requested_ = false;
};

}  // namespace cwcl::nn
