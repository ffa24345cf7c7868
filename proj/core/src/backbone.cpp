#include "cwcl/nn/backbone.hpp"

#include <stdexcept>

namespace cwcl::nn {

namespace {
void add_inplace(Tensor& dst, const Tensor& src) {
  const auto n = dst.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    dst.data[static_cast<std::size_t>(i)] += src.data[static_cast<std::size_t>(i)];
}
}  // namespace

BackboneSpec BackboneSpec::resnet18(int num_classes, int in_hw) {
  BackboneSpec s;
  s.num_classes = num_classes;
  s.in_hw = in_hw;
  s.widths = {64, 128, 256, 512};
  s.blocks = {2, 2, 2, 2};
  return s;
}

BackboneSpec BackboneSpec::tiny(int num_classes, int in_hw) {
  BackboneSpec s;
  s.num_classes = num_classes;
  s.in_hw = in_hw;
  s.widths = {8, 16, 32, 32};
  s.blocks = {1, 1, 1, 1};
  return s;
}

int BackboneSpec::tap_hw(int stage) const {
  int hw = in_hw;
  for (int i = 1; i <= stage; ++i) hw = (hw + 1) / 2;
  return hw;
}

void BackboneSpec::validate() const {
  if (widths.empty() || widths.size() != blocks.size())
    throw std::invalid_argument("backbone widths/blocks must be non-empty and equal length");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("backbone width must be >= 1");
  for (int b : blocks)
    if (b < 1) throw std::invalid_argument("blocks per stage must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (tap_hw(num_stages() - 1) < 1)
    throw std::invalid_argument("input " + std::to_string(in_hw) +
                                " too small for " + std::to_string(num_stages()) +
                                " stages");
}

BasicBlock::BasicBlock(int in_ch, int out_ch, int stride, const std::string& name,
                       Rng& rng)
    : has_projection_(stride != 1 || in_ch != out_ch),
      conv1_(in_ch, out_ch, 3, stride, 1, name + ".conv1", rng),
      conv2_(out_ch, out_ch, 3, 1, 1, name + ".conv2", rng),
      down_conv_(has_projection_ ? Conv2d(in_ch, out_ch, 1, stride, 0, name + ".down", rng)
                                 : Conv2d()),
      bn1_(out_ch, name + ".bn1"),
      bn2_(out_ch, name + ".bn2"),
      down_bn_(has_projection_ ? BatchNorm2d(out_ch, name + ".down_bn") : BatchNorm2d()) {}

void BasicBlock::forward(const Tensor& x, bool train, Tensor& y) {
  Tensor h, h2;
  conv1_.forward(x, h);
  bn1_.forward(h, train, h2);
  relu1_.forward(h2, h);
  conv2_.forward(h, h2);
  bn2_.forward(h2, train, h);

  if (has_projection_) {
    Tensor sc, sc2;
    down_conv_.forward(x, sc);
    down_bn_.forward(sc, train, sc2);
    add_inplace(h, sc2);
  } else {
    add_inplace(h, x);
  }
  relu2_.forward(h, y);
}

void BasicBlock::backward(const Tensor& dy, Tensor& dx) {
  Tensor dsum, d1, d2;
  relu2_.backward(dy, dsum);

  bn2_.backward(dsum, d1);
  conv2_.backward(d1, d2);
  relu1_.backward(d2, d1);
  bn1_.backward(d1, d2);
  conv1_.backward(d2, dx);

  if (has_projection_) {
    Tensor dsc, dsc2;
    down_bn_.backward(dsum, dsc);
    down_conv_.backward(dsc, dsc2);
    add_inplace(dx, dsc2);
  } else {
    add_inplace(dx, dsum);
  }
}

void BasicBlock::collect(std::vector<ParamView>& params) {
  conv1_.collect(params);
  bn1_.collect(params);
  conv2_.collect(params);
  bn2_.collect(params);
  if (has_projection_) {
    down_conv_.collect(params);
    down_bn_.collect(params);
  }
}

void BasicBlock::collect_buffers(std::vector<BufferView>& buffers) {
  bn1_.collect_buffers(buffers);
  bn2_.collect_buffers(buffers);
  if (has_projection_) down_bn_.collect_buffers(buffers);
}

TappedBackbone::TappedBackbone(const BackboneSpec& spec, std::uint64_t seed)
    : spec_(spec) {
  spec_.validate();
  Rng rng = derive_stream(seed, 0x6e657477ULL);  // "netw"
  stem_conv_ = Conv2d(spec_.in_channels, spec_.widths[0], 3, 1, 1, "stem.conv", rng);
  stem_bn_ = BatchNorm2d(spec_.widths[0], "stem.bn");

  int in_ch = spec_.widths[0];
  for (int s = 0; s < spec_.num_stages(); ++s) {
    std::vector<BasicBlock> stage;
    stage.reserve(static_cast<std::size_t>(spec_.blocks[static_cast<std::size_t>(s)]));
    for (int b = 0; b < spec_.blocks[static_cast<std::size_t>(s)]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string name =
          "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      stage.emplace_back(in_ch, spec_.widths[static_cast<std::size_t>(s)], stride, name, rng);
      in_ch = spec_.widths[static_cast<std::size_t>(s)];
    }
    stages_.push_back(std::move(stage));
  }
  classifier_ = Linear(in_ch, spec_.num_classes, true, "classifier", rng);
  stage_out_.resize(static_cast<std::size_t>(spec_.num_stages()));
}

void TappedBackbone::forward_with_taps(const Tensor& x, bool train,
                                       Tensor& logits, std::vector<Tensor>* taps) {
  if (x.rank() != 4 || x.dim(1) != spec_.in_channels || x.dim(2) != spec_.in_hw ||
      x.dim(3) != spec_.in_hw)
    throw std::invalid_argument(
        "forward_with_taps: expected (B," + std::to_string(spec_.in_channels) + "," +
        std::to_string(spec_.in_hw) + "," + std::to_string(spec_.in_hw) + ") got " +
        x.shape_str());

  Tensor h, h2;
  stem_conv_.forward(x, h);
  stem_bn_.forward(h, train, h2);
  stem_relu_.forward(h2, h);

  Tensor cur = std::move(h);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (auto& block : stages_[s]) {
      Tensor next;
      block.forward(cur, train, next);
      cur = std::move(next);
    }
    stage_out_[s] = cur;
  }
  if (taps) {
    taps->assign(stage_out_.begin(), stage_out_.end());
    taps_requested_ = true;
  } else {
    taps_requested_ = false;
  }

  Tensor pooled;
  gap_.forward(cur, pooled);
  classifier_.forward(pooled, logits);
}

void TappedBackbone::backward(const Tensor& dlogits,
                              const std::vector<Tensor>* dtaps) {
  Tensor dpooled, dcur;
  classifier_.backward(dlogits, dpooled);
  gap_.backward(dpooled, dcur);

  for (int s = static_cast<int>(stages_.size()) - 1; s >= 0; --s) {
    if (dtaps && static_cast<std::size_t>(s) < dtaps->size() &&
        (*dtaps)[static_cast<std::size_t>(s)].numel() > 0)
      add_inplace(dcur, (*dtaps)[static_cast<std::size_t>(s)]);
    auto& stage = stages_[static_cast<std::size_t>(s)];
    for (int b = static_cast<int>(stage.size()) - 1; b >= 0; --b) {
      Tensor dprev;
      stage[static_cast<std::size_t>(b)].backward(dcur, dprev);
      dcur = std::move(dprev);
    }
  }

  Tensor d1, d2;
  stem_relu_.backward(dcur, d1);
  stem_bn_.backward(d1, d2);
  Tensor dx_unused;
  stem_conv_.backward(d2, dx_unused);
}

std::vector<ParamView> TappedBackbone::params() {
  std::vector<ParamView> out;
  stem_conv_.collect(out);
  stem_bn_.collect(out);
  for (auto& stage : stages_)
    for (auto& block : stage) block.collect(out);
  classifier_.collect(out);
  return out;
}

std::vector<BufferView> TappedBackbone::buffers() {
  std::vector<BufferView> out;
  stem_bn_.collect_buffers(out);
  for (auto& stage : stages_)
    for (auto& block : stage) block.collect_buffers(out);
  return out;
}

void TappedBackbone::zero_grad() {
  for (auto& p : params())
    std::fill(p.grad, p.grad + p.size, 0.0f);
}

void TappedBackbone::copy_weights_from(TappedBackbone& other) {
  auto dst = params();
  auto src = other.params();
  if (dst.size() != src.size())
    throw std::invalid_argument("copy_weights_from: parameter count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].size != src[i].size)
      throw std::invalid_argument("copy_weights_from: size mismatch at " + dst[i].name);
    std::copy(src[i].data, src[i].data + src[i].size, dst[i].data);
  }
  auto dbuf = buffers();
  auto sbuf = other.buffers();
  for (std::size_t i = 0; i < dbuf.size(); ++i)
    std::copy(sbuf[i].data, sbuf[i].data + sbuf[i].size, dbuf[i].data);
}

std::int64_t TappedBackbone::param_count() {
  std::int64_t n = 0;
  for (auto& p : params()) n += p.size;
  return n;
}

}  // namespace cwcl::nn
