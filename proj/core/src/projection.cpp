#include "cwcl/nn/projection.hpp"

#include <stdexcept>

namespace cwcl::nn {

ChannelProjectionHead::ChannelProjectionHead(int layer_index, int spatial,
                                             int hidden, int dim, bool bias,
                                             std::uint64_t seed)
    : layer_index_(layer_index), spatial_(spatial) {
  Rng rng = derive_stream(seed, 0x63686561ULL, static_cast<std::uint64_t>(layer_index));
  const std::string base = "chead" + std::to_string(layer_index);
  lin1_ = Linear(spatial, hidden, bias, base + ".lin1", rng);
  lin2_ = Linear(hidden, dim, bias, base + ".lin2", rng);
}

Tensor ChannelProjectionHead::forward(const Tensor& tap) {
  if (tap.rank() != 4 || tap.dim(2) * tap.dim(3) != spatial_)
    throw std::invalid_argument("channel head " + std::to_string(layer_index_) +
                                ": tap " + tap.shape_str() + " does not match spatial " +
                                std::to_string(spatial_));
  tap_shape_ = tap.shape;
  const auto rows = tap.dim(0) * tap.dim(1);

  // NCHW already stores each channel's H*W values contiguously, so the
  // (B*M, HW) view is free.
  Tensor flat;
  flat.shape = {rows, spatial_};
  flat.data = tap.data;

  Tensor h1, h2, h3, out;
  lin1_.forward(flat, h1);
  relu_.forward(h1, h2);
  lin2_.forward(h2, h3);
  norm_.forward(h3, out);
  return out;
}

Tensor ChannelProjectionHead::backward(const Tensor& dbank) {
  Tensor d1, d2, d3, dflat;
  norm_.backward(dbank, d1);
  lin2_.backward(d1, d2);
  relu_.backward(d2, d3);
  lin1_.backward(d3, dflat);
  dflat.shape = tap_shape_;
  return dflat;
}

ChannelBank ChannelProjectionHead::project_channels(const Tensor& tap) {
  if (tap.rank() != 3)
    throw std::invalid_argument("project_channels expects (M,H,W), got " +
                                tap.shape_str());
  Tensor batched;
  batched.shape = {1, tap.dim(0), tap.dim(1), tap.dim(2)};
  batched.data = tap.data;
  Tensor rows = forward(batched);
  ChannelBank bank;
  bank.layer_index = layer_index_;
  bank.channels.shape = {tap.dim(0), rows.dim(1)};
  bank.channels.data = std::move(rows.data);
  return bank;
}

std::vector<ParamView> ChannelProjectionHead::params() {
  std::vector<ParamView> out;
  lin1_.collect(out);
  lin2_.collect(out);
  return out;
}

InstanceProjectionHead::InstanceProjectionHead(int layer_index, int channels,
                                               int hidden, int dim, bool bias,
                                               std::uint64_t seed)
    : layer_index_(layer_index), channels_(channels) {
  Rng rng = derive_stream(seed, 0x69686561ULL, static_cast<std::uint64_t>(layer_index));
  const std::string base = "ihead" + std::to_string(layer_index);
  lin1_ = Linear(channels, hidden, bias, base + ".lin1", rng);
  lin2_ = Linear(hidden, dim, bias, base + ".lin2", rng);
}

Tensor InstanceProjectionHead::forward(const Tensor& tap) {
  if (tap.rank() != 4 || tap.dim(1) != channels_)
    throw std::invalid_argument("instance head " + std::to_string(layer_index_) +
                                ": tap " + tap.shape_str() + " does not match channels " +
                                std::to_string(channels_));
  Tensor pooled, h1, h2, h3, out;
  gap_.forward(tap, pooled);
  lin1_.forward(pooled, h1);
  relu_.forward(h1, h2);
  lin2_.forward(h2, h3);
  norm_.forward(h3, out);
  return out;
}

Tensor InstanceProjectionHead::backward(const Tensor& dfeat) {
  Tensor d1, d2, d3, dpooled, dtap;
  norm_.backward(dfeat, d1);
  lin2_.backward(d1, d2);
  relu_.backward(d2, d3);
  lin1_.backward(d3, dpooled);
  gap_.backward(dpooled, dtap);
  return dtap;
}

std::vector<ParamView> InstanceProjectionHead::params() {
  std::vector<ParamView> out;
  lin1_.collect(out);
  lin2_.collect(out);
  return out;
}

}  // namespace cwcl::nn
