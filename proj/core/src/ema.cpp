#include "cwcl/nn/ema.hpp"

#include <stdexcept>

namespace cwcl::nn {

EmaState::EmaState(const std::vector<ParamView>& params,
                   const std::vector<BufferView>& buffers, double decay)
    : decay_(decay) {
  if (!(decay >= 0.0 && decay <= 1.0))
    throw std::invalid_argument("ema decay " + std::to_string(decay) +
                                " outside [0,1]");
  for (const auto& p : params) {
    sizes_.push_back(p.size);
    for (std::int64_t i = 0; i < p.size; ++i) shadow_.push_back(p.data[i]);
  }
  for (const auto& b : buffers) {
    sizes_.push_back(b.size);
    for (std::int64_t i = 0; i < b.size; ++i) shadow_.push_back(b.data[i]);
  }
}

void EmaState::check_sizes(const std::vector<ParamView>& params,
                           const std::vector<BufferView>& buffers) const {
  if (!initialized()) throw std::logic_error("EmaState not initialized");
  std::size_t idx = 0;
  std::int64_t total = 0;
  for (const auto& p : params) {
    if (idx >= sizes_.size() || sizes_[idx] != p.size)
      throw std::invalid_argument("ema shape mismatch at param '" + p.name + "'");
    total += p.size;
    ++idx;
  }
  for (const auto& b : buffers) {
    if (idx >= sizes_.size() || sizes_[idx] != b.size)
      throw std::invalid_argument("ema shape mismatch at buffer '" + b.name + "'");
    total += b.size;
    ++idx;
  }
  if (idx != sizes_.size() || total != static_cast<std::int64_t>(shadow_.size()))
    throw std::invalid_argument("ema array count mismatch");
}

void EmaState::update(const std::vector<ParamView>& params,
                      const std::vector<BufferView>& buffers) {
  check_sizes(params, buffers);
  std::size_t off = 0;
  const double d = decay_, omd = 1.0 - decay_;
  for (const auto& p : params) {
    for (std::int64_t i = 0; i < p.size; ++i, ++off)
      shadow_[off] = d * shadow_[off] + omd * static_cast<double>(p.data[i]);
  }
  for (const auto& b : buffers) {
    for (std::int64_t i = 0; i < b.size; ++i, ++off)
      shadow_[off] = d * shadow_[off] + omd * static_cast<double>(b.data[i]);
  }
}

void EmaState::apply_to(const std::vector<ParamView>& params,
                        const std::vector<BufferView>& buffers) const {
  check_sizes(params, buffers);
  std::size_t off = 0;
  for (const auto& p : params)
    for (std::int64_t i = 0; i < p.size; ++i, ++off)
      p.data[i] = static_cast<float>(shadow_[off]);
  for (const auto& b : buffers)
    for (std::int64_t i = 0; i < b.size; ++i, ++off)
      b.data[i] = static_cast<float>(shadow_[off]);
}

}  // namespace cwcl::nn
