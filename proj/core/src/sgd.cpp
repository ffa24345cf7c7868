#include "cwcl/nn/sgd.hpp"

#include <stdexcept>

namespace cwcl::nn {

void SgdMomentum::step(const std::vector<ParamView>& params, double lr) {
  if (velocity_.empty()) {
    velocity_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      velocity_[i].assign(static_cast<std::size_t>(params[i].size), 0.0f);
  }
  if (velocity_.size() != params.size())
    throw std::invalid_argument("optimizer state does not match parameter set");

  const float m = static_cast<float>(momentum_);
  const float wd = static_cast<float>(weight_decay_);
  const float step_size = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    auto& v = velocity_[i];
    if (static_cast<std::int64_t>(v.size()) != p.size)
      throw std::invalid_argument("optimizer state size mismatch at '" + p.name + "'");
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < p.size; ++j) {
      const float g = p.grad[j] + wd * p.data[j];
      v[static_cast<std::size_t>(j)] = m * v[static_cast<std::size_t>(j)] + g;
      p.data[j] -= step_size * v[static_cast<std::size_t>(j)];
    }
  }
}

}  // namespace cwcl::nn
