#pragma once

#include <vector>

#include "cwcl/nn/layers.hpp"

namespace cwcl::nn {

/// SGD with classic momentum and L2 weight decay folded into the gradient:
/// v = momentum * v + g + wd * p;  p -= lr * v.
class SgdMomentum {
 public:
  SgdMomentum() = default;
  SgdMomentum(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const std::vector<ParamView>& params, double lr);

  std::vector<std::vector<float>>& velocity() { return velocity_; }
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

 private:
  double momentum_ = 0.9;
  double weight_decay_ = 5e-4;
  std::vector<std::vector<float>> velocity_;  // lazily sized per param
};

}  // namespace cwcl::nn
