#pragma once

#include <vector>

#include "cwcl/nn/layers.hpp"

namespace cwcl::nn {

/// Exponential moving average of a parameter set. The shadow is kept in
/// double precision; buffers (BN running stats) are averaged with the same
/// decay so the shadow model evaluates standalone.
class EmaState {
 public:
  EmaState() = default;

  /// Initializes the shadow as a copy of the live values.
  EmaState(const std::vector<ParamView>& params,
           const std::vector<BufferView>& buffers, double decay);

  /// shadow <- decay * shadow + (1 - decay) * live, elementwise.
  void update(const std::vector<ParamView>& params,
              const std::vector<BufferView>& buffers);

  /// Writes the shadow into the given views (the evaluation snapshot).
  /// Throws when uninitialized or when shapes disagree.
  void apply_to(const std::vector<ParamView>& params,
                const std::vector<BufferView>& buffers) const;

  bool initialized() const { return !shadow_.empty(); }
  double decay() const { return decay_; }
  std::vector<double>& shadow() { return shadow_; }
  const std::vector<double>& shadow() const { return shadow_; }
  void set_decay(double d) { decay_ = d; }

 private:
  void check_sizes(const std::vector<ParamView>& params,
                   const std::vector<BufferView>& buffers) const;

  std::vector<double> shadow_;  // params then buffers, flattened in order
  std::vector<std::int64_t> sizes_;
  double decay_ = 0.999;
};

}  // namespace cwcl::nn
