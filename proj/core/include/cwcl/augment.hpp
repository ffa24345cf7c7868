#pragma once

#include <cstdint>

#include "cwcl/rng.hpp"
#include "cwcl/tensor.hpp"

namespace cwcl {

/// Crop / flip / jitter parameters. Defaults are the de-facto CIFAR policy:
/// random crop with 4-pixel zero padding plus horizontal flip.
struct AugPolicy {
  bool random_crop = true;
  int crop_padding = 4;
  double hflip_prob = 0.5;
  double jitter_std = 0.0;  // per-channel additive brightness jitter, 0 = off

  static AugPolicy identity() { return {false, 0, 0.0, 0.0}; }
};

/// Two independently augmented views of one source image.
struct ViewPair {
  Tensor view_a;  // (C, H, W)
  Tensor view_b;
  std::int64_t source_index = 0;
};

/// One augmented copy of `image` (C,H,W). Draws consume `rng` in a fixed
/// order: crop dx, crop dy, flip coin, jitter (when enabled).
Tensor augment_image(const Tensor& image, const AugPolicy& policy, Rng& rng);

/// Applies augment_image twice off the same stream.
ViewPair make_view_pair(const Tensor& image, const AugPolicy& policy, Rng& rng,
                        std::int64_t source_index = 0);

/// Horizontal mirror (used as the flip oracle in tests as well).
Tensor hflip(const Tensor& image);

/// Per-(sample, epoch) augmentation stream, independent of worker order.
inline Rng view_stream(std::uint64_t seed, std::int64_t sample_index,
                       std::int64_t epoch) {
  return derive_stream(seed, 0x76696577ULL, static_cast<std::uint64_t>(sample_index),
                       static_cast<std::uint64_t>(epoch));
}

}  // namespace cwcl
