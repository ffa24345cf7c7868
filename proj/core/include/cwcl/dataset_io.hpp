#pragma once

#include <cstdint>
#include <string>

#include "cwcl/corpus.hpp"

namespace cwcl {

/// CIFAR-10 binary batches (data_batch_*.bin / test_batch.bin): records of
/// 1 label byte + 3072 RGB bytes.
LabeledImageSet load_cifar10(const std::string& dir, Split split);

/// CIFAR-100 binary (train.bin / test.bin): coarse byte, fine byte, 3072 RGB.
LabeledImageSet load_cifar100(const std::string& dir, Split split);

/// Generic labeled-image-folder layout: one subdirectory per class, sorted
/// alphabetically to assign indices. Images are resized to `hw` x `hw`.
LabeledImageSet load_image_folder(const std::string& dir, int hw);

/// Parameters for the procedurally generated benchmark set: K textured
/// classes with per-instance warp, phase and background noise. Deterministic
/// in (seed, index), so train/test splits never overlap.
struct SyntheticSpec {
  int num_classes = 10;
  int image_hw = 32;
  int channels = 3;
  double pixel_noise = 0.30;  // background Gaussian noise std
  double warp = 1.0;  // orientation jitter relative to the inter-class gap
};

LabeledImageSet make_synthetic(const SyntheticSpec& spec, std::int64_t count,
                               Split split, std::uint64_t seed);

}  // namespace cwcl
