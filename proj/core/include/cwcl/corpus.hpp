#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cwcl/tensor.hpp"

namespace cwcl {

enum class Split { train, test };

/// Images plus clean labels. Pixel values live in [0,1], layout NCHW.
struct LabeledImageSet {
  Tensor images;            // (N, C, H, W)
  std::vector<int> labels;  // class indices in [0, K)
  int num_classes = 0;
  Split split = Split::train;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  int channels() const { return static_cast<int>(images.dim(1)); }
  int height() const { return static_cast<int>(images.dim(2)); }
  int width() const { return static_cast<int>(images.dim(3)); }

  /// Pointer to sample i's CHW block.
  const float* image(std::int64_t i) const {
    return images.ptr() + i * images.dim(1) * images.dim(2) * images.dim(3);
  }
  float* image(std::int64_t i) {
    return images.ptr() + i * images.dim(1) * images.dim(2) * images.dim(3);
  }

  void validate() const;  // lengths match, labels in range
};

enum class NoiseKind { symmetric, asymmetric_pairs, asymmetric_next };

/// Synthetic corruption recipe.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double rate = 0.0;
  std::map<int, int> pair_map;  // asymmetric_pairs only
  bool include_self = false;    // symmetric: draw from all K instead of K-1
  bool exact_count = false;     // flip exactly floor(rate*n) instead of Bernoulli
  bool select_all_classes = false;  // pairs: draw selection over every sample,
                                    // unmapped classes stay unchanged

  std::string kind_str() const;
  static NoiseKind kind_from_str(const std::string& s);
};

/// Default CIFAR-10 asymmetric map: TRUCK->AUTOMOBILE, BIRD->AIRPLANE,
/// DEER->HORSE, CAT<->DOG.
std::map<int, int> cifar10_pair_map();

struct InjectResult {
  std::vector<int> noisy_labels;
  std::vector<std::uint8_t> flip_mask;  // flip_mask[i] <=> noisy != clean
};

InjectResult inject_symmetric(const std::vector<int>& labels, double rate, int k,
                              std::uint64_t seed, bool include_self = false,
                              bool exact_count = false);
InjectResult inject_asymmetric_pairs(const std::vector<int>& labels, double rate,
                                     const std::map<int, int>& pair_map,
                                     std::uint64_t seed,
                                     bool select_all_classes = false,
                                     bool exact_count = false);
InjectResult inject_asymmetric_next(const std::vector<int>& labels, double rate,
                                    int k, std::uint64_t seed,
                                    bool exact_count = false);

/// A labeled set plus its corrupted labels and full flip provenance.
struct NoisyCorpus {
  LabeledImageSet base;
  std::vector<int> noisy_labels;
  std::vector<std::uint8_t> flip_mask;
  NoiseSpec noise_spec;
  std::uint64_t seed = 0;

  std::int64_t size() const { return base.size(); }
  void validate() const;  // flip_mask[i] <=> labels differ; range checks
};

/// Runs the injector named by spec.kind over base's labels.
NoisyCorpus make_noisy_corpus(LabeledImageSet base, const NoiseSpec& spec,
                              std::uint64_t seed);

/// Fraction of flipped labels. Errors on an empty corpus.
double empirical_noise_rate(const NoisyCorpus& corpus);

/// Label overlay persisted as one header row `index,clean_label,noisy_label`
/// plus one row per sample, sorted by index.
void save_noise_file(const NoisyCorpus& corpus, const std::string& path);

struct NoiseOverlay {
  std::vector<int> clean_labels;
  std::vector<int> noisy_labels;
  std::vector<std::uint8_t> flip_mask;
};

/// Parses and validates an overlay (labels < k, indices 0..n-1 in order).
/// Malformed input throws with the offending row number in the message.
NoiseOverlay load_noise_file(const std::string& path, int k);

/// Applies a loaded overlay onto a base set; clean labels must match.
NoisyCorpus apply_overlay(LabeledImageSet base, const NoiseOverlay& overlay,
                          const NoiseSpec& spec, std::uint64_t seed);

}  // namespace cwcl
