#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cwcl/augment.hpp"
#include "cwcl/corpus.hpp"
#include "cwcl/rng.hpp"
#include "cwcl/tensor.hpp"

namespace cwcl {

/// Indices whose dual-augmentation-averaged probability of their assigned
/// (noisy) label met the threshold, with scores and the selection round id.
struct ConfidentSet {
  std::vector<std::int64_t> indices;  // strictly increasing
  std::vector<double> scores;         // score[i] for indices[i], all >= threshold
  int round = 0;
  double threshold = 0.0;

  std::int64_t size() const { return static_cast<std::int64_t>(indices.size()); }
  bool empty() const { return indices.empty(); }
  void validate(std::int64_t corpus_size) const;
};

/// Maps an augmented image batch (B,C,H,W) to logits (B,K). The trainer
/// wraps a frozen backbone snapshot; tests may wrap oracles.
using LogitsFn = std::function<void(const Tensor& batch, Tensor& logits)>;

/// Row-wise softmax in double precision. Throws on non-finite logits.
Eigen::MatrixXd softmax_rows(const Tensor& logits);

/// Dual-augmentation averaged class probabilities for one image: softmax of
/// each view's logits, averaged elementwise. Output sums to 1 within 1e-6.
Eigen::VectorXd predict_averaged(const LogitsFn& logits_fn, const Tensor& image,
                                 const AugPolicy& policy, Rng& rng);

/// Averaged probability of the assigned label for every corpus index.
/// Augmentation streams derive from (seed, round, index), so scores are
/// recomputable per index regardless of batching.
std::vector<double> score_corpus(const LogitsFn& logits_fn,
                                 const NoisyCorpus& corpus,
                                 const AugPolicy& policy, std::uint64_t seed,
                                 int round, int batch_size = 256);

/// Keeps exactly the indices with score >= gamma. gamma must lie in (0,1].
/// An empty result is returned as-is; the caller decides the fallback.
ConfidentSet select_confident(const LogitsFn& logits_fn, const NoisyCorpus& corpus,
                              double gamma, int round, std::uint64_t seed,
                              const AugPolicy& policy, int batch_size = 256);

/// Same machinery from precomputed scores (used by the quantile mode too).
ConfidentSet select_by_threshold(const std::vector<double>& scores, double gamma,
                                 int round);

/// Alternative mode: top-q fraction per class by score (q in (0,1]).
ConfidentSet select_top_quantile(const std::vector<double>& scores,
                                 const std::vector<int>& noisy_labels, double q,
                                 int round);

/// Fraction of selected indices whose label was flipped. Errors when empty.
double selection_noise_rate(const ConfidentSet& sel, const NoisyCorpus& corpus);

/// With-replacement class-balanced sampler over a selection: a batch entry
/// draws a class uniformly among represented classes, then a uniform member
/// of that class.
class ClassBalancedSampler {
 public:
  ClassBalancedSampler(const ConfidentSet& sel, const std::vector<int>& noisy_labels);

  std::vector<std::int64_t> next_batch(int batch_size, Rng& rng) const;
  int represented_classes() const { return static_cast<int>(by_class_.size()); }

 private:
  std::vector<std::vector<std::int64_t>> by_class_;  // selected indices per class
};

/// Round file `index,score` under {run}/confident/.
void save_confident_set(const ConfidentSet& sel, const std::string& path,
                        const std::string& config_hash);
ConfidentSet load_confident_set(const std::string& path, int round);

}  // namespace cwcl
