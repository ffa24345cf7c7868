#include "cwcl/confident.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cwcl {

void ConfidentSet::validate(std::int64_t corpus_size) const {
  if (indices.size() != scores.size())
    throw std::invalid_argument("confident set indices/scores length mismatch");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= corpus_size)
      throw std::invalid_argument("confident index " + std::to_string(indices[i]) +
                                  " outside corpus");
    if (i > 0 && indices[i] <= indices[i - 1])
      throw std::invalid_argument("confident indices not strictly increasing");
    if (scores[i] < threshold)
      throw std::invalid_argument("confident score below threshold at index " +
                                  std::to_string(indices[i]));
  }
}

Eigen::MatrixXd softmax_rows(const Tensor& logits) {
  const auto b = logits.dim(0), k = logits.dim(1);
  Eigen::MatrixXd probs(b, k);
  for (std::int64_t i = 0; i < b; ++i) {
    const float* row = logits.ptr() + i * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < k; ++j) {
      if (!std::isfinite(row[j]))
        throw std::runtime_error("softmax_rows: non-finite logit at row " +
                                 std::to_string(i));
      mx = std::max(mx, static_cast<double>(row[j]));
    }
    double denom = 0.0;
    for (std::int64_t j = 0; j < k; ++j) {
      probs(i, j) = std::exp(static_cast<double>(row[j]) - mx);
      denom += probs(i, j);
    }
    probs.row(i) /= denom;
  }
  return probs;
}

Eigen::VectorXd predict_averaged(const LogitsFn& logits_fn, const Tensor& image,
                                 const AugPolicy& policy, Rng& rng) {
  ViewPair pair = make_view_pair(image, policy, rng);
  const auto c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor batch({2, c, h, w});
  std::copy(pair.view_a.data.begin(), pair.view_a.data.end(), batch.ptr());
  std::copy(pair.view_b.data.begin(), pair.view_b.data.end(), batch.ptr() + c * h * w);
  Tensor logits;
  logits_fn(batch, logits);
  const Eigen::MatrixXd probs = softmax_rows(logits);
  return 0.5 * (probs.row(0) + probs.row(1)).transpose();
}

std::vector<double> score_corpus(const LogitsFn& logits_fn,
                                 const NoisyCorpus& corpus,
                                 const AugPolicy& policy, std::uint64_t seed,
                                 int round, int batch_size) {
  const auto n = corpus.size();
  const auto c = corpus.base.images.dim(1), h = corpus.base.images.dim(2),
             w = corpus.base.images.dim(3);
  std::vector<double> scores(static_cast<std::size_t>(n), 0.0);

  Tensor sample({c, h, w});
  for (std::int64_t begin = 0; begin < n; begin += batch_size) {
    const auto count = std::min<std::int64_t>(batch_size, n - begin);
    // Rows 0..count-1 hold view A, rows count..2*count-1 view B.
    Tensor batch({2 * count, c, h, w});
    const auto plane = c * h * w;
    for (std::int64_t i = 0; i < count; ++i) {
      const auto idx = begin + i;
      std::copy(corpus.base.image(idx), corpus.base.image(idx) + plane, sample.ptr());
      Rng rng = derive_stream(seed, 0x73656c65ULL, static_cast<std::uint64_t>(round),
                              static_cast<std::uint64_t>(idx));
      ViewPair pair = make_view_pair(sample, policy, rng, idx);
      std::copy(pair.view_a.data.begin(), pair.view_a.data.end(),
                batch.ptr() + i * plane);
      std::copy(pair.view_b.data.begin(), pair.view_b.data.end(),
                batch.ptr() + (count + i) * plane);
    }
    Tensor logits;
    logits_fn(batch, logits);
    const Eigen::MatrixXd probs = softmax_rows(logits);
    for (std::int64_t i = 0; i < count; ++i) {
      const auto idx = begin + i;
      const int label = corpus.noisy_labels[static_cast<std::size_t>(idx)];
      scores[static_cast<std::size_t>(idx)] =
          0.5 * (probs(i, label) + probs(count + i, label));
    }
  }
  return scores;
}

ConfidentSet select_by_threshold(const std::vector<double>& scores, double gamma,
                                 int round) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("selection threshold " + std::to_string(gamma) +
                                " outside (0,1]");
  ConfidentSet sel;
  sel.round = round;
  sel.threshold = gamma;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= gamma) {
      sel.indices.push_back(static_cast<std::int64_t>(i));
      sel.scores.push_back(scores[i]);
    }
  }
  return sel;
}

ConfidentSet select_confident(const LogitsFn& logits_fn, const NoisyCorpus& corpus,
                              double gamma, int round, std::uint64_t seed,
                              const AugPolicy& policy, int batch_size) {
  const auto scores = score_corpus(logits_fn, corpus, policy, seed, round, batch_size);
  auto sel = select_by_threshold(scores, gamma, round);
  sel.validate(corpus.size());
  return sel;
}

ConfidentSet select_top_quantile(const std::vector<double>& scores,
                                 const std::vector<int>& noisy_labels, double q,
                                 int round) {
  if (!(q > 0.0 && q <= 1.0))
    throw std::invalid_argument("quantile " + std::to_string(q) + " outside (0,1]");
  if (scores.size() != noisy_labels.size())
    throw std::invalid_argument("scores/labels length mismatch");
  const int k = noisy_labels.empty()
                    ? 0
                    : *std::max_element(noisy_labels.begin(), noisy_labels.end()) + 1;
  std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < noisy_labels.size(); ++i)
    by_class[static_cast<std::size_t>(noisy_labels[i])].push_back(
        static_cast<std::int64_t>(i));

  ConfidentSet sel;
  sel.round = round;
  sel.threshold = 0.0;  // quantile mode has no fixed score floor
  for (auto& members : by_class) {
    if (members.empty()) continue;
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(q * static_cast<double>(members.size())));
    std::stable_sort(members.begin(), members.end(),
                     [&](std::int64_t a, std::int64_t b) {
                       return scores[static_cast<std::size_t>(a)] >
                              scores[static_cast<std::size_t>(b)];
                     });
    members.resize(keep);
    for (auto idx : members) {
      sel.indices.push_back(idx);
      sel.scores.push_back(scores[static_cast<std::size_t>(idx)]);
    }
  }
  // Re-sort jointly by index to restore the increasing-index invariant.
  std::vector<std::size_t> order(sel.indices.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sel.indices[a] < sel.indices[b];
  });
  ConfidentSet sorted;
  sorted.round = round;
  sorted.threshold = 0.0;
  for (auto o : order) {
    sorted.indices.push_back(sel.indices[o]);
    sorted.scores.push_back(sel.scores[o]);
  }
  return sorted;
}

double selection_noise_rate(const ConfidentSet& sel, const NoisyCorpus& corpus) {
  if (sel.empty())
    throw std::invalid_argument("selection_noise_rate: empty selection");
  std::size_t flipped = 0;
  for (auto idx : sel.indices)
    flipped += corpus.flip_mask[static_cast<std::size_t>(idx)] ? 1 : 0;
  return static_cast<double>(flipped) / static_cast<double>(sel.indices.size());
}

ClassBalancedSampler::ClassBalancedSampler(const ConfidentSet& sel,
                                           const std::vector<int>& noisy_labels) {
  if (sel.empty())
    throw std::invalid_argument("class-balanced sampler needs a non-empty selection");
  int k = 0;
  for (auto idx : sel.indices)
    k = std::max(k, noisy_labels[static_cast<std::size_t>(idx)] + 1);
  std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(k));
  for (auto idx : sel.indices)
    by_class[static_cast<std::size_t>(noisy_labels[static_cast<std::size_t>(idx)])]
        .push_back(idx);
  // Classes absent from the selection are excluded from the class draw.
  for (auto& members : by_class)
    if (!members.empty()) by_class_.push_back(std::move(members));
}

std::vector<std::int64_t> ClassBalancedSampler::next_batch(int batch_size,
                                                           Rng& rng) const {
  if (batch_size <= 0)
    throw std::invalid_argument("batch_size must be positive, got " +
                                std::to_string(batch_size));
  std::vector<std::int64_t> batch(static_cast<std::size_t>(batch_size));
  const auto classes = static_cast<std::uint32_t>(by_class_.size());
  for (int i = 0; i < batch_size; ++i) {
    const auto& members = by_class_[rng.uniform_int(classes)];
    batch[static_cast<std::size_t>(i)] =
        members[rng.uniform_int(static_cast<std::uint32_t>(members.size()))];
  }
  return batch;
}

void save_confident_set(const ConfidentSet& sel, const std::string& path,
                        const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "# config_hash=" << config_hash << " round=" << sel.round
      << " threshold=" << sel.threshold << "\n";
  out << "index,score\n";
  out.precision(17);
  for (std::size_t i = 0; i < sel.indices.size(); ++i)
    out << sel.indices[i] << "," << sel.scores[i] << "\n";
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

ConfidentSet load_confident_set(const std::string& path, int round) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  ConfidentSet sel;
  sel.round = round;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#' || line == "index,score") continue;
    std::istringstream ss(line);
    std::int64_t idx;
    double score;
    char comma;
    if (!(ss >> idx >> comma >> score) || comma != ',')
      throw std::runtime_error("confident file '" + path + "' row " +
                               std::to_string(row) + ": unparseable '" + line + "'");
    sel.indices.push_back(idx);
    sel.scores.push_back(score);
  }
  return sel;
}

}  // namespace cwcl
