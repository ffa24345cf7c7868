#include "cwcl/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cwcl/rng.hpp"

namespace cwcl {

namespace {

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0))
    throw std::invalid_argument("noise rate " + std::to_string(rate) +
                                " outside [0,1]");
}

void check_labels(const std::vector<int>& labels, int k) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= k)
      throw std::invalid_argument("label " + std::to_string(labels[i]) +
                                  " at index " + std::to_string(i) +
                                  " outside [0," + std::to_string(k) + ")");
}

/// Indices to corrupt: per-index Bernoulli(rate) draws, or an exact
/// floor(rate*n) subset via partial Fisher-Yates, both off the same stream.
std::vector<std::uint8_t> select_indices(std::size_t n, double rate, Rng& rng,
                                         bool exact_count) {
  std::vector<std::uint8_t> selected(n, 0);
  if (!exact_count) {
    for (std::size_t i = 0; i < n; ++i) selected[i] = rng.bernoulli(rate) ? 1 : 0;
    return selected;
  }
  const auto want = static_cast<std::size_t>(rate * static_cast<double>(n));
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  for (std::size_t i = 0; i < want && i < n; ++i) {
    const std::size_t j =
        i + rng.uniform_int(static_cast<std::uint32_t>(n - i));
    std::swap(idx[i], idx[j]);
    selected[idx[i]] = 1;
  }
  return selected;
}

}  // namespace

void LabeledImageSet::validate() const {
  if (images.rank() != 4)
    throw std::invalid_argument("images must be NCHW, got rank " +
                                std::to_string(images.rank()));
  if (images.dim(0) != size())
    throw std::invalid_argument("images/labels length mismatch: " +
                                std::to_string(images.dim(0)) + " vs " +
                                std::to_string(size()));
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  check_labels(labels, num_classes);
}

std::string NoiseSpec::kind_str() const {
  switch (kind) {
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::asymmetric_pairs: return "asymmetric_pairs";
    case NoiseKind::asymmetric_next: return "asymmetric_next";
  }
  return "symmetric";
}

NoiseKind NoiseSpec::kind_from_str(const std::string& s) {
  if (s == "symmetric") return NoiseKind::symmetric;
  if (s == "asymmetric_pairs") return NoiseKind::asymmetric_pairs;
  if (s == "asymmetric_next") return NoiseKind::asymmetric_next;
  throw std::invalid_argument("unknown noise kind '" + s + "'");
}

std::map<int, int> cifar10_pair_map() {
  // TRUCK(9)->AUTOMOBILE(1), BIRD(2)->AIRPLANE(0), DEER(4)->HORSE(7),
  // CAT(3)<->DOG(5).
  return {{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}};
}

InjectResult inject_symmetric(const std::vector<int>& labels, double rate, int k,
                              std::uint64_t seed, bool include_self,
                              bool exact_count) {
  check_rate(rate);
  if (k < 2) throw std::invalid_argument("symmetric noise needs K >= 2, got " +
                                         std::to_string(k));
  check_labels(labels, k);

  Rng rng = derive_stream(seed, 0x73796d6dULL);  // "symm"
  const std::size_t n = labels.size();
  const auto selected = select_indices(n, rate, rng, exact_count);

  InjectResult out;
  out.noisy_labels = labels;
  out.flip_mask.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!selected[i]) continue;
    int drawn;
    if (include_self) {
      drawn = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(k)));
    } else {
      // Uniform over the other K-1 classes.
      drawn = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(k - 1)));
      if (drawn >= labels[i]) ++drawn;
    }
    out.noisy_labels[i] = drawn;
    out.flip_mask[i] = (drawn != labels[i]) ? 1 : 0;
  }
  return out;
}

InjectResult inject_asymmetric_pairs(const std::vector<int>& labels, double rate,
                                     const std::map<int, int>& pair_map,
                                     std::uint64_t seed, bool select_all_classes,
                                     bool exact_count) {
  check_rate(rate);
  for (const auto& [src, dst] : pair_map) {
    if (src == dst)
      throw std::invalid_argument("pair_map self-loop at class " +
                                  std::to_string(src));
    if (src < 0 || dst < 0)
      throw std::invalid_argument("pair_map contains negative class");
  }

  Rng rng = derive_stream(seed, 0x70616972ULL);  // "pair"
  const std::size_t n = labels.size();

  InjectResult out;
  out.noisy_labels = labels;
  out.flip_mask.assign(n, 0);

  if (select_all_classes) {
    // Paper-literal reading: select rate of ALL samples, flip only mapped ones.
    const auto selected = select_indices(n, rate, rng, exact_count);
    for (std::size_t i = 0; i < n; ++i) {
      if (!selected[i]) continue;
      auto it = pair_map.find(labels[i]);
      if (it == pair_map.end()) continue;
      out.noisy_labels[i] = it->second;
      out.flip_mask[i] = 1;
    }
    return out;
  }

  // Default reading: each mapped-class sample flips with probability rate;
  // unmapped classes never flip and never consume a draw.
  if (exact_count) {
    std::vector<std::uint32_t> eligible;
    for (std::size_t i = 0; i < n; ++i)
      if (pair_map.count(labels[i])) eligible.push_back(static_cast<std::uint32_t>(i));
    const auto want = static_cast<std::size_t>(rate * static_cast<double>(eligible.size()));
    for (std::size_t i = 0; i < want && i < eligible.size(); ++i) {
      const std::size_t j =
          i + rng.uniform_int(static_cast<std::uint32_t>(eligible.size() - i));
      std::swap(eligible[i], eligible[j]);
      const auto idx = eligible[i];
      out.noisy_labels[idx] = pair_map.at(labels[idx]);
      out.flip_mask[idx] = 1;
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto it = pair_map.find(labels[i]);
    if (it == pair_map.end()) continue;
    if (!rng.bernoulli(rate)) continue;
    out.noisy_labels[i] = it->second;
    out.flip_mask[i] = 1;
  }
  return out;
}

InjectResult inject_asymmetric_next(const std::vector<int>& labels, double rate,
                                    int k, std::uint64_t seed, bool exact_count) {
  check_rate(rate);
  if (k < 2) throw std::invalid_argument("next-class noise needs K >= 2, got " +
                                         std::to_string(k));
  check_labels(labels, k);

  Rng rng = derive_stream(seed, 0x6e657874ULL);  // "next"
  const std::size_t n = labels.size();
  const auto selected = select_indices(n, rate, rng, exact_count);

  InjectResult out;
  out.noisy_labels = labels;
  out.flip_mask.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!selected[i]) continue;
    out.noisy_labels[i] = (labels[i] + 1) % k;  // wraps at K-1 -> 0
    out.flip_mask[i] = 1;
  }
  return out;
}

void NoisyCorpus::validate() const {
  base.validate();
  const auto n = static_cast<std::size_t>(base.size());
  if (noisy_labels.size() != n || flip_mask.size() != n)
    throw std::invalid_argument("noisy corpus field lengths disagree");
  check_labels(noisy_labels, base.num_classes);
  for (std::size_t i = 0; i < n; ++i) {
    const bool differs = noisy_labels[i] != base.labels[i];
    if (differs != (flip_mask[i] != 0))
      throw std::invalid_argument("flip_mask inconsistent at index " +
                                  std::to_string(i));
  }
}

NoisyCorpus make_noisy_corpus(LabeledImageSet base, const NoiseSpec& spec,
                              std::uint64_t seed) {
  base.validate();
  InjectResult r;
  switch (spec.kind) {
    case NoiseKind::symmetric:
      r = inject_symmetric(base.labels, spec.rate, base.num_classes, seed,
                           spec.include_self, spec.exact_count);
      break;
    case NoiseKind::asymmetric_pairs: {
      const auto& map = spec.pair_map.empty() ? cifar10_pair_map() : spec.pair_map;
      for (const auto& [src, dst] : map)
        if (src >= base.num_classes || dst >= base.num_classes)
          throw std::invalid_argument("pair_map class outside [0,K)");
      r = inject_asymmetric_pairs(base.labels, spec.rate, map, seed,
                                  spec.select_all_classes, spec.exact_count);
      break;
    }
    case NoiseKind::asymmetric_next:
      r = inject_asymmetric_next(base.labels, spec.rate, base.num_classes, seed,
                                 spec.exact_count);
      break;
  }
  NoisyCorpus c;
  c.base = std::move(base);
  c.noisy_labels = std::move(r.noisy_labels);
  c.flip_mask = std::move(r.flip_mask);
  c.noise_spec = spec;
  c.seed = seed;
  c.validate();
  return c;
}

double empirical_noise_rate(const NoisyCorpus& corpus) {
  if (corpus.flip_mask.empty())
    throw std::invalid_argument("empirical_noise_rate: empty corpus");
  std::size_t flips = 0;
  for (auto f : corpus.flip_mask) flips += f ? 1 : 0;
  return static_cast<double>(flips) / static_cast<double>(corpus.flip_mask.size());
}

void save_noise_file(const NoisyCorpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "index,clean_label,noisy_label\n";
  for (std::int64_t i = 0; i < corpus.size(); ++i)
    out << i << "," << corpus.base.labels[static_cast<std::size_t>(i)] << ","
        << corpus.noisy_labels[static_cast<std::size_t>(i)] << "\n";
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

NoiseOverlay load_noise_file(const std::string& path, int k) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open noise file '" + path + "'");

  auto fail = [&](std::size_t row, const std::string& why) {
    throw std::runtime_error("noise file '" + path + "' row " +
                             std::to_string(row) + ": " + why);
  };

  std::string line;
  if (!std::getline(in, line)) fail(0, "empty file");
  if (line == "index,clean_label,noisy_label\r")
    line.pop_back();
  if (line != "index,clean_label,noisy_label")
    fail(0, "bad header '" + line + "'");

  NoiseOverlay overlay;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long idx;
    int clean, noisy;
    char c1, c2;
    if (!(ss >> idx >> c1 >> clean >> c2 >> noisy) || c1 != ',' || c2 != ',')
      fail(row, "unparseable '" + line + "'");
    if (idx != static_cast<long long>(overlay.clean_labels.size()))
      fail(row, "index " + std::to_string(idx) + " out of order");
    if (clean < 0 || clean >= k)
      fail(row, "clean label " + std::to_string(clean) + " outside [0," +
                    std::to_string(k) + ")");
    if (noisy < 0 || noisy >= k)
      fail(row, "noisy label " + std::to_string(noisy) + " outside [0," +
                    std::to_string(k) + ")");
    overlay.clean_labels.push_back(clean);
    overlay.noisy_labels.push_back(noisy);
    overlay.flip_mask.push_back(clean != noisy ? 1 : 0);
  }
  if (overlay.clean_labels.empty()) fail(0, "no data rows");
  return overlay;
}

NoisyCorpus apply_overlay(LabeledImageSet base, const NoiseOverlay& overlay,
                          const NoiseSpec& spec, std::uint64_t seed) {
  base.validate();
  if (overlay.clean_labels.size() != static_cast<std::size_t>(base.size()))
    throw std::runtime_error("overlay covers " +
                             std::to_string(overlay.clean_labels.size()) +
                             " samples, corpus has " + std::to_string(base.size()));
  for (std::size_t i = 0; i < overlay.clean_labels.size(); ++i)
    if (overlay.clean_labels[i] != base.labels[i])
      throw std::runtime_error("overlay clean label disagrees with corpus at index " +
                               std::to_string(i));
  NoisyCorpus c;
  c.base = std::move(base);
  c.noisy_labels = overlay.noisy_labels;
  c.flip_mask = overlay.flip_mask;
  c.noise_spec = spec;
  c.seed = seed;
  c.validate();
  return c;
}

}  // namespace cwcl
