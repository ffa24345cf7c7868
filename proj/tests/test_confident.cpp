#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "cwcl/confident.hpp"
#include "cwcl/dataset_io.hpp"

using namespace cwcl;

namespace {

NoisyCorpus small_corpus(int n = 200, double rate = 0.4, std::uint64_t seed = 5) {
  SyntheticSpec spec;
  spec.image_hw = 8;
  auto base = make_synthetic(spec, n, Split::train, seed);
  NoiseSpec noise;
  noise.kind = NoiseKind::symmetric;
  noise.rate = rate;
  return make_noisy_corpus(std::move(base), noise, seed);
}

/// Oracle scorer: one-hot logits (large margin) at a per-index label.
LogitsFn onehot_fn(const std::vector<int>& target, int k, std::int64_t* cursor) {
  return [target, k, cursor](const Tensor& batch, Tensor& logits) {
    const auto rows = batch.dim(0);
    const auto count = rows / 2;  // view A rows then view B rows
    logits.resize({rows, k});
    for (std::int64_t i = 0; i < rows; ++i) {
      const auto idx = *cursor + (i % count);
      logits.ptr()[i * k + target[static_cast<std::size_t>(idx)]] = 30.0f;
    }
    *cursor += count;
  };
}

}  // namespace

TEST_CASE("predict_averaged") {
  SUBCASE("identity augmentations equal the single-view softmax") {
    Tensor img({1, 4, 4});
    for (std::size_t i = 0; i < img.data.size(); ++i)
      img.data[i] = static_cast<float>(i) / 16.0f;
    LogitsFn fn = [](const Tensor& batch, Tensor& logits) {
      logits.resize({batch.dim(0), 3});
      for (std::int64_t i = 0; i < batch.dim(0); ++i) {
        logits.ptr()[i * 3 + 0] = batch.ptr()[i * 16];  // depends on the view
        logits.ptr()[i * 3 + 1] = 0.5f;
        logits.ptr()[i * 3 + 2] = -0.25f;
      }
    };
    Rng rng(3);
    const auto probs = predict_averaged(fn, img, AugPolicy::identity(), rng);
    Tensor one({1, 3});
    one.ptr()[0] = img.ptr()[0];
    one.ptr()[1] = 0.5f;
    one.ptr()[2] = -0.25f;
    const auto expected = softmax_rows(one);
    for (int j = 0; j < 3; ++j)
      CHECK(probs[j] == doctest::Approx(expected(0, j)).epsilon(1e-9));
  }
  SUBCASE("views with opposite one-hot probabilities average to one half") {
    Tensor img({1, 2, 2});
    bool first = true;
    LogitsFn fn = [&first](const Tensor& batch, Tensor& logits) {
      logits.resize({batch.dim(0), 2});
      // view A row gets class 0, view B row gets class 1, with huge margin.
      logits.ptr()[0 * 2 + 0] = 100.0f;
      logits.ptr()[1 * 2 + 1] = 100.0f;
      (void)first;
    };
    Rng rng(1);
    const auto probs = predict_averaged(fn, img, AugPolicy::identity(), rng);
    CHECK(probs[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("output is normalized") {
    Tensor img({1, 2, 2});
    LogitsFn fn = [](const Tensor& batch, Tensor& logits) {
      logits.resize({batch.dim(0), 5});
      for (std::int64_t i = 0; i < logits.numel(); ++i)
        logits.data[static_cast<std::size_t>(i)] = static_cast<float>(i % 7) - 3.0f;
    };
    Rng rng(5);
    const auto probs = predict_averaged(fn, img, AugPolicy{}, rng);
    CHECK(probs.sum() == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("non-finite logits rejected") {
    Tensor img({1, 2, 2});
    LogitsFn fn = [](const Tensor& batch, Tensor& logits) {
      logits.resize({batch.dim(0), 2});
      logits.ptr()[0] = std::numeric_limits<float>::infinity();
    };
    Rng rng(5);
    CHECK_THROWS(predict_averaged(fn, img, AugPolicy{}, rng));
  }
}

TEST_CASE("select_confident with oracle models") {
  auto corpus = small_corpus();
  const int k = corpus.base.num_classes;

  SUBCASE("one-hot at the noisy label selects everything") {
    std::int64_t cursor = 0;
    auto sel = select_confident(onehot_fn(corpus.noisy_labels, k, &cursor), corpus,
                                0.9, 0, 7, AugPolicy{});
    CHECK(sel.size() == corpus.size());
  }
  SUBCASE("uniform model with gamma above 1/K selects nothing") {
    LogitsFn uniform = [k](const Tensor& batch, Tensor& logits) {
      logits.resize({batch.dim(0), k});
    };
    auto sel = select_confident(uniform, corpus, 0.5, 0, 7, AugPolicy{});
    CHECK(sel.empty());
  }
  SUBCASE("one-hot at the TRUE label selects exactly the unflipped indices") {
    std::int64_t cursor = 0;
    auto sel = select_confident(onehot_fn(corpus.base.labels, k, &cursor), corpus,
                                0.9, 0, 7, AugPolicy{});
    std::set<std::int64_t> selected(sel.indices.begin(), sel.indices.end());
    for (std::int64_t i = 0; i < corpus.size(); ++i) {
      const bool flipped = corpus.flip_mask[static_cast<std::size_t>(i)] != 0;
      CHECK(selected.count(i) == (flipped ? 0u : 1u));
    }
    CHECK(selection_noise_rate(sel, corpus) == doctest::Approx(0.0));
  }
  SUBCASE("gamma outside (0,1] rejected") {
    std::int64_t cursor = 0;
    CHECK_THROWS(select_confident(onehot_fn(corpus.noisy_labels, k, &cursor),
                                  corpus, 0.0, 0, 7, AugPolicy{}));
  }
}

TEST_CASE("gamma monotonicity: higher thresholds select nested subsets") {
  auto corpus = small_corpus();
  // Deterministic pseudo-model: logits derived from image content.
  LogitsFn fn = [&corpus](const Tensor& batch, Tensor& logits) {
    const int k = corpus.base.num_classes;
    logits.resize({batch.dim(0), k});
    const auto plane = batch.dim(1) * batch.dim(2) * batch.dim(3);
    for (std::int64_t i = 0; i < batch.dim(0); ++i) {
      const float* px = batch.ptr() + i * plane;
      for (int j = 0; j < k; ++j)
        logits.ptr()[i * k + j] = 4.0f * px[j] + 2.0f * px[j + k];
    }
  };
  std::vector<std::int64_t> prev;
  bool first = true;
  for (double gamma : {0.1, 0.2, 0.35, 0.5, 0.75, 0.95}) {
    auto sel = select_confident(fn, corpus, gamma, 0, 7, AugPolicy{});
    if (!first) {
      std::set<std::int64_t> coarse(prev.begin(), prev.end());
      for (auto idx : sel.indices) CHECK(coarse.count(idx) == 1);
    }
    prev = sel.indices;
    first = false;
  }
}

TEST_CASE("score soundness: stored scores match recomputation") {
  auto corpus = small_corpus(64);
  LogitsFn fn = [&corpus](const Tensor& batch, Tensor& logits) {
    const int k = corpus.base.num_classes;
    logits.resize({batch.dim(0), k});
    const auto plane = batch.dim(1) * batch.dim(2) * batch.dim(3);
    for (std::int64_t i = 0; i < batch.dim(0); ++i)
      for (int j = 0; j < k; ++j)
        logits.ptr()[i * k + j] = 3.0f * batch.ptr()[i * plane + j];
  };
  const int round = 2;
  auto sel = select_confident(fn, corpus, 0.08, round, 11, AugPolicy{});
  REQUIRE(!sel.empty());
  const auto plane =
      corpus.base.images.dim(1) * corpus.base.images.dim(2) * corpus.base.images.dim(3);
  for (std::size_t i = 0; i < sel.indices.size(); ++i) {
    const auto idx = sel.indices[i];
    Tensor img({corpus.base.images.dim(1), corpus.base.images.dim(2),
                corpus.base.images.dim(3)});
    std::copy(corpus.base.image(idx), corpus.base.image(idx) + plane, img.ptr());
    Rng rng = derive_stream(11, 0x73656c65ULL, round, static_cast<std::uint64_t>(idx));
    const auto probs = predict_averaged(fn, img, AugPolicy{}, rng);
    CHECK(sel.scores[i] ==
          doctest::Approx(probs[corpus.noisy_labels[static_cast<std::size_t>(idx)]])
              .epsilon(1e-6));
  }
}

TEST_CASE("selection noise rate trivials") {
  auto corpus = small_corpus(100);
  ConfidentSet clean, dirty, half;
  for (std::int64_t i = 0; i < corpus.size(); ++i) {
    auto& dst = corpus.flip_mask[static_cast<std::size_t>(i)] ? dirty : clean;
    dst.indices.push_back(i);
    dst.scores.push_back(1.0);
  }
  REQUIRE(!clean.empty());
  REQUIRE(!dirty.empty());
  CHECK(selection_noise_rate(clean, corpus) == doctest::Approx(0.0));
  CHECK(selection_noise_rate(dirty, corpus) == doctest::Approx(1.0));
  half.indices = {clean.indices[0], dirty.indices[0]};
  half.scores = {1.0, 1.0};
  CHECK(selection_noise_rate(half, corpus) == doctest::Approx(0.5));
  ConfidentSet empty;
  CHECK_THROWS(selection_noise_rate(empty, corpus));
}

TEST_CASE("class balanced sampler") {
  auto corpus = small_corpus(400, 0.0);

  SUBCASE("two classes with 100 vs 10 members draw evenly") {
    ConfidentSet sel;
    int a = 0, b = 0;
    for (std::int64_t i = 0; i < corpus.size(); ++i) {
      const int y = corpus.noisy_labels[static_cast<std::size_t>(i)];
      if (y == 0 && a < 100) { sel.indices.push_back(i); sel.scores.push_back(1); ++a; }
      if (y == 1 && b < 10) { sel.indices.push_back(i); sel.scores.push_back(1); ++b; }
    }
    std::sort(sel.indices.begin(), sel.indices.end());
    ClassBalancedSampler sampler(sel, corpus.noisy_labels);
    CHECK(sampler.represented_classes() == 2);
    Rng rng(19);
    int class0 = 0;
    const int draws = 1000;
    for (int d = 0; d < draws / 10; ++d) {
      auto batch = sampler.next_batch(10, rng);
      for (auto idx : batch)
        if (corpus.noisy_labels[static_cast<std::size_t>(idx)] == 0) ++class0;
    }
    // 3 sigma around 500 for p=1/2.
    CHECK(std::abs(class0 - 500) <= 3 * std::sqrt(1000 * 0.25));
  }
  SUBCASE("balanced marginals across all ten classes within 4 sigma") {
    ConfidentSet sel;
    for (std::int64_t i = 0; i < corpus.size(); ++i) {
      sel.indices.push_back(i);
      sel.scores.push_back(1.0);
    }
    ClassBalancedSampler sampler(sel, corpus.noisy_labels);
    Rng rng(23);
    std::vector<int> counts(10, 0);
    const int draws = 20000;
    for (int d = 0; d < draws / 100; ++d) {
      auto batch = sampler.next_batch(100, rng);
      for (auto idx : batch)
        ++counts[static_cast<std::size_t>(corpus.noisy_labels[static_cast<std::size_t>(idx)])];
    }
    const double expect = draws / 10.0;
    const double sigma = std::sqrt(draws * 0.1 * 0.9);
    for (int c : counts) CHECK(std::abs(c - expect) <= 4 * sigma);
  }
  SUBCASE("single-class selection always draws that class") {
    ConfidentSet sel;
    for (std::int64_t i = 0; i < corpus.size(); ++i)
      if (corpus.noisy_labels[static_cast<std::size_t>(i)] == 3) {
        sel.indices.push_back(i);
        sel.scores.push_back(1.0);
      }
    ClassBalancedSampler sampler(sel, corpus.noisy_labels);
    Rng rng(29);
    for (auto idx : sampler.next_batch(64, rng))
      CHECK(corpus.noisy_labels[static_cast<std::size_t>(idx)] == 3);
  }
  SUBCASE("every selected index is reachable") {
    ConfidentSet sel;
    for (std::int64_t i = 0; i < 40; ++i) {
      sel.indices.push_back(i);
      sel.scores.push_back(1.0);
    }
    ClassBalancedSampler sampler(sel, corpus.noisy_labels);
    Rng rng(31);
    std::set<std::int64_t> seen;
    for (int d = 0; d < 100; ++d)
      for (auto idx : sampler.next_batch(64, rng)) seen.insert(idx);
    CHECK(seen.size() == 40);
  }
  SUBCASE("bad batch size and empty selection rejected") {
    ConfidentSet sel;
    sel.indices = {0};
    sel.scores = {1.0};
    ClassBalancedSampler sampler(sel, corpus.noisy_labels);
    Rng rng(1);
    CHECK_THROWS(sampler.next_batch(0, rng));
    ConfidentSet empty;
    CHECK_THROWS(ClassBalancedSampler(empty, corpus.noisy_labels));
  }
}

TEST_CASE("quantile selection mode keeps the top scores per class") {
  std::vector<double> scores = {0.9, 0.1, 0.8, 0.2, 0.7, 0.3};
  std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  auto sel = select_top_quantile(scores, labels, 0.34, 0);
  // One per class (ceil-free floor with minimum 1): best of each class.
  REQUIRE(sel.size() == 2);
  CHECK(sel.indices[0] == 0);  // score 0.9
  CHECK(sel.indices[1] == 4);  // score 0.7
}

TEST_CASE("confident set round file") {
  namespace fs = std::filesystem;
  ConfidentSet sel;
  sel.indices = {3, 17, 42};
  sel.scores = {0.95, 0.91, 0.99};
  sel.round = 4;
  sel.threshold = 0.9;
  const auto path = (fs::temp_directory_path() / "cwcl_conf_round.csv").string();
  save_confident_set(sel, path, "cafebabe");
  auto back = load_confident_set(path, 4);
  CHECK(back.indices == sel.indices);
  for (std::size_t i = 0; i < sel.scores.size(); ++i)
    CHECK(back.scores[i] == doctest::Approx(sel.scores[i]).epsilon(1e-12));
  std::remove(path.c_str());
}
