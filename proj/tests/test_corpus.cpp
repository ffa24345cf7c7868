#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "cwcl/corpus.hpp"
#include "cwcl/dataset_io.hpp"
#include "cwcl/rng.hpp"

using namespace cwcl;

namespace {

LabeledImageSet tiny_set(int n, int k, std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.num_classes = k;
  spec.image_hw = 8;
  return make_synthetic(spec, n, Split::train, seed);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("symmetric injector") {
  std::vector<int> labels(10000, 0);

  SUBCASE("rate zero is the identity") {
    auto r = inject_symmetric(labels, 0.0, 10, 42);
    CHECK(r.noisy_labels == labels);
    CHECK(std::count(r.flip_mask.begin(), r.flip_mask.end(), 1) == 0);
  }
  SUBCASE("binomial expectation at rate 0.4 over 10000 all-zero labels") {
    auto r = inject_symmetric(labels, 0.4, 10, 42);
    const auto flips = std::count(r.flip_mask.begin(), r.flip_mask.end(), 1);
    const double sigma = std::sqrt(10000 * 0.4 * 0.6);  // ~48.99
    CHECK(std::abs(static_cast<double>(flips) - 4000.0) <= 3 * sigma);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (r.flip_mask[i]) CHECK(r.noisy_labels[i] != 0);
  }
  SUBCASE("rate one with two classes is a forced swap") {
    std::vector<int> two = {0, 1};
    auto r = inject_symmetric(two, 1.0, 2, 7);
    CHECK(r.noisy_labels == std::vector<int>{1, 0});
    CHECK(r.flip_mask == std::vector<std::uint8_t>{1, 1});
  }
  SUBCASE("exact-count mode pins the flip count") {
    auto r = inject_symmetric(labels, 0.4, 10, 42, false, /*exact_count=*/true);
    CHECK(std::count(r.flip_mask.begin(), r.flip_mask.end(), 1) == 4000);
  }
  SUBCASE("include_self can keep a drawn label unflipped") {
    std::vector<int> many(20000, 3);
    auto r = inject_symmetric(many, 1.0, 10, 9, /*include_self=*/true);
    const auto flips = std::count(r.flip_mask.begin(), r.flip_mask.end(), 1);
    // Every sample selected; ~1/10 redraw their own class.
    CHECK(flips < 20000);
    CHECK(std::abs(static_cast<double>(flips) - 18000.0) <=
          4 * std::sqrt(20000 * 0.9 * 0.1));
  }
  SUBCASE("determinism: same seed, same output") {
    auto a = inject_symmetric(labels, 0.4, 10, 42);
    auto b = inject_symmetric(labels, 0.4, 10, 42);
    CHECK(a.noisy_labels == b.noisy_labels);
    CHECK(a.flip_mask == b.flip_mask);
    auto c = inject_symmetric(labels, 0.4, 10, 43);
    CHECK(a.noisy_labels != c.noisy_labels);
  }
  SUBCASE("invalid specs") {
    CHECK_THROWS(inject_symmetric(labels, -0.1, 10, 1));
    CHECK_THROWS(inject_symmetric(labels, 1.1, 10, 1));
    CHECK_THROWS(inject_symmetric(labels, 0.5, 1, 1));
  }
}

TEST_CASE("asymmetric pairs injector") {
  const auto map = cifar10_pair_map();

  SUBCASE("transitions confined to the map") {
    std::vector<int> labels;
    for (int i = 0; i < 5000; ++i) labels.push_back(i % 10);
    auto r = inject_asymmetric_pairs(labels, 0.4, map, 11);
    std::map<std::pair<int, int>, int> transitions;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (r.flip_mask[i]) ++transitions[{labels[i], r.noisy_labels[i]}];
    for (const auto& [t, count] : transitions) {
      REQUIRE(map.count(t.first) == 1);
      CHECK(map.at(t.first) == t.second);
      CHECK(count > 0);
    }
    // TRUCK -> AUTOMOBILE and CAT <-> DOG specifically.
    CHECK(transitions.count({9, 1}) == 1);
    CHECK(transitions.count({3, 5}) == 1);
    CHECK(transitions.count({5, 3}) == 1);
    // Unmapped classes never flip.
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (!map.count(labels[i])) CHECK_FALSE(r.flip_mask[i]);
  }
  SUBCASE("rate zero identity") {
    std::vector<int> labels = {9, 3, 5, 0, 2};
    auto r = inject_asymmetric_pairs(labels, 0.0, map, 1);
    CHECK(r.noisy_labels == labels);
  }
  SUBCASE("self-loop rejected") {
    CHECK_THROWS(inject_asymmetric_pairs({1, 2}, 0.5, {{1, 1}}, 3));
  }
  SUBCASE("select_all_classes draws over every sample") {
    std::vector<int> labels(40000, 0);  // AIRPLANE: a target, never a source
    auto r = inject_asymmetric_pairs(labels, 0.4, map, 5, /*select_all=*/true);
    CHECK(std::count(r.flip_mask.begin(), r.flip_mask.end(), 1) == 0);
    std::vector<int> trucks(40000, 9);
    auto r2 = inject_asymmetric_pairs(trucks, 0.4, map, 5, /*select_all=*/true);
    const auto flips = std::count(r2.flip_mask.begin(), r2.flip_mask.end(), 1);
    CHECK(std::abs(static_cast<double>(flips) - 16000.0) <=
          4 * std::sqrt(40000 * 0.4 * 0.6));
  }
}

TEST_CASE("asymmetric next-class injector") {
  SUBCASE("flips go to label+1") {
    std::vector<int> labels(2000, 7);
    auto r = inject_asymmetric_next(labels, 0.5, 100, 3);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (r.flip_mask[i]) CHECK(r.noisy_labels[i] == 8);
  }
  SUBCASE("wraparound at K-1, verified by exhaustive small-K enumeration") {
    for (int k = 2; k <= 6; ++k) {
      std::vector<int> labels;
      for (int y = 0; y < k; ++y) labels.push_back(y);
      auto r = inject_asymmetric_next(labels, 1.0, k, 17);
      for (int y = 0; y < k; ++y)
        CHECK(r.noisy_labels[static_cast<std::size_t>(y)] == (y + 1) % k);
    }
  }
  SUBCASE("rate zero identity") {
    std::vector<int> labels = {0, 1, 99};
    auto r = inject_asymmetric_next(labels, 0.0, 100, 3);
    CHECK(r.noisy_labels == labels);
  }
}

TEST_CASE("flip mask equivalence under random specs") {
  Rng rng(100);
  for (int rep = 0; rep < 30; ++rep) {
    const int k = 2 + static_cast<int>(rng.uniform_int(10));
    std::vector<int> labels;
    for (int i = 0; i < 500; ++i)
      labels.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(k))));
    const double rate = rng.uniform();
    InjectResult r;
    switch (rng.uniform_int(3)) {
      case 0: r = inject_symmetric(labels, rate, k, rep, rng.bernoulli(0.5)); break;
      case 1: r = inject_asymmetric_next(labels, rate, k, rep); break;
      default: {
        std::map<int, int> map{{0, 1}};
        if (k > 2) map[1] = 2;
        r = inject_asymmetric_pairs(labels, rate, map, rep);
      }
    }
    for (std::size_t i = 0; i < labels.size(); ++i)
      CHECK((r.flip_mask[i] != 0) == (r.noisy_labels[i] != labels[i]));
  }
}

TEST_CASE("empirical noise rate") {
  NoisyCorpus c;
  c.base = tiny_set(4, 2);
  c.noisy_labels = c.base.labels;
  c.flip_mask = {0, 0, 0, 0};
  c.noise_spec = NoiseSpec{};
  CHECK(empirical_noise_rate(c) == doctest::Approx(0.0));
  for (std::size_t i = 0; i < 4; ++i) {
    c.flip_mask[i] = 1;
    c.noisy_labels[i] = 1 - c.noisy_labels[i];
  }
  CHECK(empirical_noise_rate(c) == doctest::Approx(1.0));
  c.flip_mask = {1, 0, 1, 0};
  c.noisy_labels = c.base.labels;
  c.noisy_labels[0] = 1 - c.noisy_labels[0];
  c.noisy_labels[2] = 1 - c.noisy_labels[2];
  CHECK(empirical_noise_rate(c) == doctest::Approx(0.5));
  NoisyCorpus empty;
  CHECK_THROWS(empirical_noise_rate(empty));
}

TEST_CASE("noise overlay round trip and validation") {
  auto base = tiny_set(64, 10);
  NoiseSpec spec;
  spec.kind = NoiseKind::symmetric;
  spec.rate = 0.4;
  auto corpus = make_noisy_corpus(base, spec, 7);

  const auto path = temp_path("cwcl_overlay_test.csv");
  save_noise_file(corpus, path);

  SUBCASE("round trip reproduces labels and mask exactly") {
    auto overlay = load_noise_file(path, 10);
    CHECK(overlay.noisy_labels == corpus.noisy_labels);
    CHECK(overlay.flip_mask == corpus.flip_mask);
    auto rebuilt = apply_overlay(corpus.base, overlay, spec, 7);
    CHECK(rebuilt.noisy_labels == corpus.noisy_labels);
  }
  SUBCASE("byte-identical rewrite") {
    const auto path2 = temp_path("cwcl_overlay_test2.csv");
    save_noise_file(corpus, path2);
    std::ifstream a(path), b(path2);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    std::remove(path2.c_str());
  }
  SUBCASE("label beyond K rejected") {
    CHECK_THROWS(load_noise_file(path, 3));
  }
  SUBCASE("empty and malformed files rejected with the offending row") {
    const auto bad = temp_path("cwcl_overlay_bad.csv");
    std::ofstream(bad) << "";
    CHECK_THROWS(load_noise_file(bad, 10));
    std::ofstream(bad) << "index,clean_label,noisy_label\n0,1,2\nbroken row\n";
    CHECK_THROWS_WITH_AS(load_noise_file(bad, 10),
                         doctest::Contains("row 2"), std::runtime_error);
    std::remove(bad.c_str());
  }
  std::remove(path.c_str());
}

TEST_CASE("make_noisy_corpus determinism and validation") {
  auto base = tiny_set(128, 10);
  NoiseSpec spec;
  spec.rate = 0.4;
  auto a = make_noisy_corpus(base, spec, 99);
  auto b = make_noisy_corpus(base, spec, 99);
  CHECK(a.noisy_labels == b.noisy_labels);
  a.validate();

  // Tampering with the mask must trip validation.
  a.flip_mask[0] ^= 1;
  CHECK_THROWS(a.validate());
}

TEST_CASE("cifar binary adapter reads the record layout") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "cwcl_cifar_test";
  fs::create_directories(dir);
  // Two records per batch file: label byte + 3072 pixel bytes.
  for (int b = 1; b <= 5; ++b) {
    std::ofstream out(dir / ("data_batch_" + std::to_string(b) + ".bin"),
                      std::ios::binary);
    for (int rec = 0; rec < 2; ++rec) {
      const unsigned char label = static_cast<unsigned char>((b + rec) % 10);
      out.put(static_cast<char>(label));
      for (int i = 0; i < 3072; ++i)
        out.put(static_cast<char>((i + rec) % 256));
    }
  }
  auto set = load_cifar10(dir.string(), Split::train);
  CHECK(set.size() == 10);
  CHECK(set.num_classes == 10);
  CHECK(set.height() == 32);
  CHECK(set.labels[0] == 1);
  // First pixel of record 0 is byte 0 -> 0.0f.
  CHECK(set.image(0)[0] == doctest::Approx(0.0f));
  // Second record starts at byte value 1.
  CHECK(set.image(1)[0] == doctest::Approx(1.0f / 255.0f));
  fs::remove_all(dir);
}

TEST_CASE("synthetic generator is deterministic and balanced") {
  auto a = tiny_set(100, 10, 5);
  auto b = tiny_set(100, 10, 5);
  CHECK(a.images.data == b.images.data);
  std::vector<int> counts(10, 0);
  for (int y : a.labels) ++counts[static_cast<std::size_t>(y)];
  for (int c : counts) CHECK(c == 10);
  for (float v : a.images.data) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}
