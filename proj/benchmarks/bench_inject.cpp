#include <benchmark/benchmark.h>

#include "cwcl/augment.hpp"
#include "cwcl/corpus.hpp"
#include "cwcl/rng.hpp"

using namespace cwcl;

namespace {

void BM_inject_symmetric(benchmark::State& state) {
  const auto n = state.range(0);
  std::vector<int> labels(static_cast<std::size_t>(n));
  Rng rng(1);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_int(10));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto r = inject_symmetric(labels, 0.4, 10, ++seed);
    benchmark::DoNotOptimize(r.noisy_labels.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_inject_symmetric)->Arg(50000);

void BM_make_view_pair(benchmark::State& state) {
  Tensor img({3, 32, 32});
  Rng fill(2);
  for (auto& v : img.data) v = static_cast<float>(fill.uniform());
  AugPolicy policy;
  Rng rng(3);
  for (auto _ : state) {
    auto pair = make_view_pair(img, policy, rng);
    benchmark::DoNotOptimize(pair.view_a.data.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_make_view_pair);

}  // namespace
