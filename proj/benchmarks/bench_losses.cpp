#include <benchmark/benchmark.h>

#include "cwcl/losses.hpp"
#include "cwcl/rng.hpp"

namespace {

Eigen::MatrixXd random_rows(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
  cwcl::Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

void BM_cwcl_loss(benchmark::State& state) {
  const auto m = state.range(0);
  const auto z = random_rows(2 * m, 64, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(cwcl::losses::cwcl_loss(z, 0.5));
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_cwcl_loss)->Arg(8)->Arg(32)->Arg(128)->Arg(512);

void BM_cwcl_loss_grad(benchmark::State& state) {
  const auto m = state.range(0);
  const auto z = random_rows(2 * m, 64, 2);
  Eigen::MatrixXd dz;
  for (auto _ : state)
    benchmark::DoNotOptimize(cwcl::losses::cwcl_loss_grad(z, 0.5, false, dz));
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_cwcl_loss_grad)->Arg(8)->Arg(32)->Arg(128);

void BM_supcon_loss_grad(benchmark::State& state) {
  const auto b = state.range(0);
  const auto f = random_rows(2 * b, 64, 3);
  std::vector<int> labels(static_cast<std::size_t>(2 * b));
  cwcl::Rng rng(4);
  for (Eigen::Index i = 0; i < b; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(10));
    labels[static_cast<std::size_t>(i + b)] = labels[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXd df;
  for (auto _ : state)
    benchmark::DoNotOptimize(cwcl::losses::supcon_loss_grad(f, labels, 0.1, df));
  state.SetItemsProcessed(state.iterations() * 2 * b);
}
BENCHMARK(BM_supcon_loss_grad)->Arg(32)->Arg(128)->Arg(256);

void BM_ce_loss_grad(benchmark::State& state) {
  const auto b = state.range(0);
  const auto logits = random_rows(b, 100, 5);
  std::vector<int> labels(static_cast<std::size_t>(b), 7);
  Eigen::MatrixXd dl;
  for (auto _ : state)
    benchmark::DoNotOptimize(cwcl::losses::ce_loss_grad(logits, labels, dl));
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_ce_loss_grad)->Arg(128)->Arg(512);

}  // namespace
