#include <benchmark/benchmark.h>

#include "cwcl/nn/backbone.hpp"
#include "cwcl/nn/projection.hpp"
#include "cwcl/rng.hpp"

using namespace cwcl;

namespace {

Tensor random_batch(std::int64_t b, int hw, std::uint64_t seed) {
  Tensor x({b, 3, hw, hw});
  Rng rng(seed);
  for (auto& v : x.data) v = static_cast<float>(rng.uniform());
  return x;
}

void BM_backbone_forward_eval(benchmark::State& state) {
  const auto b = state.range(0);
  auto spec = nn::BackboneSpec::tiny(10, 32);
  nn::TappedBackbone net(spec, 1);
  const auto x = random_batch(b, 32, 2);
  Tensor logits;
  for (auto _ : state) {
    net.forward_with_taps(x, false, logits, nullptr);
    benchmark::DoNotOptimize(logits.data.data());
  }
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_backbone_forward_eval)->Arg(32)->Arg(128)->Arg(256);

void BM_backbone_train_step(benchmark::State& state) {
  const auto b = state.range(0);
  auto spec = nn::BackboneSpec::tiny(10, 32);
  nn::TappedBackbone net(spec, 1);
  const auto x = random_batch(b, 32, 3);
  Tensor logits, dlogits;
  std::vector<Tensor> taps;
  for (auto _ : state) {
    net.zero_grad();
    net.forward_with_taps(x, true, logits, &taps);
    dlogits.resize(logits.shape);
    net.backward(dlogits, nullptr);
    benchmark::DoNotOptimize(logits.data.data());
  }
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_backbone_train_step)->Arg(32)->Arg(128);

void BM_channel_head_forward(benchmark::State& state) {
  const auto b = state.range(0);
  nn::ChannelProjectionHead head(0, 32 * 32, 128, 64, true, 1);
  Tensor tap({b, 8, 32, 32});
  Rng rng(4);
  for (auto& v : tap.data) v = static_cast<float>(rng.uniform());
  for (auto _ : state) {
    auto bank = head.forward(tap);
    benchmark::DoNotOptimize(bank.data.data());
  }
  state.SetItemsProcessed(state.iterations() * b * 8);
}
BENCHMARK(BM_channel_head_forward)->Arg(32)->Arg(128);

}  // namespace
