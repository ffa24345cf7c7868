#pragma once

#include <cstdint>
#include <cmath>

namespace cwcl {

/// Deterministic pseudo-random stream (SplitMix64 core).
///
/// Standard-library distributions are implementation-defined, so every draw
/// here is spelled out explicitly: identical seeds produce identical streams
/// on every platform. Substreams are derived by hashing (seed, key...) so
/// parallel workers can draw independently of scheduling order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Avoid the all-zero fixed point and decorrelate small seeds.
    next_u64();
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// True with probability p.
  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint32_t uniform_int(std::uint32_t n);

  /// Uniform double in [lo, hi).
  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (explicit formula, no cached spare).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

/// Hash-combine a key into a seed (FNV-1a over the 8 bytes, then mixed).
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t key);

/// Counter-based substream: depends only on the keys, never on draw order
/// elsewhere. Used for per-(sample, epoch) augmentation streams.
Rng derive_stream(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2 = 0,
                  std::uint64_t k3 = 0);

}  // namespace cwcl
