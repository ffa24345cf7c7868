#include "cwcl/rng.hpp"

namespace cwcl {

std::uint32_t Rng::uniform_int(std::uint32_t n) {
  if (n == 0) return 0;
  // Classic rejection against the largest multiple of n below 2^32.
  const std::uint32_t limit = UINT32_MAX - UINT32_MAX % n;
  std::uint32_t x;
  do {
    x = static_cast<std::uint32_t>(next_u64() >> 32);
  } while (x >= limit);
  return x % n;
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t h = seed ^ 0xcbf29ce484222325ULL;
  for (int i = 0; i < 8; ++i) {
    h ^= (key >> (8 * i)) & 0xffULL;
    h *= 0x100000001b3ULL;
  }
  // Final avalanche (SplitMix64 finalizer).
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

Rng derive_stream(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2,
                  std::uint64_t k3) {
  std::uint64_t h = hash_combine(seed, k1);
  h = hash_combine(h, k2);
  h = hash_combine(h, k3);
  return Rng(h);
}

}  // namespace cwcl
