#pragma once

#include <cstdint>
#include <vector>

namespace canary {

/// Derives an independent stream seed from (seed, stream index). splitmix64
/// finalizer; every nested loop that needs its own RNG goes through this so
/// runs replay exactly and prefix runs match longer runs.
inline std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d649bb133111ebull;
  return z ^ (z >> 31);
}

/// Uniform draw from [0, bound) by rejection, so no modulo bias.
template <typename Rng>
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

/// First k elements of a uniform random permutation of {0..n-1}, ascending
/// when the budget covers the whole set.
template <typename Rng>
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (k >= n) return order;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(order[i], order[j]);
  }
  order.resize(k);
  return order;
}

}  // namespace canary
