#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fcache {

/// SplitMix64 generator. The exact output sequence is part of the on-disk
/// reproducibility contract (shuffle orders, synthetic data), so the library
/// does not use the implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept;

  /// Uniform integer in [0, bound) by rejection; bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (cosine branch only, no caching).
  double normal() noexcept;

 private:
  std::uint64_t state_;
};

/// Mixes a stream id into a seed so independent sub-streams do not overlap.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Fisher-Yates from the back: for i = n-1..1, swap(i, below(i+1)).
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace fcache
