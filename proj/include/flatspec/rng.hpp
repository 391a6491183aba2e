#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "flatspec/linalg.hpp"

namespace flatspec {

// splitmix64 finalizer; also used to derive child seeds.
constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic child seed for stream `index` of `base`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t s = base ^ (0xD1B54A32D192ED03ULL * (index + 1));
  return splitmix64(s);
}

// xoshiro256** seeded through splitmix64. Integer stream is bit-exact on every
// platform; floating conversions use only IEEE-exact operations plus log/sqrt.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal (Marsaglia polar method).
  double normal();

  Rng child(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  std::optional<double> spare_;
};

// Entries P(+1) = P(-1) = 1/2. Throws std::invalid_argument for n == 0.
Vec rademacher(Rng& rng, std::size_t n);
// Zero mean, unit variance Gaussian entries. Throws for n == 0.
Vec gaussian(Rng& rng, std::size_t n);

// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

}  // namespace flatspec
