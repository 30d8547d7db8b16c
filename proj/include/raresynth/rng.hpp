#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace raresynth {

// Deterministic counter-free PRNG built on splitmix64. Every stochastic
// component in the pipeline draws from an Rng seeded through derive_seed, so
// results are reproducible bit-for-bit regardless of thread count or
// execution order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Lemire reduction; bias is O(n / 2^64).
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Two uniforms per draw, no cached spare,
  // so the stream position is independent of call parity.
  double normal() {
    double u1 = static_cast<double>((next_u64() >> 11) | 1ULL) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Documented seed-splitting function: folds each component into the running
// seed with a splitmix64 finalizer. Used to derive independent streams for
// (run, role) tuples, e.g. derive_seed(global, ratio_index, mode, fold, rep).
inline std::uint64_t derive_seed(std::uint64_t seed) { return seed; }

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t part, Rest... rest) {
  return derive_seed(detail::mix64(seed ^ (part + 0x9E3779B97F4A7C15ULL)), rest...);
}

// Role tags for stream derivation; values are arbitrary but frozen.
enum class SeedRole : std::uint64_t {
  model_init = 0x01,
  train = 0x02,
  data = 0x03,
  fold = 0x04,
  assemble = 0x05,
  sampler = 0x06,
  pairs = 0x07,
  lora_init = 0x08,
};

inline std::uint64_t derive_seed_role(std::uint64_t seed, SeedRole role) {
  return derive_seed(seed, static_cast<std::uint64_t>(role));
}

}  // namespace raresynth
