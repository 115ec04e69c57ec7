#pragma once

#include <cstdint>
#include <vector>

namespace mlap {

// Deterministic splittable random stream based on SplitMix64
// (Steele, Lea & Flood 2014). The generator algorithm is fixed here rather
// than delegated to the standard library so that identical seeds produce
// identical draw sequences on every platform and toolchain.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : seed_(seed), state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). Modulo reduction; the bias is below 2^-32
  // for every n used in this project.
  int next_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  // Derived stream that is statistically independent of this one and of any
  // substream with a different tag. Derivation mixes the *root* seed, so the
  // result does not depend on how many draws were consumed.
  RngStream substream(uint64_t tag) const {
    uint64_t z = seed_ ^ (0xD2B74407B1CE6E93ULL * (tag + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return RngStream(z ^ (z >> 31));
  }

  uint64_t seed() const { return seed_; }

  // Fisher-Yates shuffle of 0..n-1.
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = next_int(i + 1);
      int tmp = p[i];
      p[i] = p[j];
      p[j] = tmp;
    }
    return p;
  }

 private:
  uint64_t seed_;
  uint64_t state_;
};

}  // namespace mlap
