#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace sdd {

// Deterministic RNG with a fully pinned algorithm (splitmix64). The standard
// library distributions are implementation-defined, which would break the
// byte-identical reproducibility contract across toolchains, so draws are
// implemented explicitly here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased bounded draw via rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller. One value per call; the second root is
  // discarded to keep the draw count predictable.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream, e.g. one per training step or epoch.
  static Rng fork(uint64_t seed, uint64_t stream) {
    Rng mix(seed);
    uint64_t a = mix.next_u64();
    Rng mix2(stream ^ 0x6a09e667f3bcc909ull);
    uint64_t b = mix2.next_u64();
    return Rng(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
  }

 private:
  uint64_t state_;
};

}  // namespace sdd
