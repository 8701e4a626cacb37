#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace swarmsync {

// Seeded random stream. All conversions from raw 64-bit draws are done here
// rather than through std:: distributions, whose output is
// implementation-defined; two binaries built against different standard
// libraries must still replay identical experiments.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = gen_();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller (one value per two draws).
  double gaussian() {
    constexpr double two_pi = 6.283185307179586476925287;
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Fisher-Yates, consuming below() draws in a fixed order.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace swarmsync
