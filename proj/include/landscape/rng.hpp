#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "landscape/linalg.hpp"

namespace landscape {

// Deterministic random streams. The generator identity is part of the file
// and trace contract: mt19937_64 driving an explicit Box-Muller transform,
// because std::normal_distribution is not bit-stable across toolchains.
inline constexpr int kRngVersion = 1;
inline constexpr const char* kRngName = "mt19937_64+box-muller";

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

  // Independent stream for (seed, index) pairs, one per parallel trial.
  // splitmix64 mixing decorrelates neighboring indices.
  static RandomStream substream(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return RandomStream(z ^ (z >> 31));
  }

  std::uint64_t next_u64() { return gen_(); }

  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  long uniform_index(long n) { return static_cast<long>(gen_() % static_cast<std::uint64_t>(n)); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  Vec normal_vec(std::size_t n, double stddev = 1.0) {
    Vec v(n);
    for (auto& x : v) x = normal(0.0, stddev);
    return v;
  }

  Vec unit_vector(std::size_t d) {
    for (;;) {
      Vec v = normal_vec(d);
      const double n = norm(v);
      if (n > 1e-12) {
        scale_inplace(v, 1.0 / n);
        return v;
      }
    }
  }

 private:
  static constexpr double kPi = 3.141592653589793238462643383279502884;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace landscape
