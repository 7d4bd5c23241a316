#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace aot {

// Seeded RNG with hand-rolled transforms. std::*_distribution output is
// implementation-defined, which would break the byte-reproducibility
// contract of `synth`/`train`; the raw mt19937_64 stream is standardized.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, no cached spare: one value per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Unbiased index in [0, n) via rejection.
  std::size_t index(std::size_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = eng_();
    while (x >= limit) x = eng_();
    return static_cast<std::size_t>(x % n);
  }

  int range(int lo, int hi) {  // inclusive both ends
    return lo + static_cast<int>(index(static_cast<std::size_t>(hi - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Derived stream for a named sub-component, independent of call order.
  Rng child(std::uint64_t stream) const {
    std::uint64_t x = seed_mix_ + 0x9e3779b97f4a7c15ull * (stream + 1);
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27; x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return Rng(x);
  }

 private:
  explicit Rng(std::mt19937_64 eng) : eng_(eng) {}
  std::mt19937_64 eng_;
  std::uint64_t seed_mix_ = eng_();  // consumed once, keys child streams
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.index(i)]);
  }
}

}  // namespace aot
