#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace podnet {

// Deterministic RNG with derivable substreams. Every stochastic routine in
// the library takes one of these explicitly, so results are reproducible and
// independent work items can draw from disjoint streams.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : root_(seed), engine_(splitmix64(seed)) {}

  // Independent stream, deterministic in (seed, stream).
  SplitRng split(std::uint64_t stream) const {
    return SplitRng(splitmix64(root_ ^ (0x9E3779B97F4A7C15ULL * (stream + 1))));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Box-Muller, one variate per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = open_unit();
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kTwoPi * u2);
  }

  // Standard Gumbel(0, 1).
  double gumbel() { return -std::log(-std::log(open_unit())); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  // Uniform on (0, 1), safe under log().
  double open_unit() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  static constexpr double kTwoPi = 6.283185307179586476925286766559;

  std::uint64_t root_;
  std::mt19937_64 engine_;
};

}  // namespace podnet
