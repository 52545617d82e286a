#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace causalgen {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded random stream. All sampling is implemented on top of the raw
// mt19937_64 output so that sequences are identical across platforms
// (std::uniform_int_distribution and friends are implementation-defined).
//
// Streams for parallel work are derived from (seed, path...) so that results
// do not depend on thread scheduling or the number of workers.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  static RngStream derive(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(seed);
    for (std::uint64_t p : path) s = splitmix64(s ^ (p + 0x9e3779b97f4a7c15ULL));
    RngStream out(0);
    out.gen_.seed(s);
    return out;
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::below: n must be > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(below(n));
  }

  // Draw an index proportionally to the (unnormalized, nonnegative) weights.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("categorical: negative weight");
      total += w;
    }
    if (total <= 0.0)
      throw std::invalid_argument("categorical: weights sum to zero");
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

private:
  std::mt19937_64 gen_;
};

}  // namespace causalgen
