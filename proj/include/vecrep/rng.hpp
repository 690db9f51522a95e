#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace vecrep {

// SplitMix64 (Steele/Lea/Flood). Used for cheap per-realization substreams and
// for deriving independent stream seeds from (base seed, salt) pairs. O(1)
// construction is what makes one-substream-per-task affordable.
struct SplitMix64 {
  using result_type = std::uint64_t;
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}

  std::uint64_t operator()() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~0ULL; }
};

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 33;
  z *= 0xff51afd7ed558ccdULL;
  z ^= z >> 33;
  z *= 0xc4ceb9fe1a85ec53ULL;
  z ^= z >> 33;
  return z;
}

// Deterministic seed derivation: independent-looking streams from a base seed
// and a salt (stream tag, realization index, axis value bits, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  return mix64(base ^ mix64(salt + 0x9e3779b97f4a7c15ULL));
}

// All draw helpers are hand-rolled on top of raw 64-bit generator output so
// results are identical across standard libraries and platforms.

template <class G>
double runif01(G& g) {  // [0, 1), 53-bit mantissa
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

template <class G>
double runif(G& g, double a, double b) {
  return a + (b - a) * runif01(g);
}

template <class G>
double rexp(G& g, double rate) {
  if (rate <= 0) throw std::domain_error("rexp: rate must be positive");
  return -std::log1p(-runif01(g)) / rate;
}

// Knuth's product method, chunked so that large means do not underflow the
// running product (exp(-mean) underflows past ~700).
template <class G>
int rpois(G& g, double mean) {
  if (mean < 0) throw std::domain_error("rpois: mean must be non-negative");
  int n = 0;
  while (mean > 400.0) {
    double p = std::exp(-400.0);
    double prod = runif01(g);
    while (prod > p) {
      ++n;
      prod *= runif01(g);
    }
    mean -= 400.0;
  }
  double p = std::exp(-mean);
  double prod = runif01(g);
  while (prod > p) {
    ++n;
    prod *= runif01(g);
  }
  return n;
}

// Fisher-Yates prefix shuffle: after the call, v[0..k-1] is a uniform ordered
// sample without replacement. Consuming exactly k draws makes the first
// min(K, n) picks nest across different K under a shared stream (the common
// random numbers trick used by the replication sweeps).
template <class G>
void partial_shuffle(std::vector<int>& v, std::size_t k, G& g) {
  const std::size_t n = v.size();
  if (k > n) k = n;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(runif01(g) * static_cast<double>(n - i));
    if (j >= n) j = n - 1;  // guard the degenerate runif01 == 1-ulp edge
    std::swap(v[i], v[j]);
  }
}

}  // namespace vecrep
