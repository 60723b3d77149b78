// Deterministic counter-based randomness.
//
// Every stream is derived from a single 64-bit seed by hashing (seed, label)
// pairs, so substreams can be split without sharing state and regeneration is
// bit-identical on every platform.  Draws advance a splitmix64 counter.
#pragma once

#include "aruba/types.hpp"

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace aruba {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

  // Child stream addressed by label; independent of draws made so far.
  Rng split(std::uint64_t label) const {
    return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(label ^ 0xA5A5A5A5A5A5A5A5ULL)));
  }
  Rng split2(std::uint64_t a, std::uint64_t b) const { return split(a).split(b); }

  std::uint64_t next_u64() { return detail::splitmix64(seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; draws two uniforms per normal so the stream layout is fixed.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  Vec normal_vec(int d) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  // Uniform on the unit sphere (exact unit norm, hence unit second moment).
  Vec on_sphere(int d) {
    Vec v = normal_vec(d);
    double n = v.norm();
    while (n < 1e-12) {
      v = normal_vec(d);
      n = v.norm();
    }
    return v / n;
  }

  // Fisher-Yates prefix: k distinct indices out of n, order deterministic.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(next_u64() % static_cast<std::uint64_t>(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace aruba
