#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "duet/common.hpp"

namespace duet {

// Deterministic RNG. Normal variates use an explicit Box-Muller transform
// instead of std::normal_distribution, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : seed_(seed), gen_(seed ^ 0x9e3779b97f4a7c15ull) {}

  uint64_t u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() {
    return (u64() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  ArrayX normal_array(int n) {
    ArrayX out(n);
    for (int i = 0; i < n; ++i) out[i] = normal();
    return out;
  }

  ArrayX uniform_array(int n) {
    ArrayX out(n);
    for (int i = 0; i < n; ++i) out[i] = uniform();
    return out;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream; unaffected by draws made on the parent.
  Rng child(uint64_t stream) const {
    uint64_t s = seed_ + stream * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull;
    s ^= s >> 30;
    s *= 0xbf58476d1ce4e5b9ull;
    s ^= s >> 27;
    return Rng(s);
  }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace duet
