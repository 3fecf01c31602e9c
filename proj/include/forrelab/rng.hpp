#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "bitvec.hpp"

namespace forrelab {

// splitmix64 finalizer; used to whiten seeds and to derive child seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic seed derivation along a path of labels/indices. Children with
// different paths are independent for all practical purposes.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path) {
  uint64_t s = mix64(base ^ 0x6a09e667f3bcc908ULL);
  for (uint64_t p : path) s = mix64(s ^ mix64(p + 0x9e3779b97f4a7c15ULL));
  return s;
}

// mt19937_64 with hand-rolled distributions. The engine's output sequence is
// pinned by the standard, and none of the std:: distributions are, so every
// draw here is bit-reproducible across compilers and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(mix64(seed)), spare_valid_(false) {}

  uint64_t next_u64() { return gen_(); }

  bool bit() { return next_u64() >> 63; }

  // Unbiased integer in [0, n) via rejection.
  uint64_t below(uint64_t n) {
    require(n > 0, "Rng::below: n must be positive");
    if ((n & (n - 1)) == 0) return next_u64() & (n - 1);
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do { x = next_u64(); } while (x >= limit);
    return x % n;
  }

  // Uniform in [0,1) with 53 bits of precision.
  double real01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (polar-free form, cached spare).
  double normal() {
    if (spare_valid_) {
      spare_valid_ = false;
      return spare_;
    }
    double u1, u2;
    do { u1 = real01(); } while (u1 == 0.0);
    u2 = real01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    spare_valid_ = true;
    return r * std::cos(a);
  }

  BitVec bits(size_t n) {
    BitVec v(n);
    for (size_t i = 0; i < n; ++i) v.set(i, bit());
    return v;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool spare_valid_;
};

}  // namespace forrelab
