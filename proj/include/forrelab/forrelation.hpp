#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rng.hpp"
#include "truth_table.hpp"

namespace forrelab {

// How an instance was drawn. Encoded oracle blocks carry this tag so tests can
// check pattern/provenance agreement; it is never visible through oracle reads.
enum class Provenance : uint8_t {
  kUniform = 0,
  kGaussianForrelated = 1,
  kExactForrelated = 2,
};

// A pair (f, g) of ell-bit Boolean functions. Serialized form is f, then g,
// then one provenance byte; total payload L = 2^{ell+1} table bits.
struct ForrelationInstance {
  TruthTable f;
  TruthTable g;
  Provenance provenance = Provenance::kUniform;

  int ell() const { return f.ell(); }
  size_t table_bits() const { return f.domain_size() + g.domain_size(); }

  // Concatenated table bit i: f for i < 2^ell, g above.
  bool table_bit(size_t i) const {
    size_t half = f.domain_size();
    return i < half ? f.get(i) : g.get(i - half);
  }

  void serialize(std::vector<uint8_t>& out) const {
    f.serialize(out);
    g.serialize(out);
    out.push_back(uint8_t(provenance));
  }

  static ForrelationInstance parse(const std::vector<uint8_t>& in, size_t& pos) {
    ForrelationInstance inst;
    inst.f = TruthTable::parse(in, pos);
    inst.g = TruthTable::parse(in, pos);
    require(pos < in.size(), "ForrelationInstance::parse: truncated");
    uint8_t p = in[pos++];
    require(p <= 2, "ForrelationInstance::parse: bad provenance byte");
    inst.provenance = Provenance(p);
    require(inst.f.ell() == inst.g.ell(), "ForrelationInstance::parse: ell mismatch");
    return inst;
  }

  bool operator==(const ForrelationInstance& o) const {
    return f == o.f && g == o.g && provenance == o.provenance;
  }
};

constexpr int kMaxSamplerEll = 20;

inline ForrelationInstance sample_uniform_instance(int ell, uint64_t seed) {
  require(ell >= 0 && ell <= kMaxSamplerEll, "sample_uniform_instance: ell out of range");
  Rng rng(seed);
  ForrelationInstance inst;
  inst.f = TruthTable::uniform(ell, rng);
  inst.g = TruthTable::uniform(ell, rng);
  inst.provenance = Provenance::kUniform;
  return inst;
}

// Default coupling strength 1/(24 ln L) with L = 2^{ell+1} payload bits.
inline double default_gaussian_eps(int ell) {
  double L = std::ldexp(1.0, ell + 1);
  return 1.0 / (24.0 * std::log(L));
}

// Gaussian-coupled sampler. Draw z_f ~ N(0, eps I) over R^{2^ell}, set
// z_g = H z_f with H the normalized Hadamard (so each z_g coordinate is
// N(0, eps) and Cov(z_g, z_f) = eps H), truncate every coordinate to [-1,1],
// then round coordinate z to a bit that is 1 with probability (1+z)/2.
// Marginals of every table bit are exactly uniform; the f and g tables are
// positively forrelated with strength ~ eps.
inline ForrelationInstance sample_gaussian_forrelated(int ell, double eps, uint64_t seed) {
  require(ell >= 0 && ell <= kMaxSamplerEll, "sample_gaussian_forrelated: ell out of range");
  if (eps <= 0.0) eps = default_gaussian_eps(ell);
  require(eps <= 1.0, "sample_gaussian_forrelated: eps too large");
  Rng rng(seed);
  size_t n = size_t(1) << ell;
  double sd = std::sqrt(eps);
  std::vector<double> zf(n);
  for (size_t i = 0; i < n; ++i) zf[i] = sd * rng.normal();
  std::vector<double> zg = zf;
  fwht_inplace(zg);
  double scale = std::ldexp(1.0, -ell / 2) * (ell % 2 ? 1.0 / std::sqrt(2.0) : 1.0);
  for (size_t i = 0; i < n; ++i) zg[i] *= scale;

  auto trunc = [](double z) { return z < -1.0 ? -1.0 : (z > 1.0 ? 1.0 : z); };
  ForrelationInstance inst;
  inst.f = TruthTable(ell);
  inst.g = TruthTable(ell);
  for (size_t i = 0; i < n; ++i) inst.f.set(i, rng.real01() < (1.0 + trunc(zf[i])) / 2.0);
  for (size_t i = 0; i < n; ++i) inst.g.set(i, rng.real01() < (1.0 + trunc(zg[i])) / 2.0);
  inst.provenance = Provenance::kGaussianForrelated;
  return inst;
}

// g(y) = 1 iff the y-th Walsh coefficient of (-1)^f is negative (ties to 0).
inline TruthTable exact_forrelated_partner(const TruthTable& f) {
  std::vector<int64_t> hat = walsh_spectrum(f);
  TruthTable g(f.ell());
  for (size_t y = 0; y < hat.size(); ++y) g.set(y, hat[y] < 0);
  return g;
}

// Maximally forrelated instance: uniform f, g the sign of f's spectrum. The
// forrelation value is then 2^{-3 ell / 2} * sum_y |hat(y)| deterministically.
inline ForrelationInstance sample_exact_forrelated(int ell, uint64_t seed) {
  require(ell >= 0 && ell <= kMaxSamplerEll, "sample_exact_forrelated: ell out of range");
  Rng rng(seed);
  ForrelationInstance inst;
  inst.f = TruthTable::uniform(ell, rng);
  inst.g = exact_forrelated_partner(inst.f);
  inst.provenance = Provenance::kExactForrelated;
  return inst;
}

// Phi(f,g) = 2^{-3 ell / 2} sum_{x,y} (-1)^{f(x) + x.y + g(y)}, computed with
// one fast transform and an exact integer accumulation. Always in [-1, 1].
inline double forrelation_value(const ForrelationInstance& inst) {
  require(inst.f.ell() == inst.g.ell(), "forrelation_value: ell mismatch");
  std::vector<int64_t> hat = walsh_spectrum(inst.f);
  int64_t acc = 0;
  for (size_t y = 0; y < hat.size(); ++y) acc += inst.g.get(y) ? -hat[y] : hat[y];
  double phi = double(acc) * std::ldexp(1.0, -3 * inst.ell() / 2);
  if (inst.ell() % 2) phi /= std::sqrt(2.0);
  // |sum_y ±hat(y)| <= 2^{3 ell / 2} by Cauchy-Schwarz; only rounding can
  // nudge past the bound, anything more is a bug.
  if (std::abs(phi) > 1.0 + 1e-9) throw std::logic_error("forrelation_value: |Phi| > 1");
  if (phi > 1.0) phi = 1.0;
  if (phi < -1.0) phi = -1.0;
  return phi;
}

}  // namespace forrelab
