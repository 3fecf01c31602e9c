#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bitvec.hpp"

namespace forrelab {

// z for a central 95% normal interval.
constexpr double kZ95 = 1.959963984540054;

struct BinomialEstimate {
  uint64_t successes = 0;
  uint64_t trials = 0;
  double estimate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// Wilson score interval at 95%.
inline BinomialEstimate wilson_estimate(uint64_t successes, uint64_t trials) {
  require(trials > 0, "wilson_estimate: trials must be positive");
  require(successes <= trials, "wilson_estimate: successes > trials");
  BinomialEstimate e;
  e.successes = successes;
  e.trials = trials;
  double n = double(trials), p = double(successes) / n, z = kZ95, z2 = z * z;
  e.estimate = p;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2 * n)) / denom;
  double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom;
  e.ci_lo = center - half;
  e.ci_hi = center + half;
  if (e.ci_lo < 0) e.ci_lo = 0;
  if (e.ci_hi > 1) e.ci_hi = 1;
  return e;
}

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  uint64_t n = 0;
};

inline MeanEstimate mean_estimate(const std::vector<double>& xs) {
  require(!xs.empty(), "mean_estimate: no samples");
  MeanEstimate e;
  e.n = xs.size();
  double s = 0;
  for (double x : xs) s += x;
  e.mean = s / double(xs.size());
  double v = 0;
  for (double x : xs) v += (x - e.mean) * (x - e.mean);
  v = xs.size() > 1 ? v / double(xs.size() - 1) : 0.0;
  e.std_error = std::sqrt(v / double(xs.size()));
  e.ci_lo = e.mean - kZ95 * e.std_error;
  e.ci_hi = e.mean + kZ95 * e.std_error;
  return e;
}

}  // namespace forrelab
