// ============================================================================
//  coalsis/logspace.hpp
//
//  Log-space accumulation utilities.  Importance weights are products of
//  thousands of one-step cost factors and underflow double precision long
//  before the interesting sample sizes; all weight bookkeeping therefore
//  lives in natural-log space, and sums of weights use the max-shift
//  (log-sum-exp) trick.
// ============================================================================
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace coalsis {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) without leaving log space.
inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

// log(sum exp(x_i)) with a single max shift (more accurate than folding
// log_add and robust to empty / all -inf inputs).
inline double log_sum_exp(const std::vector<double>& xs) {
  double hi = kLogZero;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kLogZero) return kLogZero;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

// Mean of exp(x_i) reported in log space: log( (1/n) sum exp(x_i) ).
inline double log_mean_exp(const std::vector<double>& xs) {
  if (xs.empty()) return kLogZero;
  return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

// Effective sample size (sum w)^2 / sum w^2 for log-space weights.
// Equal weights give exactly n (the shift makes every term exp(0) = 1).
inline double effective_sample_size(const std::vector<double>& log_w) {
  double hi = kLogZero;
  for (double x : log_w) hi = std::max(hi, x);
  if (hi == kLogZero) return 0.0;
  double s1 = 0.0, s2 = 0.0;
  for (double x : log_w) {
    double e = std::exp(x - hi);
    s1 += e;
    s2 += e * e;
  }
  return (s1 * s1) / s2;
}

// Sample variance (unbiased, n-1 denominator) of exp(x_i - shift) values,
// where shift is chosen internally; used for weight-variance diagnostics of
// *normalized* quantities, so callers pass logs of already-scaled values.
inline double variance_of_exp(const std::vector<double>& xs) {
  size_t n = xs.size();
  if (n < 2) return 0.0;
  double hi = kLogZero;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kLogZero) return 0.0;
  double mean = 0.0;
  std::vector<double> vals(n);
  for (size_t i = 0; i < n; ++i) {
    vals[i] = std::exp(xs[i] - hi);
    mean += vals[i];
  }
  mean /= n;
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  double scale = std::exp(hi);
  return ss / (n - 1) * scale * scale;
}

}  // namespace coalsis
