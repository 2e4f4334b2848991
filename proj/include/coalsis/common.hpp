// ============================================================================
//  coalsis/common.hpp
//
//  Shared basics for the coalescent sequential importance sampling library:
//  the library-wide error type, invariant-check helpers, and a few numeric
//  utilities used across modules.
// ============================================================================
#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace coalsis {

// ----------------------------------------------------------------------------
//  Errors
// ----------------------------------------------------------------------------

// All recoverable failures (bad inputs, contract violations, file problems)
// surface as CoalsisError with a human-readable message naming the offending
// object.  Internal logic errors use check() which also throws, so that tests
// can exercise error paths without aborting the process.
class CoalsisError : public std::runtime_error {
 public:
  explicit CoalsisError(const std::string& what) : std::runtime_error(what) {}
};

// printf-style message formatting; kept tiny on purpose (no external deps).
inline std::string format_msg(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  char buf[1024];
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return std::string(buf);
}

[[noreturn]] inline void raise(const std::string& msg) { throw CoalsisError(msg); }

// Invariant check that throws (never compiled out): used for preconditions
// whose violation must be reported to callers, not assert()-aborted.
inline void check(bool cond, const std::string& msg) {
  if (!cond) raise(msg);
}

// ----------------------------------------------------------------------------
//  Small numeric helpers
// ----------------------------------------------------------------------------

// Harmonic number H_m = sum_{k=1}^m 1/k, summed smallest-first for accuracy.
inline double harmonic_number(int m) {
  double h = 0.0;
  for (int k = m; k >= 1; --k) h += 1.0 / k;
  return h;
}

// Watterson's moment estimator of the mutation rate from r segregating sites
// in a sample of size n:  theta_hat = r / H_{n-1}.
inline double watterson_estimate(int segregating_sites, int sample_size) {
  check(sample_size >= 2, "watterson_estimate: sample size must be >= 2");
  check(segregating_sites >= 0, "watterson_estimate: negative site count");
  return segregating_sites / harmonic_number(sample_size - 1);
}

// Relative difference |a-b| / max(|a|,|b|,floor); floor guards the 0/0 case.
inline double rel_diff(double a, double b, double floor_ = 1e-300) {
  double denom = std::max({std::fabs(a), std::fabs(b), floor_});
  return std::fabs(a - b) / denom;
}

}  // namespace coalsis
