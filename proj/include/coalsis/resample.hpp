// ============================================================================
//  coalsis/resample.hpp
//
//  Systematic (low-variance) resampling.  Given unnormalized masses w_i with
//  total W and a target offspring count N, one uniform u in [0,1) places the
//  grid points (k + u) W / N, k = 0..N-1, and offspring counts are the number
//  of grid points falling in each mass interval.  Consequences used by the
//  engine and pinned by tests:
//
//    * counts sum to exactly N;
//    * floor(N w_i / W) <= count_i <= ceil(N w_i / W)   (bracketing);
//    * E_u[count_i] = N w_i / W                          (unbiasedness).
// ============================================================================
#pragma once

#include <cstdint>
#include <vector>

#include "coalsis/common.hpp"

namespace coalsis {

// Offspring counts for one systematic draw with offset u in [0,1).
inline std::vector<int64_t> systematic_counts(const std::vector<double>& mass, int64_t target,
                                              double u) {
  check(target >= 1, "systematic_counts: target must be positive");
  check(u >= 0.0 && u < 1.0, "systematic_counts: offset outside [0,1)");
  double total = 0.0;
  for (double m : mass) {
    check(m >= 0.0, "systematic_counts: negative mass");
    total += m;
  }
  check(total > 0.0, "systematic_counts: all masses are zero");

  std::vector<int64_t> counts(mass.size(), 0);
  const double stride = total / static_cast<double>(target);
  size_t bin = 0;
  double cumulative = mass[0];
  for (int64_t k = 0; k < target; ++k) {
    double pos = (static_cast<double>(k) + u) * stride;
    while (pos >= cumulative && bin + 1 < mass.size()) cumulative += mass[++bin];
    counts[bin] += 1;
  }
  return counts;
}

}  // namespace coalsis
