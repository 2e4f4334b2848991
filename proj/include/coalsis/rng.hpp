// ============================================================================
//  coalsis/rng.hpp
//
//  Counter-derived random number streams for reproducible parallel
//  simulation.  Every replicate owns an independent stream keyed by
//  (master seed, replicate id, generation); the stream's draws depend only
//  on that key, never on which worker thread runs the replicate or in which
//  order replicates execute.  This is what makes experiment output
//  byte-identical across worker counts.
//
//  The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit counter
//  passed through an avalanching finalizer.  Statistical quality is ample
//  for Monte Carlo use and the state is a single uint64_t.
// ============================================================================
#pragma once

#include <cmath>
#include <cstdint>

#include "coalsis/common.hpp"

namespace coalsis {

// Murmur3/SplitMix-style 64-bit finalizer (bijective avalanche).
inline uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

class RngStream {
 public:
  // Keyed construction: decorrelates (master, replicate, generation) triples
  // by chained mixing before the stream starts.  `generation` advances at
  // resampling barriers so offspring sharing a parent state still diverge.
  RngStream(uint64_t master_seed, uint64_t replicate_id, uint64_t generation = 0)
      : state_(mix64(mix64(master_seed + 0x9e3779b97f4a7c15ULL * (replicate_id + 1)) +
                     0xd1b54a32d192ed03ULL * (generation + 1))) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in (0, 1]: safe as an argument to log().
  double next_positive_double() { return ((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Exponential(1) variate.
  double next_exponential() { return -std::log(next_positive_double()); }

  // Index into an unnormalized nonnegative mass vector (linear scan; move
  // lists here are short).  total must equal the sum of masses[0..k).
  template <class Vec>
  int next_index_by_mass(const Vec& masses, double total) {
    check(total > 0.0, "RngStream: sampling from an all-zero mass vector");
    double u = next_double() * total;
    double acc = 0.0;
    int last = -1;
    for (int i = 0; i < static_cast<int>(masses.size()); ++i) {
      if (masses[i] <= 0.0) continue;
      acc += masses[i];
      last = i;
      if (u < acc) return i;
    }
    // Rounding slack: fall back to the last positive entry.
    check(last >= 0, "RngStream: no positive mass found");
    return last;
  }

 private:
  uint64_t state_;
};

}  // namespace coalsis
