// ============================================================================
//  coalsis/schedule.hpp
//
//  Replicate schedules for full backward runs.  A run passes through lineage
//  levels n, n-1, ..., 1; the draw budget of a schedule is counted in
//  coalescence draws: one per replicate per level passed.
//
//  The boosted schedule concentrates replicates below the threshold
//
//      zeta(n) = floor( n ^ ( chi ^ ( 1 / (theta ln n) ) ) ),    0 < chi < 1,
//
//  where the per-level weight variance accumulates fastest; above zeta it
//  runs cheaply with gamma_small replicates, then resamples up to gamma_big.
//
//  Schedules (gamma_small = g, gamma_big = G):
//    FullBudget     G replicates everywhere            draws = G (n-1)
//    Boosted        g above zeta, G from zeta on       draws = g (n - zeta) + G (zeta - 1)
//    SmallBudget    g replicates everywhere            draws = g (n-1)
//    UniformBudget  the Boosted total spread evenly:   draws = floor(N*) (n-1),
//                   N* = (G zeta + g (n - zeta)) / (n-1)
//
//  As n grows, zeta / n -> chi^(1/theta), so the Boosted/Uniform totals
//  approach n (G chi^(1/theta) + g) -- only logarithmically, through a factor
//  exp( (ln chi)^2 / (2 theta^2 ln n) ); tests pin the decreasing trend of
//  the ratio rather than a small-n closeness that does not hold.
// ============================================================================
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "coalsis/common.hpp"

namespace coalsis {

// Lineage threshold zeta(n, theta, chi); clamped into [2, n].
inline int64_t zeta_threshold(int64_t n, double theta, double chi) {
  check(n >= 2, "zeta_threshold: need n >= 2");
  check(theta > 0.0, "zeta_threshold: theta must be positive");
  check(chi > 0.0 && chi < 1.0, "zeta_threshold: chi must lie in (0,1)");
  const double ln_n = std::log(static_cast<double>(n));
  const double exponent = std::pow(chi, 1.0 / (theta * ln_n));
  const auto zeta = static_cast<int64_t>(std::floor(std::pow(static_cast<double>(n), exponent)));
  return std::min(n, std::max<int64_t>(2, zeta));
}

enum class ScheduleKind { FullBudget, Boosted, SmallBudget, UniformBudget };

inline const char* schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::FullBudget: return "full";
    case ScheduleKind::Boosted: return "boosted";
    case ScheduleKind::SmallBudget: return "small";
    case ScheduleKind::UniformBudget: return "uniform";
  }
  return "?";
}

inline ScheduleKind parse_schedule(const std::string& s) {
  if (s == "full") return ScheduleKind::FullBudget;
  if (s == "boosted") return ScheduleKind::Boosted;
  if (s == "small") return ScheduleKind::SmallBudget;
  if (s == "uniform") return ScheduleKind::UniformBudget;
  raise(format_msg("unknown schedule '%s' (expected full | boosted | small | uniform)", s.c_str()));
}

struct SchedulePlan {
  ScheduleKind kind;
  int64_t n;                    // starting lineage count
  int64_t initial_replicates;   // replicates at level n
  int64_t boost_level = 0;      // Boosted: resample when this many lineages remain
  int64_t boost_target = 0;     // Boosted: replicate count after the resample

  // Closed-form coalescence-draw total; full runs of the engine match it
  // exactly (every replicate passes every level).
  int64_t draw_count() const {
    if (boost_level > 0)
      return initial_replicates * (n - boost_level) + boost_target * (boost_level - 1);
    return initial_replicates * (n - 1);
  }
};

inline SchedulePlan make_schedule(ScheduleKind kind, int64_t n, int64_t gamma_small,
                                  int64_t gamma_big, double theta, double chi) {
  check(gamma_small >= 1 && gamma_big >= gamma_small, "make_schedule: need 1 <= gamma_small <= gamma_big");
  SchedulePlan plan{kind, n, 0, 0, 0};
  const int64_t zeta = zeta_threshold(n, theta, chi);
  switch (kind) {
    case ScheduleKind::FullBudget:
      plan.initial_replicates = gamma_big;
      break;
    case ScheduleKind::SmallBudget:
      plan.initial_replicates = gamma_small;
      break;
    case ScheduleKind::Boosted:
      plan.initial_replicates = gamma_small;
      plan.boost_level = zeta;
      plan.boost_target = gamma_big;
      break;
    case ScheduleKind::UniformBudget: {
      const int64_t total = gamma_big * zeta + gamma_small * (n - zeta);
      plan.initial_replicates = std::max<int64_t>(1, total / (n - 1));
      break;
    }
  }
  return plan;
}

}  // namespace coalsis
