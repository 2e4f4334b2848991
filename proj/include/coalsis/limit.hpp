// ============================================================================
//  coalsis/limit.hpp
//
//  Large-sample limit of cost-weighted coalescent block-counting processes.
//
//  After scaling a size-n sample configuration by 1/n and time by n, the
//  triple (cost, state, mutation counts) converges to a limit (C, Y, M):
//
//   * Y(s) = y0 (1 - s)                        -- deterministic shrinkage;
//   * M_ij are independent inhomogeneous Poisson processes with intensity
//         lambda_ij(s) = theta P_ij y0_i / (1 - s),
//     hence cumulative intensity
//         Lambda_ij(t) = theta P_ij y0_i ln(1/(1 - t));
//   * C(s) = exp{ sum_i y0_i Int_0^s a_i(y0(1-u)) du }
//            * prod_{ij} prod_k b_ij(y0(1 - T_ij^k)),
//     where T_ij^k is the k-th jump time of M_ij.
//
//  The coefficient fields (a, b) come from the one-step cost expansion of a
//  backward proposal:
//      cost(coalescence of type j | y) = 1 + a_j(y)/n + o(1/n),
//      cost(mutation i -> j | y)       = b_ij(y) + o(1),   with b_ij >= 1.
//
//  For both classic proposals the drift field satisfies
//      <y, a(y)> = -(d - 1)        for every positive y,
//  which is exactly the sufficient condition for the truncated importance
//  weights to converge to 1; it forces the closed form
//      C(t) = (1 - t)^{d-1}        when b == 1.
//  The condition checker below measures the residual of this identity for a
//  user-supplied drift field.
// ============================================================================
#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/linalg.hpp"
#include "coalsis/quadrature.hpp"
#include "coalsis/rng.hpp"

namespace coalsis {

// --- coefficient fields ------------------------------------------------------

// Drift coefficient a_j(y): second-order coalescence-cost coefficient.
using DriftField = std::function<double(int j, const std::vector<double>& y)>;
// Jump coefficient b_ij(y): first-order mutation-cost coefficient (>= 1).
using JumpField = std::function<double(int i, int j, const std::vector<double>& y)>;

struct CostCoefficients {
  DriftField a;
  JumpField b;
};

inline double l1_norm(const std::vector<double>& y) {
  double s = 0.0;
  for (double v : y) s += v;
  return s;
}

inline JumpField unit_jump_field() {
  return [](int, int, const std::vector<double>&) { return 1.0; };
}

// Proportional-to-forward proposal: every one-step cost expands as
// 1 - (d-1)/(n ||y||) + o(1/n), so a_j(y) = -(d-1)/||y|| for all j and b == 1.
inline CostCoefficients gt_cost_coefficients(int d) {
  check(d >= 1, "gt_cost_coefficients: need d >= 1");
  DriftField a = [d](int, const std::vector<double>& y) {
    return -(d - 1.0) / l1_norm(y);
  };
  return {std::move(a), unit_jump_field()};
}

// Sample-frequency proposal: coalescence costs expand with
//   a_j(y) = (1 - theta)/||y|| - (1/y_j) (1 - sum_i (y_i/||y||) theta P_ij),
// mutation costs are 1 + o(1).  Summing y_j a_j(y) telescopes to 1 - d for
// every positive y because P is row-stochastic, i.e. the same drift identity
// as above holds exactly.
inline CostCoefficients sd_cost_coefficients(double theta, Matrix p) {
  check(theta > 0.0, "sd_cost_coefficients: theta must be positive");
  check(p.rows() >= 1 && p.cols() == p.rows(), "sd_cost_coefficients: P must be square");
  DriftField a = [theta, p = std::move(p)](int j, const std::vector<double>& y) {
    const int d = p.rows();
    check(j >= 0 && j < d && static_cast<int>(y.size()) == d,
          "sd_cost_coefficients: dimension mismatch");
    const double norm = l1_norm(y);
    double inflow = 0.0;
    for (int i = 0; i < d; ++i) inflow += y[i] / norm * theta * p(i, j);
    return (1.0 - theta) / norm - (1.0 - inflow) / y[j];
  };
  return {std::move(a), unit_jump_field()};
}

// a == 0, b == 1: the cost exponent is empty and C == 1 on every path.
inline CostCoefficients zero_drift_coefficients() {
  return {[](int, const std::vector<double>&) { return 0.0; }, unit_jump_field()};
}

// --- configuration and paths -------------------------------------------------

struct LimitConfig {
  std::vector<double> y0;  // strictly positive, ||y0||_1 == 1
  double theta = 0.0;      // > 0
  Matrix P;                // d x d, rows sum to 1, entries >= 0
  double horizon = 0.0;    // t in [0, 1); intensities diverge at t = 1
  CostCoefficients coefficients;

  int d() const { return static_cast<int>(y0.size()); }

  void validate() const {
    check(!y0.empty(), "LimitConfig: y0 is empty");
    for (size_t i = 0; i < y0.size(); ++i)
      check(y0[i] > 0.0, format_msg("LimitConfig: y0[%zu] must be strictly positive", i));
    check(std::fabs(l1_norm(y0) - 1.0) <= 1e-12,
          format_msg("LimitConfig: ||y0||_1 = %.17g, must equal 1", l1_norm(y0)));
    check(theta > 0.0, "LimitConfig: theta must be positive");
    check(P.rows() == d() && P.cols() == d(),
          "LimitConfig: P dimensions must match the length of y0");
    for (int i = 0; i < d(); ++i) {
      double row = 0.0;
      for (int j = 0; j < d(); ++j) {
        check(P(i, j) >= 0.0, format_msg("LimitConfig: negative entry P(%d,%d)", i, j));
        row += P(i, j);
      }
      check(std::fabs(row - 1.0) <= 1e-12,
            format_msg("LimitConfig: row %d of P sums to %.17g, not 1", i, row));
    }
    check(horizon >= 0.0 && horizon < 1.0,
          format_msg("LimitConfig: horizon %.17g outside [0, 1)", horizon));
  }
};

// One realization of the mutation-counting matrix M: jump times per ordered
// pair (i, j), each list strictly increasing within [0, horizon).
struct LimitPath {
  std::vector<double> y0;
  double horizon = 0.0;
  int d = 0;
  std::vector<std::vector<double>> jumps;  // index i * d + j

  const std::vector<double>& jumps_of(int i, int j) const {
    check(i >= 0 && i < d && j >= 0 && j < d, "LimitPath: pair index out of range");
    return jumps[static_cast<size_t>(i) * d + j];
  }
  // M_ij(s): number of jumps of pair (i, j) in [0, s].
  int count_at(int i, int j, double s) const {
    const auto& t = jumps_of(i, j);
    int c = 0;
    while (c < static_cast<int>(t.size()) && t[c] <= s) ++c;
    return c;
  }
  int total_jumps() const {
    int c = 0;
    for (const auto& t : jumps) c += static_cast<int>(t.size());
    return c;
  }
};

// --- operations ----------------------------------------------------------------

// Deterministic limit state: Y(t) = y0 (1 - t), so ||Y(t)|| = 1 - t.
inline std::vector<double> limit_Y(double t, const std::vector<double>& y0) {
  check(t >= 0.0 && t < 1.0, format_msg("limit_Y: t = %.17g outside [0, 1)", t));
  std::vector<double> y(y0.size());
  for (size_t i = 0; i < y0.size(); ++i) y[i] = y0[i] * (1.0 - t);
  return y;
}

// Samples the jump times of every pair counter M_ij up to the horizon by
// inverting the cumulative intensity: unit-rate Poisson arrival xi maps to
//   T = Lambda^{-1}(xi) = 1 - exp(-xi / c),   c = theta P_ij y0_i,
// which is exact (no thinning).  Pairs are independent; a pair with c = 0
// (P_ij = 0) never jumps.
inline LimitPath simulate_M(const LimitConfig& config, RngStream& rng) {
  config.validate();
  const int d = config.d();
  LimitPath path;
  path.y0 = config.y0;
  path.horizon = config.horizon;
  path.d = d;
  path.jumps.assign(static_cast<size_t>(d) * d, {});
  const double log_stretch = std::log(1.0 / (1.0 - config.horizon));
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const double c = config.theta * config.P(i, j) * config.y0[i];
      if (c <= 0.0) continue;
      auto& t = path.jumps[static_cast<size_t>(i) * d + j];
      const double budget = c * log_stretch;  // Lambda_ij(horizon)
      double xi = rng.next_exponential();
      while (xi < budget) {
        t.push_back(1.0 - std::exp(-xi / c));
        xi += rng.next_exponential();
      }
    }
  }
  return path;
}

// Evaluates the limit cost C(t) on a realized path:
//   drift factor  exp{ Int_0^t sum_i y0_i a_i(y0(1-u)) du }   (adaptive
//   quadrature, absolute tolerance 1e-10), times the product of b over all
//   jumps at or before t.  Enforces the standing assumption b >= 1.
inline double limit_cost(const LimitPath& path, const CostCoefficients& coefficients,
                         double t, double quad_tol = 1e-10) {
  check(t >= 0.0 && t < 1.0, format_msg("limit_cost: t = %.17g outside [0, 1)", t));
  check(t <= path.horizon + 1e-15,
        format_msg("limit_cost: t = %.17g beyond the simulated horizon %.17g", t,
                   path.horizon));
  check(static_cast<bool>(coefficients.a) && static_cast<bool>(coefficients.b),
        "limit_cost: coefficient fields are not set");
  const std::vector<double>& y0 = path.y0;
  const int d = path.d;
  auto integrand = [&](double u) {
    std::vector<double> y = limit_Y(u, y0);
    double g = 0.0;
    for (int i = 0; i < d; ++i) g += y0[i] * coefficients.a(i, y);
    return g;
  };
  double drift_exponent = (t > 0.0) ? integrate(integrand, 0.0, t, quad_tol) : 0.0;
  double jump_product = 1.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      for (double tk : path.jumps_of(i, j)) {
        if (tk > t) break;
        double b = coefficients.b(i, j, limit_Y(tk, y0));
        check(b >= 1.0 - 1e-12,
              format_msg("limit_cost: b(%d,%d) = %.17g at jump time %.17g violates the "
                         "assumption b >= 1",
                         i, j, b, tk));
        jump_product *= b;
      }
    }
  }
  return std::exp(drift_exponent) * jump_product;
}

// --- proposal-design condition ---------------------------------------------

// Sufficient condition on a drift field for truncated importance weights to
// converge to 1:   -<Y(u), a(Y(u))> = d - 1   along Y(u) = y0 (1 - u).
struct ConditionReport {
  bool pass = false;
  double max_residual = 0.0;
  std::vector<double> residuals;  // one per grid point
};

inline ConditionReport check_proposal_condition(const DriftField& a_star, int d,
                                                const std::vector<double>& y0,
                                                const std::vector<double>& grid,
                                                double tolerance = 1e-8) {
  check(static_cast<bool>(a_star), "check_proposal_condition: drift field is not set");
  check(d == static_cast<int>(y0.size()),
        "check_proposal_condition: d must match the length of y0");
  check(!grid.empty(), "check_proposal_condition: empty grid");
  ConditionReport report;
  report.residuals.reserve(grid.size());
  for (double u : grid) {
    std::vector<double> y = limit_Y(u, y0);
    double dot = 0.0;
    for (int j = 0; j < d; ++j) dot += y[j] * a_star(j, y);
    double residual = std::fabs(dot + (d - 1.0));
    report.residuals.push_back(residual);
    report.max_residual = std::max(report.max_residual, residual);
  }
  report.pass = report.max_residual < tolerance;
  return report;
}

// Uniform grid of m points on [0, t] (both endpoints included for m >= 2).
inline std::vector<double> uniform_grid(double t, int m) {
  check(m >= 1 && t >= 0.0 && t < 1.0, "uniform_grid: need m >= 1 and t in [0, 1)");
  std::vector<double> g(m);
  for (int k = 0; k < m; ++k) g[k] = (m == 1) ? t : t * k / (m - 1.0);
  return g;
}

// --- theoretical limits -------------------------------------------------------

// Limits of the truncated-run factors as the sample size grows:
//   * the normalized weight of either classic proposal tends to 1;
//   * the cost factor tends to (1-t)^{d-1};
//   * the probability-ratio factor tends to (1-t)^{1-d}.
// The last two multiply to 1, which is exactly why the weights degenerate.
enum class LimitQuantity { GtWeight, SdWeight, CostFactor, ProbabilityRatioFactor };

inline double predicted_weight_limit(LimitQuantity kind, double t, int d) {
  check(t >= 0.0 && t < 1.0, format_msg("predicted_weight_limit: t = %.17g outside [0, 1)", t));
  check(d >= 1, "predicted_weight_limit: need d >= 1");
  switch (kind) {
    case LimitQuantity::GtWeight:
    case LimitQuantity::SdWeight:
      return 1.0;
    case LimitQuantity::CostFactor:
      return std::pow(1.0 - t, d - 1.0);
    case LimitQuantity::ProbabilityRatioFactor:
      return std::pow(1.0 - t, 1.0 - d);
  }
  raise("predicted_weight_limit: unknown quantity");
}

// --- CSV export ----------------------------------------------------------------

// One row per jump: pair indices (1-based), jump ordinal, jump time.
inline void write_limit_jumps_csv(std::ostream& os, const LimitPath& path) {
  os << "pair_i,pair_j,k,jump_time\n";
  for (int i = 0; i < path.d; ++i)
    for (int j = 0; j < path.d; ++j) {
      const auto& t = path.jumps_of(i, j);
      for (size_t k = 0; k < t.size(); ++k)
        os << (i + 1) << ',' << (j + 1) << ',' << (k + 1) << ','
           << format_msg("%.17g", t[k]) << '\n';
    }
}

// Grid evaluation of the cost process and the deterministic state: columns
// s, C(s), then Y_1(s)..Y_d(s).  grid_points panels, so grid_points+1 rows.
inline void write_limit_grid_csv(std::ostream& os, const LimitPath& path,
                                 const CostCoefficients& coefficients, int grid_points) {
  check(grid_points >= 1, "write_limit_grid_csv: need at least one grid panel");
  os << "s,cost";
  for (int i = 1; i <= path.d; ++i) os << ",y" << i;
  os << '\n';
  for (int k = 0; k <= grid_points; ++k) {
    double s = path.horizon * k / grid_points;
    double c = limit_cost(path, coefficients, s);
    os << format_msg("%.17g,%.17g", s, c);
    std::vector<double> y = limit_Y(s, path.y0);
    for (double v : y) os << format_msg(",%.17g", v);
    os << '\n';
  }
}

}  // namespace coalsis
