// ============================================================================
//  coalsis/transitions.hpp
//
//  Coalescent transition structure for the finite-alleles model:
//
//   * the forward (root-to-leaves) one-step law, used for data synthesis;
//   * the per-step path numerators q~ that factorize the sampling
//     probability p(n) over backward paths -- these are the numerators of
//     every importance weight in the library;
//   * the exact backward kernel and one-step conditionals under
//     parent-independent mutation (PIM), the one tractable special case,
//     including its closed-form sampling probability.
//
//  Conventions.  s = ||n||.  A backward mutation move replaces one lineage
//  of type `child` j by its forward parent of type i; the associated
//  numerator is measured in the *upper* (larger-index, closer to leaves)
//  configuration n:
//
//      q~(coalescence of j)   = (n_j - 1) / (s - 1 + theta)
//      q~(mutation i -> j)    = [theta / (s - 1 + theta)] P_ij (n_i + 1 - d_ij) / s
//
//  with d_ij the Kronecker delta.  Multiplying these factors along any
//  backward path from n to a single lineage of type t, times the stationary
//  mass of t, telescopes to exactly p(n); the exact recursion solver in
//  exact.hpp is an independent check of this factorization.
// ============================================================================
#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/mutation_model.hpp"
#include "coalsis/rng.hpp"
#include "coalsis/state.hpp"

namespace coalsis {

// ----------------------------------------------------------------------------
//  Forward one-step law (data synthesis)
// ----------------------------------------------------------------------------

// A forward event from configuration n: either some lineage of type j
// branches (n -> n + e_j), or a lineage of type i mutates to type j
// (n -> n - e_i + e_j).
struct ForwardMove {
  enum class Kind : uint8_t { Branch, Mutation } kind;
  type_id from;
  type_id to;  // Branch: to == from
};

// Full forward distribution from n (intended for small models / tests).
// For s >= 2:  branch j with prob [(s-1)/(s-1+theta)] n_j/s,
//              mutate i->j with prob [theta/(s-1+theta)] (n_i/s) P_ij.
// At s = 1 the branching factor (s-1) degenerates; the chain's renewal
// structure gives branch prob 1/(1+theta) and mutation prob theta/(1+theta)
// there (verified against the exact recursion in tests).
inline std::vector<std::pair<ForwardMove, double>> forward_distribution(
    const MutationModel& model, const TypeCounts& n) {
  check(n.size() >= 1, "forward_distribution: empty configuration");
  const double s = static_cast<double>(n.size());
  const double theta = model.theta();
  const double denom = (n.size() == 1) ? (1.0 + theta) : (s - 1.0 + theta);
  const double branch_total = (n.size() == 1) ? 1.0 / denom : (s - 1.0) / denom;
  const double mutate_total = theta / denom;

  std::vector<std::pair<ForwardMove, double>> out;
  std::vector<std::pair<type_id, double>> row;
  for (auto [t, c] : n.entries()) {
    double frac = c / s;
    if (branch_total > 0.0)
      out.push_back({{ForwardMove::Kind::Branch, t, t}, branch_total * frac});
    model.transitions_from(t, row);
    for (auto [to, pij] : row)
      out.push_back({{ForwardMove::Kind::Mutation, t, to}, mutate_total * frac * pij});
  }
  return out;
}

// Simulates the forward chain from a single stationary-type ancestor and
// returns the configuration observed at each requested sample size.  The
// state "at size m" is the configuration at the moment of the branch event
// that would raise the count to m+1 (the renewal embedding under which the
// captured state has law p(.) at size m).  capture_sizes must be sorted
// ascending; the last entry is the stopping size.
inline std::vector<TypeCounts> forward_simulate(const MutationModel& model, RngStream& rng,
                                                const std::vector<int64_t>& capture_sizes) {
  check(!capture_sizes.empty(), "forward_simulate: no capture sizes");
  for (size_t i = 0; i + 1 < capture_sizes.size(); ++i)
    check(capture_sizes[i] < capture_sizes[i + 1], "forward_simulate: capture sizes not ascending");
  check(capture_sizes.front() >= 1, "forward_simulate: sizes must be >= 1");

  TypeCounts n;
  // Root type from the stationary law of P.
  if (model.kind() == MutationModel::Kind::SiteFlip) {
    n.add(static_cast<type_id>(rng.next_u64() >> (64 - model.sites())), 1);
  } else {
    const auto& pi = model.stationary();
    n.add(static_cast<type_id>(rng.next_index_by_mass(pi, 1.0)), 1);
  }

  std::vector<TypeCounts> captured;
  size_t next_capture = 0;
  const double theta = model.theta();
  std::vector<std::pair<type_id, double>> row;
  while (true) {
    const double s = static_cast<double>(n.size());
    const double denom = (n.size() == 1) ? (1.0 + theta) : (s - 1.0 + theta);
    const double branch_prob = (n.size() == 1) ? 1.0 / denom : (s - 1.0) / denom;
    const bool branch = rng.next_double() < branch_prob;

    // Pick the acting lineage uniformly (i.e. a type with prob n_t / s).
    double u = rng.next_double() * s;
    type_id acting = n.entries().back().first;
    double acc = 0.0;
    for (auto [t, c] : n.entries()) {
      acc += c;
      if (u < acc) {
        acting = t;
        break;
      }
    }

    if (branch) {
      if (n.size() == capture_sizes[next_capture]) {
        captured.push_back(n);
        ++next_capture;
        if (next_capture == capture_sizes.size()) return captured;
      }
      n.add(acting, +1);
    } else {
      model.transitions_from(acting, row);
      double total = 0.0;
      for (auto& [to, pij] : row) total += pij;
      int k = 0;
      double v = rng.next_double() * total, acc2 = 0.0;
      for (size_t r = 0; r < row.size(); ++r) {
        acc2 += row[r].second;
        if (v < acc2) {
          k = static_cast<int>(r);
          break;
        }
      }
      type_id to = row[k].first;
      if (to != acting) {
        n.add(acting, -1);
        n.add(to, +1);
      }
    }
  }
}

// Uniform subsample of m lineages without replacement (used to build nested
// benchmark data sets: the smaller sample's lineages are contained in the
// larger one's).
inline TypeCounts subsample_counts(const TypeCounts& n, int64_t m, RngStream& rng) {
  check(m >= 1 && m <= n.size(), "subsample_counts: bad subsample size");
  TypeCounts out;
  int64_t remaining_pool = n.size(), remaining_draws = m;
  for (auto [t, c] : n.entries()) {
    // Draw the type's hypergeometric share sequentially, lineage by lineage.
    for (uint32_t k = 0; k < c && remaining_draws > 0; ++k) {
      if (rng.next_double() * remaining_pool < remaining_draws) {
        out.add(t, +1);
        --remaining_draws;
      }
      --remaining_pool;
    }
    if (remaining_draws == 0) break;
    // Skip any untouched tail of this type's lineages in the pool count.
  }
  check(out.size() == m, "subsample_counts: internal accounting error");
  return out;
}

// ----------------------------------------------------------------------------
//  Path numerators (importance-weight numerators)
// ----------------------------------------------------------------------------

// log q~ for a backward move out of configuration n (the upper state).
inline double log_path_numerator(const MutationModel& model, const TypeCounts& n,
                                 const BackwardMove& mv) {
  const double s = static_cast<double>(n.size());
  const double theta = model.theta();
  check(n.size() >= 2, "log_path_numerator: configuration already at the root");
  const double denom = s - 1.0 + theta;
  if (mv.kind == BackwardMove::Kind::Coalescence) {
    const int nj = n.count_of(mv.child);
    check(nj >= 2, "log_path_numerator: coalescence of a non-duplicated type");
    return std::log((nj - 1) / denom);
  }
  const int nj = n.count_of(mv.child);
  check(nj >= 1, "log_path_numerator: mutation move on absent type");
  const double pij = model.prob(mv.parent, mv.child);
  check(pij > 0.0, "log_path_numerator: mutation move outside the support of P");
  const int ni = n.count_of(mv.parent);
  const double parent_count = ni + 1 - (mv.parent == mv.child ? 1 : 0);
  return std::log(theta / denom * pij * parent_count / s);
}

// log of the terminal factor once a single lineage remains.
inline double log_root_factor(const MutationModel& model, const TypeCounts& n) {
  check(n.size() == 1, "log_root_factor: not at the root");
  return model.log_stationary_prob(n.entries().front().first);
}

// ----------------------------------------------------------------------------
//  Parent-independent mutation: exact conditionals, kernel, closed form
// ----------------------------------------------------------------------------

// pi[i | n]: probability that an additional (n+1st) sampled lineage has type
// i given configuration n.  Closed form (n_i + theta Q_i) / (s + theta).
inline double pim_conditional(const MutationModel& model, const TypeCounts& n, type_id i) {
  check(model.is_pim(), "pim_conditional: model is not parent-independent");
  const double theta = model.theta();
  return (n.count_of(i) + theta * model.pim_q()[i]) / (static_cast<double>(n.size()) + theta);
}

// The exact backward kernel under PIM (the optimal proposal).  Masses:
//   coalescence j:   n_j (n_j - 1) / [ s (n_j - 1 + theta Q_j) ]
//   mutation i->j:   theta Q_j n_j (n_i - d_ij + theta Q_i)
//                      / [ s (s - 1 + theta) (n_j - 1 + theta Q_j) ]
// These are Def-2.2-style posterior probabilities and sum to exactly 1.
inline std::vector<std::pair<BackwardMove, double>> pim_backward_distribution(
    const MutationModel& model, const TypeCounts& n) {
  check(model.is_pim(), "pim_backward_distribution: model is not parent-independent");
  check(n.size() >= 2, "pim_backward_distribution: already at the root");
  const double s = static_cast<double>(n.size());
  const double theta = model.theta();
  const auto& q = model.pim_q();
  const int d = static_cast<int>(q.size());

  std::vector<std::pair<BackwardMove, double>> out;
  for (auto [j, cj] : n.entries()) {
    const int nj = static_cast<int>(cj);
    const double denom_j = (nj - 1) + theta * q[j];
    if (nj >= 2)
      out.push_back({BackwardMove::coalescence(j), nj * (nj - 1.0) / (s * denom_j)});
    if (q[j] <= 0.0) continue;  // P_ij = Q_j = 0: no mutation produces type j
    for (int i = 0; i < d; ++i) {
      const int ni = n.count_of(static_cast<type_id>(i));
      const double parent_mass =
          (ni - (static_cast<type_id>(i) == j ? 1 : 0)) + theta * q[i];
      if (parent_mass <= 0.0) continue;
      out.push_back({BackwardMove::mutation(static_cast<type_id>(i), j),
                     theta * q[j] * nj * parent_mass / (s * (s - 1.0 + theta) * denom_j)});
    }
  }
  return out;
}

// Closed-form log sampling probability under PIM:
//   p(n) = [ s! / prod_i n_i! ] prod_i prod_{k=0}^{n_i-1} (k + theta Q_i)
//            / prod_{k=0}^{s-1} (k + theta).
// (The multinomial factor makes this the probability of the unordered
// configuration, matching the recursion's convention.)
inline double pim_log_probability(const MutationModel& model, const TypeCounts& n) {
  check(model.is_pim(), "pim_log_probability: model is not parent-independent");
  check(n.size() >= 1, "pim_log_probability: empty configuration");
  const double theta = model.theta();
  const auto& q = model.pim_q();
  double log_p = std::lgamma(static_cast<double>(n.size()) + 1.0);
  for (auto [t, c] : n.entries()) {
    log_p -= std::lgamma(static_cast<double>(c) + 1.0);
    for (uint32_t k = 0; k < c; ++k) log_p += std::log(k + theta * q[t]);
  }
  for (int64_t k = 0; k < n.size(); ++k) log_p -= std::log(k + theta);
  return log_p;
}

}  // namespace coalsis
