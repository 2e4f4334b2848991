// ============================================================================
//  coalsis/mutation_model.hpp
//
//  Finite-alleles mutation models: the driving rate theta together with a
//  row-stochastic type-transition matrix P.  Two storage strategies:
//
//   * Dense      -- explicit d x d matrix (includes parent-independent
//                   mutation, PIM, whose rows are all equal to a law Q).
//   * SiteFlip   -- the benchmark's site-by-site model: L biallelic sites,
//                   d = 2^L types encoded as bitmasks, each mutation flips a
//                   uniformly chosen site.  P is never materialized; rows
//                   have exactly L nonzero entries of 1/L each.
//
//  The model also owns the stationary law of P, which is the boundary value
//  of the exact sampling recursion (the forward chain starts from a single
//  ancestor whose type is drawn from the stationary distribution).
// ============================================================================
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/linalg.hpp"

namespace coalsis {

using type_id = uint32_t;

class MutationModel {
 public:
  enum class Kind { Dense, SiteFlip };

  // --- constructors ---------------------------------------------------------

  static MutationModel dense(double theta, Matrix p) {
    MutationModel m;
    m.kind_ = Kind::Dense;
    m.theta_ = theta;
    m.p_ = std::move(p);
    m.validate_dense();
    m.detect_pim();
    m.compute_stationary();
    return m;
  }

  // PIM model: every row of P equals Q, so the mutant type ignores the parent.
  static MutationModel pim(double theta, const std::vector<double>& q) {
    int d = static_cast<int>(q.size());
    Matrix p(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) p(i, j) = q[j];
    return dense(theta, std::move(p));
  }

  // Site-by-site model with `sites` biallelic sites; `theta` is the *total*
  // driving rate (per-site rate times the number of sites).
  static MutationModel site_flip(double theta, int sites) {
    check(sites >= 1 && sites <= 30, "site_flip: site count out of range [1, 30]");
    check(theta > 0.0, "site_flip: theta must be positive");
    MutationModel m;
    m.kind_ = Kind::SiteFlip;
    m.theta_ = theta;
    m.sites_ = sites;
    return m;
  }

  // --- basic accessors ------------------------------------------------------

  Kind kind() const { return kind_; }
  double theta() const { return theta_; }
  int sites() const { return sites_; }
  int64_t type_count() const {
    return kind_ == Kind::Dense ? p_.rows() : (int64_t{1} << sites_);
  }
  // Dense models keep the whole matrix around (d is small); callers needing
  // entry-wise access on SiteFlip use prob().
  const Matrix& dense_matrix() const {
    check(kind_ == Kind::Dense, "dense_matrix: not a dense model");
    return p_;
  }

  bool is_pim() const { return is_pim_; }
  const std::vector<double>& pim_q() const {
    check(is_pim_, "pim_q: model is not parent-independent");
    return pim_q_;
  }

  double prob(type_id i, type_id j) const {
    if (kind_ == Kind::Dense) return p_(static_cast<int>(i), static_cast<int>(j));
    return std::popcount(i ^ j) == 1 ? 1.0 / sites_ : 0.0;
  }

  // --- sparse row / column enumeration --------------------------------------

  // Successors of i: pairs (j, P_ij) over the support of row i.
  void transitions_from(type_id i, std::vector<std::pair<type_id, double>>& out) const {
    out.clear();
    if (kind_ == Kind::Dense) {
      for (int j = 0; j < p_.cols(); ++j)
        if (p_(static_cast<int>(i), j) > 0.0) out.emplace_back(j, p_(static_cast<int>(i), j));
    } else {
      for (int b = 0; b < sites_; ++b) out.emplace_back(i ^ (type_id{1} << b), 1.0 / sites_);
    }
  }

  // Predecessors of j: pairs (i, P_ij) over the support of column j.
  void transitions_into(type_id j, std::vector<std::pair<type_id, double>>& out) const {
    out.clear();
    if (kind_ == Kind::Dense) {
      for (int i = 0; i < p_.rows(); ++i)
        if (p_(i, static_cast<int>(j)) > 0.0) out.emplace_back(i, p_(i, static_cast<int>(j)));
    } else {
      // Flips are involutions, so columns mirror rows.
      for (int b = 0; b < sites_; ++b) out.emplace_back(j ^ (type_id{1} << b), 1.0 / sites_);
    }
  }

  // --- stationary law -------------------------------------------------------

  double stationary_prob(type_id i) const {
    if (kind_ == Kind::SiteFlip) return std::exp2(-static_cast<double>(sites_));
    return stationary_[i];
  }
  double log_stationary_prob(type_id i) const {
    if (kind_ == Kind::SiteFlip) return -static_cast<double>(sites_) * std::log(2.0);
    double v = stationary_[i];
    check(v > 0.0, format_msg("log_stationary_prob: type %u has zero stationary mass", i));
    return std::log(v);
  }
  const std::vector<double>& stationary() const {
    check(kind_ == Kind::Dense, "stationary(): vector form only for dense models");
    return stationary_;
  }

 private:
  MutationModel() = default;

  void validate_dense() {
    const int d = p_.rows();
    check(d >= 2, "MutationModel: need at least 2 types");
    check(p_.cols() == d, "MutationModel: P must be square");
    check(theta_ > 0.0, "MutationModel: theta must be positive");
    for (int i = 0; i < d; ++i) {
      double row = 0.0;
      for (int j = 0; j < d; ++j) {
        check(p_(i, j) >= 0.0, format_msg("MutationModel: negative entry P(%d,%d)", i, j));
        row += p_(i, j);
      }
      check(std::fabs(row - 1.0) <= 1e-12,
            format_msg("MutationModel: row %d of P sums to %.17g, not 1", i, row));
    }
    check_irreducible();
  }

  // Strong connectivity of the support graph of P via boolean closure
  // (Warshall).  Irreducibility guarantees a unique positive stationary law
  // and full-support backward proposals.
  void check_irreducible() {
    const int d = p_.rows();
    std::vector<char> reach(static_cast<size_t>(d) * d, 0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) reach[i * d + j] = (i == j || p_(i, j) > 0.0) ? 1 : 0;
    for (int k = 0; k < d; ++k)
      for (int i = 0; i < d; ++i)
        if (reach[i * d + k])
          for (int j = 0; j < d; ++j)
            if (reach[k * d + j]) reach[i * d + j] = 1;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        check(reach[i * d + j],
              format_msg("MutationModel: P is reducible (type %d cannot reach type %d)", i, j));
  }

  void detect_pim() {
    const int d = p_.rows();
    is_pim_ = true;
    for (int j = 0; j < d && is_pim_; ++j)
      for (int i = 1; i < d; ++i)
        if (std::fabs(p_(i, j) - p_(0, j)) > 1e-14) {
          is_pim_ = false;
          break;
        }
    if (is_pim_) {
      pim_q_.resize(d);
      for (int j = 0; j < d; ++j) pim_q_[j] = p_(0, j);
    }
  }

  // Solve pi P = pi, sum(pi) = 1: take (P^T - I), replace the last equation
  // by the normalization row.
  void compute_stationary() {
    const int d = p_.rows();
    Matrix a(d, d);
    std::vector<double> b(d, 0.0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = p_(j, i) - (i == j ? 1.0 : 0.0);
    for (int j = 0; j < d; ++j) a(d - 1, j) = 1.0;
    b[d - 1] = 1.0;
    stationary_ = solve_dense(std::move(a), std::move(b));
    for (int i = 0; i < d; ++i)
      check(stationary_[i] > 0.0,
            format_msg("MutationModel: stationary mass of type %d is not positive", i));
  }

  Kind kind_ = Kind::Dense;
  double theta_ = 0.0;
  int sites_ = 0;
  Matrix p_;
  bool is_pim_ = false;
  std::vector<double> pim_q_;
  std::vector<double> stationary_;
};

}  // namespace coalsis
