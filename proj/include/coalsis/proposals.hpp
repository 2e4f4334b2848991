// ============================================================================
//  coalsis/proposals.hpp
//
//  Backward proposal families for the finite-alleles SIS engine.  A proposal
//  enumerates every admissible backward move from a configuration n together
//  with
//
//    * mass          -- unnormalized proposal mass (move is drawn w.p. mass/Z)
//    * log_numerator -- log of the path-weight numerator q~ for the move
//
//  so the importance weight accumulates exp(log_numerator - log(mass/Z))
//  per step.  Z is returned by enumerate(); for SD it equals 1 analytically
//  (the defining identity of pi_hat makes the masses a probability
//  distribution) and for the PIM-optimal kernel it equals 1 by construction,
//  but we always renormalize over the enumerated support and fold Z into the
//  cost, which turns both facts into testable invariants instead of silent
//  assumptions.
//
//  Families:
//    GT          mass = numerator: moves proportional to their weight factor.
//    SD          coalescence  n_j (n_j-1) / (s (s-1+theta) pi_hat[j | n-e_j])
//                mutation i->j  theta P_ij n_j pi_hat[i | n-e_j]
//                               / (s (s-1+theta) pi_hat[j | n-e_j])
//    PimOptimal  the exact backward kernel of the forward chain under
//                parent-independent mutation; yields zero-variance weights.
//                Rejected for non-PIM models.
//
//  The one-step costs admit closed display forms (documented at the display_*
//  helpers below) which are algebraically equal to numerator/probability;
//  tests cross-check the two arithmetic paths to 1e-10.
// ============================================================================
#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/mutation_model.hpp"
#include "coalsis/pi_hat.hpp"
#include "coalsis/state.hpp"
#include "coalsis/transitions.hpp"

namespace coalsis {

enum class ProposalKind { GT, SD, PimOptimal };

inline const char* proposal_name(ProposalKind k) {
  switch (k) {
    case ProposalKind::GT: return "gt";
    case ProposalKind::SD: return "sd";
    case ProposalKind::PimOptimal: return "optimal";
  }
  return "?";
}

inline ProposalKind parse_proposal(const std::string& s) {
  if (s == "gt") return ProposalKind::GT;
  if (s == "sd") return ProposalKind::SD;
  if (s == "optimal") return ProposalKind::PimOptimal;
  raise(format_msg("unknown proposal '%s' (expected gt | sd | optimal)", s.c_str()));
}

struct FaCandidate {
  BackwardMove move;
  double mass = 0.0;
  double log_numerator = 0.0;
};

// Per-worker mutable scratch: pi_hat solve cache (dense SD) and the
// Hamming-kernel cache keyed on sample size (site SD).  Never shared between
// threads.
struct FaScratch {
  std::unique_ptr<SdPiHatCache> dense_cache;              // dense SD only
  std::unordered_map<int64_t, std::vector<double>> kernels;  // sigma -> G, site SD only
  std::vector<std::pair<type_id, double>> fanin;  // reusable column buffer
  TypeCounts child_removed;                       // reusable buffer

  const std::vector<double>& kernel(const KrawtchoukTable& kt, double theta, int64_t sigma) {
    auto it = kernels.find(sigma);
    if (it != kernels.end()) return it->second;
    if (kernels.size() > 4096) kernels.clear();
    return kernels.emplace(sigma, site_sd_kernel(kt, theta, sigma)).first->second;
  }
};

class FaProposal {
 public:
  using State = TypeCounts;
  using Move = BackwardMove;
  using Candidate = FaCandidate;
  using Scratch = FaScratch;

  FaProposal(const MutationModel& model, ProposalKind kind) : model_(&model), kind_(kind) {
    if (kind_ == ProposalKind::PimOptimal)
      check(model.kind() == MutationModel::Kind::Dense && model.is_pim(),
            "the optimal proposal requires parent-independent mutation");
    if (kind_ == ProposalKind::SD && model.kind() == MutationModel::Kind::SiteFlip)
      krawtchouk_ = std::make_unique<KrawtchoukTable>(model.sites());
  }

  const MutationModel& model() const { return *model_; }
  ProposalKind kind() const { return kind_; }

  Scratch make_scratch() const {
    Scratch s;
    if (kind_ == ProposalKind::SD && model_->kind() == MutationModel::Kind::Dense)
      s.dense_cache = std::make_unique<SdPiHatCache>(*model_);
    return s;
  }

  static bool is_terminal(const State& n) { return n.size() == 1; }

  double log_terminal(const State& n) const { return log_root_factor(*model_, n); }

  static void apply(State& n, const Move& move) { apply_backward(n, move); }

  // Enumerates admissible moves from n into out (cleared first); returns the
  // total mass Z.  n must have size >= 2.
  double enumerate(const State& n, Scratch& scratch, std::vector<Candidate>& out) const {
    out.clear();
    check(n.size() >= 2, "enumerate: configuration already at the root");
    switch (kind_) {
      case ProposalKind::GT: return enumerate_gt(n, scratch, out);
      case ProposalKind::PimOptimal: return enumerate_optimal(n, out);
      case ProposalKind::SD:
        return model_->kind() == MutationModel::Kind::Dense ? enumerate_sd_dense(n, scratch, out)
                                                            : enumerate_sd_site(n, scratch, out);
    }
    raise("enumerate: bad proposal kind");
  }

 private:
  double enumerate_gt(const State& n, Scratch& scratch, std::vector<Candidate>& out) const {
    double z = 0.0;
    for (auto [j, nj] : n.entries()) {
      if (nj >= 2) {
        BackwardMove mv = BackwardMove::coalescence(j);
        double lq = log_path_numerator(*model_, n, mv);
        double mass = std::exp(lq);
        out.push_back({mv, mass, lq});
        z += mass;
      }
      model_->transitions_into(j, scratch.fanin);
      for (const auto& [i, pij] : scratch.fanin) {
        (void)pij;
        BackwardMove mv = BackwardMove::mutation(i, j);
        double lq = log_path_numerator(*model_, n, mv);
        double mass = std::exp(lq);
        out.push_back({mv, mass, lq});
        z += mass;
      }
    }
    check(z > 0.0, "GT proposal: no admissible move (reducible model?)");
    return z;
  }

  double enumerate_optimal(const State& n, std::vector<Candidate>& out) const {
    auto dist = pim_backward_distribution(*model_, n);
    double z = 0.0;
    for (const auto& [mv, prob] : dist) {
      out.push_back({mv, prob, log_path_numerator(*model_, n, mv)});
      z += prob;
    }
    check(z > 0.0, "optimal proposal: empty backward kernel");
    return z;
  }

  double enumerate_sd_dense(const State& n, Scratch& scratch, std::vector<Candidate>& out) const {
    const double s = static_cast<double>(n.size());
    const double theta = model_->theta();
    const double denom = s * (s - 1.0 + theta);
    double z = 0.0;
    // All children share sample size ||n||-1, but pi_hat is conditioned on
    // the child-removed configuration, so one solve per distinct child type.
    for (auto [j, nj] : n.entries()) {
      TypeCounts& m = scratch.child_removed;
      m = n;
      m.add(j, -1);
      const std::vector<double>& ph = scratch.dense_cache->pi_hat(m);
      check(ph[j] > 0.0, "sd proposal: pi_hat[j | n - e_j] vanished");
      if (nj >= 2) {
        double mass = nj * (nj - 1.0) / (denom * ph[j]);
        out.push_back({BackwardMove::coalescence(j), mass,
                       log_path_numerator(*model_, n, BackwardMove::coalescence(j))});
        z += mass;
      }
      model_->transitions_into(j, scratch.fanin);
      for (const auto& [i, pij] : scratch.fanin) {
        BackwardMove mv = BackwardMove::mutation(i, j);
        double mass = theta * pij * nj * ph[i] / (denom * ph[j]);
        if (mass <= 0.0) continue;
        out.push_back({mv, mass, log_path_numerator(*model_, n, mv)});
        z += mass;
      }
    }
    check(z > 0.0, "sd proposal: no admissible move");
    return z;
  }

  double enumerate_sd_site(const State& n, Scratch& scratch, std::vector<Candidate>& out) const {
    const double s = static_cast<double>(n.size());
    const double theta = model_->theta();
    const double denom = s * (s - 1.0 + theta);
    const double pij = 1.0 / model_->sites();
    const int64_t sigma = static_cast<int64_t>(n.size()) - 1;
    const std::vector<double>& g = scratch.kernel(*krawtchouk_, theta, sigma);
    const double ph_scale = 1.0 / (static_cast<double>(sigma) + theta);
    // Phi(x) = sum_i n_i G_{ham(i,x)}; pi_hat[x | n-e_j] =
    // (Phi(x) - G_{ham(j,x)}) * ph_scale.
    auto phi = [&](type_id x) {
      double acc = 0.0;
      for (auto [t, c] : n.entries()) acc += c * g[std::popcount(t ^ x)];
      return acc;
    };
    double z = 0.0;
    const int l = model_->sites();
    for (auto [j, nj] : n.entries()) {
      double ph_j = (phi(j) - g[0]) * ph_scale;
      check(ph_j > 0.0, "sd proposal: pi_hat[j | n - e_j] vanished");
      if (nj >= 2) {
        double mass = nj * (nj - 1.0) / (denom * ph_j);
        out.push_back({BackwardMove::coalescence(j), mass,
                       log_path_numerator(*model_, n, BackwardMove::coalescence(j))});
        z += mass;
      }
      for (int bit = 0; bit < l; ++bit) {
        type_id i = j ^ (type_id{1} << bit);
        double ph_i = (phi(i) - g[1]) * ph_scale;  // ham(j, i) = 1
        BackwardMove mv = BackwardMove::mutation(i, j);
        double mass = theta * pij * nj * ph_i / (denom * ph_j);
        if (mass <= 0.0) continue;
        out.push_back({mv, mass, log_path_numerator(*model_, n, mv)});
        z += mass;
      }
    }
    check(z > 0.0, "sd proposal: no admissible move");
    return z;
  }

  const MutationModel* model_;
  ProposalKind kind_;
  std::unique_ptr<KrawtchoukTable> krawtchouk_;  // site SD only
};

// ----------------------------------------------------------------------------
//  Closed display forms of the one-step cost (independent arithmetic path,
//  used to validate log_numerator - log(mass/Z))
// ----------------------------------------------------------------------------

// GT: the cost is the move-independent total mass.  When every type is
// present it collapses to
//     [ s - d + theta (s + d - tr P)/s ] / (s - 1 + theta).
inline double gt_interior_cost(const MutationModel& model, const TypeCounts& n) {
  check(model.kind() == MutationModel::Kind::Dense, "gt_interior_cost: dense models only");
  const int d = static_cast<int>(model.type_count());
  check(n.distinct_types() == static_cast<size_t>(d),
        "gt_interior_cost: requires every type present");
  const double s = static_cast<double>(n.size());
  const Matrix& p = model.dense_matrix();
  double trace = 0.0;
  for (int i = 0; i < d; ++i) trace += p(i, i);
  return (s - d + model.theta() * (s + d - trace) / s) / (s - 1.0 + model.theta());
}

// SD: with Z the enumerated total mass,
//   coalescence j :  Z * s * pi_hat[j | n-e_j] / n_j
//   mutation i->j :  Z * (n_i + 1 - delta_ij) * pi_hat[j | n-e_j]
//                      / ( n_j * pi_hat[i | n-e_j] )
// (counts read in n, the pre-move configuration).
inline double sd_display_cost(const MutationModel& model, SdPiHatCache& cache,
                              const TypeCounts& n, const BackwardMove& move, double z) {
  TypeCounts m = n;
  m.add(move.child, -1);
  const std::vector<double>& ph = cache.pi_hat(m);
  const double s = static_cast<double>(n.size());
  const double nj = static_cast<double>(n.count_of(move.child));
  if (move.kind == BackwardMove::Kind::Coalescence) return z * s * ph[move.child] / nj;
  const double delta = move.parent == move.child ? 1.0 : 0.0;
  const double parent_after = static_cast<double>(n.count_of(move.parent)) + 1.0 - delta;
  return z * parent_after * ph[move.child] / (nj * ph[move.parent]);
}

// ----------------------------------------------------------------------------
//  First-order cost expansion coefficients a_j(y)
//
//  For a configuration near n*y the coalescence cost of type j behaves as
//  1 + a_j(y)/n + o(1/n); the mutation jump factors b tend to 1 for both
//  families.  These drive the deterministic limit machinery.
//
//    GT:  a_j(y) = -(d-1)/||y||                                   (all j)
//    SD:  a_j(y) = (1-theta)/||y||
//                  - (1/y_j) [ 1 - (theta/||y||) sum_i y_i P_ij ]
//  and sum_j y_j a_j(y) = 1 - d identically when ||y|| = 1.
// ----------------------------------------------------------------------------
inline double expansion_a(const MutationModel& model, ProposalKind kind,
                          const std::vector<double>& y, int j) {
  check(model.kind() == MutationModel::Kind::Dense, "expansion_a: dense models only");
  const int d = static_cast<int>(model.type_count());
  check(static_cast<int>(y.size()) == d && j >= 0 && j < d, "expansion_a: bad arguments");
  double norm = 0.0;
  for (double v : y) norm += v;
  check(norm > 0.0, "expansion_a: zero mass configuration");
  switch (kind) {
    case ProposalKind::GT:
      return -(d - 1.0) / norm;
    case ProposalKind::SD: {
      check(y[j] > 0.0, "expansion_a: y_j must be positive for SD");
      const Matrix& p = model.dense_matrix();
      double inflow = 0.0;
      for (int i = 0; i < d; ++i) inflow += y[i] * p(i, j);
      const double theta = model.theta();
      return (1.0 - theta) / norm - (1.0 - theta * inflow / norm) / y[j];
    }
    case ProposalKind::PimOptimal:
      raise("expansion_a: no limit expansion for the optimal proposal");
  }
  raise("expansion_a: bad proposal kind");
}

}  // namespace coalsis
