// ============================================================================
//  coalsis/exact.hpp
//
//  Exact sampling probabilities p(n) for the finite-alleles coalescent by
//  direct solution of the recursion
//
//    (s - 1 + theta) p(n) = sum_{j: n_j >= 2} (n_j - 1) p(n - e_j)
//        + theta sum_{i,j: n_j >= 1} P_ij [(n_i + 1 - d_ij)/s] p(n - e_j + e_i),
//
//  with boundary p(e_i) = stationary_i(P).  Coalescence couples level s to
//  the already-solved level s-1; mutation couples states within a level, so
//  each level is one dense linear solve over all compositions of s into d
//  parts.  This is an oracle for tests and small-sample studies -- state
//  spaces explode combinatorially, so sizes are capped and the solver
//  refuses (with a clear message) beyond the cap.
// ============================================================================
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/linalg.hpp"
#include "coalsis/mutation_model.hpp"
#include "coalsis/state.hpp"

namespace coalsis {

class ExactSolver {
 public:
  // Solves all levels 1..max_size at construction; log_probability() then
  // answers any configuration with ||n|| <= max_size.
  ExactSolver(const MutationModel& model, int max_size) : model_(model), max_size_(max_size) {
    check(model.kind() == MutationModel::Kind::Dense,
          "ExactSolver: exact recursion requires a dense mutation matrix");
    d_ = static_cast<int>(model.type_count());
    check(d_ <= 6, "ExactSolver: capped at d <= 6 types (state space growth)");
    check(max_size_ >= 1 && max_size_ <= 64, "ExactSolver: capped at ||n|| <= 64");
    solve_all_levels();
  }

  double log_probability(const TypeCounts& n) const {
    double p = probability(n);
    check(p > 0.0, "ExactSolver: non-positive probability (reducibility leak?)");
    return std::log(p);
  }

  double probability(const TypeCounts& n) const {
    const int s = static_cast<int>(n.size());
    check(s >= 1 && s <= max_size_, "ExactSolver: configuration size outside solved range");
    const auto& lvl = levels_[s];
    int idx = rank_of(lvl.keys, encode(n.to_dense(d_)));
    return lvl.values[idx];
  }

 private:
  struct Level {
    std::vector<uint64_t> keys;         // sorted composition encodings
    std::vector<std::vector<int>> comps;  // decoded compositions, same order
    std::vector<double> values;         // p(n) per composition
  };

  static uint64_t encode(const std::vector<int>& c) {
    uint64_t k = 0;
    for (int v : c) k = (k << 10) | static_cast<uint64_t>(v);
    return k;
  }

  static int rank_of(const std::vector<uint64_t>& keys, uint64_t key) {
    auto it = std::lower_bound(keys.begin(), keys.end(), key);
    check(it != keys.end() && *it == key, "ExactSolver: state not found in level table");
    return static_cast<int>(it - keys.begin());
  }

  void enumerate(int remaining, int pos, std::vector<int>& cur, Level& lvl) const {
    if (pos == d_ - 1) {
      cur[pos] = remaining;
      lvl.keys.push_back(encode(cur));
      lvl.comps.push_back(cur);
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      cur[pos] = v;
      enumerate(remaining - v, pos + 1, cur, lvl);
    }
  }

  void solve_all_levels() {
    levels_.resize(max_size_ + 1);
    const double theta = model_.theta();
    const Matrix& P = model_.dense_matrix();

    for (int s = 1; s <= max_size_; ++s) {
      Level& lvl = levels_[s];
      std::vector<int> cur(d_, 0);
      enumerate(s, 0, cur, lvl);
      // Lexicographic enumeration with the high-bits-first encoding produces
      // keys already sorted; assert rather than sort to keep ranks stable.
      check(std::is_sorted(lvl.keys.begin(), lvl.keys.end()),
            "ExactSolver: level enumeration not sorted");
      const int dim = static_cast<int>(lvl.keys.size());
      check(dim <= 2000, format_msg("ExactSolver: level %d has %d states, past the cap", s, dim));

      if (s == 1) {
        lvl.values.resize(dim);
        for (int r = 0; r < dim; ++r) {
          // Composition e_i: find the occupied coordinate.
          const auto& c = lvl.comps[r];
          int i = static_cast<int>(std::find(c.begin(), c.end(), 1) - c.begin());
          lvl.values[r] = model_.stationary()[i];
        }
        continue;
      }

      Matrix a(dim, dim, 0.0);
      std::vector<double> b(dim, 0.0);
      const auto& prev = levels_[s - 1];
      const double sd = static_cast<double>(s);

      for (int r = 0; r < dim; ++r) {
        const auto& c = lvl.comps[r];
        a(r, r) = sd - 1.0 + theta;
        std::vector<int> m(c);
        for (int j = 0; j < d_; ++j) {
          if (c[j] == 0) continue;
          // Coalescence into the known lower level.
          if (c[j] >= 2) {
            m[j] -= 1;
            b[r] += (c[j] - 1) * prev.values[rank_of(prev.keys, encode(m))];
            m[j] += 1;
          }
          // Mutation predecessors within this level.
          for (int i = 0; i < d_; ++i) {
            const double pij = P(i, j);
            if (pij <= 0.0) continue;
            const double parent_count = c[i] + 1 - (i == j ? 1 : 0);
            const double coeff = theta * pij * parent_count / sd;
            if (i == j) {
              a(r, r) -= coeff;  // self-loop: predecessor is n itself
            } else {
              m[j] -= 1;
              m[i] += 1;
              a(r, rank_of(lvl.keys, encode(m))) -= coeff;
              m[i] -= 1;
              m[j] += 1;
            }
          }
        }
      }
      lvl.values = solve_dense(std::move(a), std::move(b));
    }
  }

  const MutationModel& model_;
  int max_size_;
  int d_ = 0;
  std::vector<Level> levels_;
};

// One-shot convenience wrapper.
inline double exact_sampling_probability(const MutationModel& model, const TypeCounts& n) {
  ExactSolver solver(model, static_cast<int>(n.size()));
  return solver.probability(n);
}

}  // namespace coalsis
