// ============================================================================
//  coalsis/pi_hat.hpp
//
//  The SD approximation pi-hat of the one-extra-lineage conditional law:
//
//      pi_hat[. | m] = m/(||m||+theta) (I - theta P/(||m||+theta))^{-1}.
//
//  Two evaluation strategies:
//
//   * Dense models: the matrix-inverse form as a d x d linear solve (never an
//     explicit inverse; the system is diagonally dominant since the spectral
//     radius of theta P/(||m||+theta) is < 1).  Solves are memoized in a
//     bounded LRU cache keyed on the count vector, because successive SIS
//     steps and synchronized replicates revisit nearby states.
//
//   * SiteFlip models (d = 2^L): the Neumann series sum_w beta^w m P^w /
//     (||m||+theta) evaluated through the hypercube spectral decomposition.
//     P's eigenvalues are lambda_k = 1 - 2k/L with Krawtchouk-polynomial
//     eigenstructure, giving a Hamming-distance kernel
//
//        G_h = 2^{-L} sum_{k=0}^{L} K_k(h) / (1 - beta lambda_k),
//        pi_hat[x | m] = (1/(||m||+theta)) sum_i m_i G_{ham(i,x)},
//
//     which is *exact* (no reduced-support truncation) at O(L^2) per sample
//     size plus O(T) per queried type, T = occupied types.
//
//  Under PIM both paths reduce to (m_i + theta Q_i)/(||m||+theta); the solve
//  path is kept honest by comparing against that closed form in tests.
// ============================================================================
#pragma once

#include <bit>
#include <cstdint>
#include <list>
#include <unordered_map>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/linalg.hpp"
#include "coalsis/mutation_model.hpp"
#include "coalsis/state.hpp"

namespace coalsis {

// ----------------------------------------------------------------------------
//  Dense path with LRU memoization
// ----------------------------------------------------------------------------

class SdPiHatCache {
 public:
  explicit SdPiHatCache(const MutationModel& model, size_t capacity = 1 << 14)
      : model_(&model), capacity_(capacity) {
    check(model.kind() == MutationModel::Kind::Dense,
          "SdPiHatCache: dense models only (site models use the spectral kernel)");
  }

  // pi_hat[. | m]; the returned reference stays valid until the next call.
  const std::vector<double>& pi_hat(const TypeCounts& m) {
    uint64_t key = hash_counts(m);
    auto it = map_.find(key);
    if (it != map_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second.order);
      return it->second.value;
    }
    std::vector<double> v = solve(m);
    lru_.push_front(key);
    auto [ins, fresh] = map_.emplace(key, Entry{std::move(v), lru_.begin()});
    check(fresh, "SdPiHatCache: hash collision bookkeeping error");
    if (map_.size() > capacity_) {
      map_.erase(lru_.back());
      lru_.pop_back();
    }
    return ins->second.value;
  }

  // Direct (uncached) solve, exposed for tests.
  std::vector<double> solve(const TypeCounts& m) const {
    const int d = static_cast<int>(model_->type_count());
    const double s = static_cast<double>(m.size());
    check(m.size() >= 1, "sd_pi_hat: empty configuration");
    const double theta = model_->theta();
    const double scale = 1.0 / (s + theta);
    const Matrix& p = model_->dense_matrix();
    // (I - theta P^T /(s+theta)) x = m /(s+theta)
    Matrix a(d, d);
    std::vector<double> b(d, 0.0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = (i == j ? 1.0 : 0.0) - theta * scale * p(j, i);
    for (auto [t, c] : m.entries()) b[t] = c * scale;
    auto x = solve_dense(std::move(a), std::move(b));
    for (int i = 0; i < d; ++i)
      check(x[i] >= 0.0, "sd_pi_hat: negative entry (matrix conditioning problem)");
    return x;
  }

 private:
  struct Entry {
    std::vector<double> value;
    std::list<uint64_t>::iterator order;
  };

  // Order-sensitive FNV-style hash of the sparse count list.  Collisions
  // would silently alias cache entries; 64-bit FNV over (type, count) pairs
  // makes that astronomically unlikely for the state counts seen here.
  static uint64_t hash_counts(const TypeCounts& m) {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](uint64_t v) {
      h ^= v;
      h *= 1099511628211ULL;
    };
    for (auto [t, c] : m.entries()) {
      mix(t);
      mix(c);
    }
    return h;
  }

  const MutationModel* model_;
  size_t capacity_;
  std::unordered_map<uint64_t, Entry> map_;
  std::list<uint64_t> lru_;
};

// ----------------------------------------------------------------------------
//  SiteFlip spectral kernel
// ----------------------------------------------------------------------------

// Krawtchouk polynomial table K[k][h] = sum_m (-1)^m C(h,m) C(L-h, k-m):
// the character sums of the hypercube, independent of sample size.
class KrawtchoukTable {
 public:
  explicit KrawtchoukTable(int sites) : l_(sites), k_(static_cast<size_t>(sites + 1) * (sites + 1)) {
    // Pascal triangle up to L.
    std::vector<std::vector<double>> c(l_ + 1, std::vector<double>(l_ + 1, 0.0));
    for (int n = 0; n <= l_; ++n) {
      c[n][0] = 1.0;
      for (int r = 1; r <= n; ++r) c[n][r] = c[n - 1][r - 1] + (r <= n - 1 ? c[n - 1][r] : 0.0);
    }
    for (int k = 0; k <= l_; ++k)
      for (int h = 0; h <= l_; ++h) {
        double acc = 0.0;
        for (int m = 0; m <= std::min(k, h); ++m) {
          if (k - m > l_ - h) continue;
          double term = c[h][m] * c[l_ - h][k - m];
          acc += (m % 2 == 0) ? term : -term;
        }
        at(k, h) = acc;
      }
  }

  double operator()(int k, int h) const { return k_[static_cast<size_t>(k) * (l_ + 1) + h]; }
  int sites() const { return l_; }

 private:
  double& at(int k, int h) { return k_[static_cast<size_t>(k) * (l_ + 1) + h]; }
  int l_;
  std::vector<double> k_;
};

// Hamming-distance kernel G_h for a given ||m|| = sigma:  pi_hat[x|m] =
// (1/(sigma+theta)) sum_i m_i G_{ham(i,x)}.
inline std::vector<double> site_sd_kernel(const KrawtchoukTable& kt, double theta, int64_t sigma) {
  const int l = kt.sites();
  const double beta = theta / (static_cast<double>(sigma) + theta);
  std::vector<double> g(l + 1, 0.0);
  const double scale = std::exp2(-static_cast<double>(l));
  for (int h = 0; h <= l; ++h) {
    double acc = 0.0;
    for (int k = 0; k <= l; ++k) {
      double lambda = 1.0 - 2.0 * k / l;
      acc += kt(k, h) / (1.0 - beta * lambda);
    }
    g[h] = acc * scale;
  }
  return g;
}

// Evaluates pi_hat[x | m] from the kernel for ||m|| = sigma.
inline double site_pi_hat(const std::vector<double>& kernel, double theta, const TypeCounts& m,
                          type_id x) {
  double phi = 0.0;
  for (auto [t, c] : m.entries()) phi += c * kernel[std::popcount(t ^ x)];
  return phi / (static_cast<double>(m.size()) + theta);
}

}  // namespace coalsis
