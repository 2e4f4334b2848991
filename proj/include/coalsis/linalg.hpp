// ============================================================================
//  coalsis/linalg.hpp
//
//  Minimal dense linear algebra: row-major matrices, LU factorization with
//  partial pivoting, and linear solves.  Systems here are tiny (d x d for
//  d <= a few dozen, and one level-sized solve in the exact recursion), so a
//  textbook O(n^3) LU is both adequate and dependency-free.
// ============================================================================
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "coalsis/common.hpp"

namespace coalsis {

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int i, int j) { return a_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<size_t>(i) * cols_ + j]; }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

// Solves A x = b in place of a copy of A; returns x.  Throws on (numerical)
// singularity, naming the pivot.  A must be square and b.size() == A.rows().
inline std::vector<double> solve_dense(Matrix a, std::vector<double> b) {
  const int n = a.rows();
  check(a.cols() == n, "solve_dense: matrix not square");
  check(static_cast<int>(b.size()) == n, "solve_dense: rhs size mismatch");

  std::vector<int> piv(n);
  for (int i = 0; i < n; ++i) piv[i] = i;

  for (int k = 0; k < n; ++k) {
    // Partial pivot: largest |entry| in column k at or below the diagonal.
    int p = k;
    double best = std::fabs(a(k, k));
    for (int i = k + 1; i < n; ++i) {
      double v = std::fabs(a(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    check(best > 0.0, format_msg("solve_dense: singular matrix at pivot %d", k));
    if (p != k) {
      for (int j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
      std::swap(b[k], b[p]);
    }
    for (int i = k + 1; i < n; ++i) {
      double m = a(i, k) / a(k, k);
      if (m == 0.0) continue;
      a(i, k) = 0.0;
      for (int j = k + 1; j < n; ++j) a(i, j) -= m * a(k, j);
      b[i] -= m * b[k];
    }
  }
  // Back substitution.
  std::vector<double> x(n);
  for (int i = n - 1; i >= 0; --i) {
    double acc = b[i];
    for (int j = i + 1; j < n; ++j) acc -= a(i, j) * x[j];
    x[i] = acc / a(i, i);
  }
  return x;
}

}  // namespace coalsis
