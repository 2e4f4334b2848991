// ============================================================================
//  coalsis/quadrature.hpp
//
//  Adaptive Gauss-Kronrod (G7, K15) quadrature for the limit-process cost
//  integrals.  The integrands are smooth on the interiors used here, so the
//  7/15-point pair with interval bisection reaches 1e-10 absolute tolerance
//  cheaply; the error estimate is the usual |G7 - K15| per interval.
// ============================================================================
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "coalsis/common.hpp"

namespace coalsis {

namespace detail {
// Kronrod-15 abscissae (nonnegative half; symmetric) and weights, with the
// embedded Gauss-7 weights on the shared odd-indexed nodes.
inline constexpr double kKronrodX[8] = {
    0.991455371120812639206854697526329,  //
    0.949107912342758524526189684047851,  // G7
    0.864864423359769072789712788640926,  //
    0.741531185599394439863864773280788,  // G7
    0.586087235467691130294144838258730,  //
    0.405845151377397166906606412076961,  // G7
    0.207784955007898467600689403773245,  //
    0.000000000000000000000000000000000};  // G7 (center)
inline constexpr double kKronrodW[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};
inline constexpr double kGauss7W[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct PanelResult {
  double kronrod;
  double error;
};

template <class F>
PanelResult gk15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  // Odd-indexed Kronrod nodes (including the center, i == 7) are exactly the
  // embedded Gauss-7 nodes, so the G7 value falls out of the same pass.
  double gauss = 0.0, kronrod = 0.0;
  for (int i = 0; i < 8; ++i) {
    double x = h * kKronrodX[i];
    double fv = (i == 7) ? f(c) : f(c - x) + f(c + x);
    kronrod += kKronrodW[i] * fv;
    if (i % 2 == 1) gauss += kGauss7W[i / 2] * fv;
  }
  gauss *= h;
  kronrod *= h;
  return {kronrod, std::fabs(kronrod - gauss)};
}
}  // namespace detail

// Integrates f over [a, b] to absolute tolerance abs_tol by bisecting the
// worst panel first (simple stack-based adaptive scheme).
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double abs_tol = 1e-12, int max_panels = 4000) {
  struct Panel {
    double a, b, value, error;
  };
  auto first = detail::gk15(f, a, b);
  std::vector<Panel> panels{{a, b, first.kronrod, first.error}};
  double total_err = first.error;
  while (total_err > abs_tol) {
    check(static_cast<int>(panels.size()) < max_panels,
          "integrate: panel budget exhausted (integrand too rough for tolerance)");
    // Find the worst panel and bisect it.
    size_t worst = 0;
    for (size_t i = 1; i < panels.size(); ++i)
      if (panels[i].error > panels[worst].error) worst = i;
    Panel p = panels[worst];
    double mid = 0.5 * (p.a + p.b);
    auto left = detail::gk15(f, p.a, mid);
    auto right = detail::gk15(f, mid, p.b);
    total_err += left.error + right.error - p.error;
    panels[worst] = {p.a, mid, left.kronrod, left.error};
    panels.push_back({mid, p.b, right.kronrod, right.error});
  }
  double sum = 0.0;
  for (const auto& p : panels) sum += p.value;
  return sum;
}

}  // namespace coalsis
