// ============================================================================
//  Core-model tests: utilities, mutation models, forward/backward transition
//  structure, and the exact-recursion oracle with hand-derived micro-values.
// ============================================================================
#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/exact.hpp"
#include "coalsis/linalg.hpp"
#include "coalsis/logspace.hpp"
#include "coalsis/mutation_model.hpp"
#include "coalsis/quadrature.hpp"
#include "coalsis/rng.hpp"
#include "coalsis/state.hpp"
#include "coalsis/transitions.hpp"
#include "test_util.hpp"

using namespace coalsis;
using namespace coalsis::testutil;

// ----------------------------------------------------------------------------
//  RNG
// ----------------------------------------------------------------------------

TEST_CASE("rng streams are keyed and reproducible") {
  RngStream a(42, 7, 0), b(42, 7, 0), c(42, 8, 0), d(42, 7, 1);
  for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());
  // Different replicate id or generation gives a different stream.
  RngStream a2(42, 7, 0);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 16; ++i) {
    uint64_t base = a2.next_u64();
    differs_c |= (base != c.next_u64());
    differs_d |= (base != d.next_u64());
  }
  CHECK(differs_c);
  CHECK(differs_d);
}

TEST_CASE("rng uniforms live in [0,1) and average near 1/2") {
  RngStream r(123, 0);
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = r.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    acc += u;
  }
  CHECK(std::fabs(acc / n - 0.5) < 3.0 / std::sqrt(12.0 * n));
}

TEST_CASE("mass-weighted index sampling matches weights") {
  RngStream r(9, 1);
  std::vector<double> mass = {0.2, 0.0, 0.5, 0.3};
  std::vector<int> hits(4, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++hits[r.next_index_by_mass(mass, 1.0)];
  CHECK(hits[1] == 0);
  for (int k : {0, 2, 3}) {
    double se = std::sqrt(mass[k] * (1 - mass[k]) / n);
    CHECK(std::fabs(hits[k] / double(n) - mass[k]) < 4 * se);
  }
}

// ----------------------------------------------------------------------------
//  Log-space utilities
// ----------------------------------------------------------------------------

TEST_CASE("log-space accumulation survives huge dynamic range") {
  // Product of 10^5 factors of 1e-3: linear space underflows, logs do not.
  double log_w = 0.0;
  for (int i = 0; i < 100000; ++i) log_w += std::log(1e-3);
  CHECK(std::isfinite(log_w));
  std::vector<double> xs = {log_w, log_w + std::log(2.0)};
  double lse = log_sum_exp(xs);
  CHECK(lse == doctest::Approx(log_w + std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("effective sample size of equal weights is exactly N") {
  std::vector<double> lw(1000, -7251.25);
  CHECK(effective_sample_size(lw) == 1000.0);
}

// ----------------------------------------------------------------------------
//  Linear algebra and quadrature
// ----------------------------------------------------------------------------

TEST_CASE("dense solver inverts a known system") {
  Matrix a(3, 3);
  a(0, 0) = 2;  a(0, 1) = 1;  a(0, 2) = 0;
  a(1, 0) = 1;  a(1, 1) = 3;  a(1, 2) = 1;
  a(2, 0) = 0;  a(2, 1) = 1;  a(2, 2) = 4;
  // x = (1, -2, 3)  =>  b = A x
  std::vector<double> b = {0.0, -2.0, 10.0};
  auto x = solve_dense(a, b);
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(x[2] == doctest::Approx(3.0).epsilon(1e-12));
  Matrix sing(2, 2);
  sing(0, 0) = 1; sing(0, 1) = 2; sing(1, 0) = 2; sing(1, 1) = 4;
  CHECK_THROWS_AS(solve_dense(sing, {1.0, 1.0}), CoalsisError);
}

TEST_CASE("quadrature reproduces analytic integrals to 1e-10") {
  double i1 = integrate([](double x) { return std::exp(-x); }, 0.0, 5.0, 1e-12);
  CHECK(std::fabs(i1 - (1.0 - std::exp(-5.0))) < 1e-10);
  // log integrand with an integrable spike shape near the right end.
  double i2 = integrate([](double u) { return 1.0 / (1.0 - 0.9 * u); }, 0.0, 1.0, 1e-12);
  CHECK(std::fabs(i2 - (-std::log(0.1) / 0.9)) < 1e-10);
}

// ----------------------------------------------------------------------------
//  Mutation models
// ----------------------------------------------------------------------------

TEST_CASE("stationary law solves pi P = pi") {
  RngStream rng(2024, 0);
  for (int d : {2, 3, 5}) {
    auto m = random_dense(d, 0.7, rng);
    const auto& pi = m.stationary();
    double tot = 0.0;
    for (int j = 0; j < d; ++j) {
      double pj = 0.0;
      for (int i = 0; i < d; ++i) pj += pi[i] * m.dense_matrix()(i, j);
      CHECK(pj == doctest::Approx(pi[j]).epsilon(1e-10));
      tot += pi[j];
    }
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("reducible matrices are rejected") {
  Matrix p(2, 2);
  p(0, 0) = 1.0;  // type 0 never leaves itself
  p(1, 0) = 0.5;
  p(1, 1) = 0.5;
  CHECK_THROWS_WITH_AS(MutationModel::dense(1.0, std::move(p)),
                       doctest::Contains("reducible"), CoalsisError);
}

TEST_CASE("PIM detection and site-flip structure") {
  auto pim = uniform_pim2(1.0);
  CHECK(pim.is_pim());
  CHECK(pim.pim_q()[0] == 0.5);
  CHECK_FALSE(flip_model(1.0).is_pim());

  auto site = MutationModel::site_flip(10.0, 20);
  CHECK(site.type_count() == (int64_t{1} << 20));
  CHECK(site.prob(0b0001, 0b0011) == doctest::Approx(0.05));
  CHECK(site.prob(0b0001, 0b0111) == 0.0);
  CHECK(site.stationary_prob(12345) == doctest::Approx(std::exp2(-20.0)));
  std::vector<std::pair<type_id, double>> row;
  site.transitions_from(0b101, row);
  CHECK(row.size() == 20);
  double tot = 0.0;
  for (auto [t, p] : row) tot += p;
  CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
}

// ----------------------------------------------------------------------------
//  TypeCounts
// ----------------------------------------------------------------------------

TEST_CASE("type-count bookkeeping") {
  auto n = TypeCounts::from_dense({2, 0, 3});
  CHECK(n.size() == 5);
  CHECK(n.distinct_types() == 2);
  CHECK(n.count_of(0) == 2);
  CHECK(n.count_of(1) == 0);
  n.add(1, 2);
  n.add(0, -2);
  CHECK(n.count_of(0) == 0);
  CHECK(n.distinct_types() == 2);
  CHECK(n.size() == 5);
  CHECK_THROWS_AS(n.add(0, -1), CoalsisError);
  CHECK(n.to_dense(3) == std::vector<int>{0, 2, 3});
}

// ----------------------------------------------------------------------------
//  Forward law
// ----------------------------------------------------------------------------

TEST_CASE("forward law: worked 2-type example has four quarter moves") {
  // d=2, theta=1, P = flip, n = (1,1): the four moves (branch 1, branch 2,
  // mutate 1->2, mutate 2->1) each have probability 1/4.
  auto model = flip_model(1.0);
  auto n = TypeCounts::from_dense({1, 1});
  auto dist = forward_distribution(model, n);
  REQUIRE(dist.size() == 4);
  double tot = 0.0;
  for (auto& [mv, p] : dist) {
    CHECK(p == doctest::Approx(0.25).epsilon(1e-14));
    tot += p;
  }
  CHECK(tot == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("forward law sums to one on random models and sizes") {
  RngStream rng(7, 3);
  for (int trial = 0; trial < 20; ++trial) {
    int d = 2 + static_cast<int>(rng.next_u64() % 4);
    auto model = random_dense(d, 0.2 + rng.next_double() * 3.0, rng);
    std::vector<int> counts(d, 0);
    int s = 1 + static_cast<int>(rng.next_u64() % 50);
    for (int k = 0; k < s; ++k) ++counts[rng.next_u64() % d];
    auto n = TypeCounts::from_dense(counts);
    double tot = 0.0;
    for (auto& [mv, p] : forward_distribution(model, n)) {
      CHECK(p >= 0.0);
      tot += p;
    }
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("forward law at a single lineage splits 1/(1+theta) vs theta/(1+theta)") {
  auto model = uniform_pim2(2.0);
  auto n = TypeCounts::from_dense({1, 0});
  double branch = 0.0, mutate = 0.0;
  for (auto& [mv, p] : forward_distribution(model, n))
    (mv.kind == ForwardMove::Kind::Branch ? branch : mutate) += p;
  CHECK(branch == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(mutate == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

// ----------------------------------------------------------------------------
//  PIM: conditionals, backward kernel, closed form
// ----------------------------------------------------------------------------

TEST_CASE("pim conditional worked value: pi[1 | (1,0)] = 0.75") {
  auto model = uniform_pim2(1.0);
  auto n = TypeCounts::from_dense({1, 0});
  CHECK(pim_conditional(model, n, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(pim_conditional(model, n, 1) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("pim backward kernel: worked masses 2/3, 1/4, 1/12 from (2,0)") {
  auto model = uniform_pim2(1.0);
  auto n = TypeCounts::from_dense({2, 0});
  auto dist = pim_backward_distribution(model, n);
  std::map<std::string, double> by_kind;
  double tot = 0.0;
  for (auto& [mv, p] : dist) {
    tot += p;
    if (mv.kind == BackwardMove::Kind::Coalescence)
      by_kind["coal"] += p;
    else if (mv.parent == 0)
      by_kind["self"] += p;
    else
      by_kind["cross"] += p;
  }
  CHECK(tot == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(by_kind["coal"] == doctest::Approx(2.0 / 3.0).epsilon(1e-13));
  CHECK(by_kind["self"] == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(by_kind["cross"] == doctest::Approx(1.0 / 12.0).epsilon(1e-13));
}

TEST_CASE("pim backward kernel sums to one on random models") {
  RngStream rng(99, 0);
  for (int trial = 0; trial < 20; ++trial) {
    int d = 2 + static_cast<int>(rng.next_u64() % 4);
    auto model = random_pim(d, 0.3 + 2.5 * rng.next_double(), rng);
    std::vector<int> counts(d, 0);
    int s = 2 + static_cast<int>(rng.next_u64() % 40);
    for (int k = 0; k < s; ++k) ++counts[rng.next_u64() % d];
    auto n = TypeCounts::from_dense(counts);
    double tot = 0.0;
    for (auto& [mv, p] : pim_backward_distribution(model, n)) tot += p;
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-11));
  }
}

// ----------------------------------------------------------------------------
//  Exact recursion oracle
// ----------------------------------------------------------------------------

TEST_CASE("exact recursion: uniform PIM micro-values 1/2, 3/8, 1/4") {
  auto model = uniform_pim2(1.0);
  ExactSolver solver(model, 2);
  CHECK(solver.probability(TypeCounts::from_dense({1, 0})) ==
        doctest::Approx(0.5).epsilon(1e-13));
  CHECK(solver.probability(TypeCounts::from_dense({2, 0})) ==
        doctest::Approx(3.0 / 8.0).epsilon(1e-13));
  CHECK(solver.probability(TypeCounts::from_dense({1, 1})) ==
        doctest::Approx(0.25).epsilon(1e-13));
}

TEST_CASE("exact recursion agrees with the PIM closed form") {
  RngStream rng(4242, 0);
  for (int trial = 0; trial < 5; ++trial) {
    int d = 2 + static_cast<int>(rng.next_u64() % 2);
    auto model = random_pim(d, 0.3 + 2.0 * rng.next_double(), rng);
    ExactSolver solver(model, 8);
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<int> counts(d, 0);
      int s = 1 + static_cast<int>(rng.next_u64() % 8);
      for (int k = 0; k < s; ++k) ++counts[rng.next_u64() % d];
      auto n = TypeCounts::from_dense(counts);
      CHECK(solver.log_probability(n) ==
            doctest::Approx(pim_log_probability(model, n)).epsilon(1e-10));
    }
  }
}

TEST_CASE("exact recursion satisfies the sampling-consistency identity") {
  // p(n) = sum_i pi[i|n] p(n) is circular; instead check the identity
  // pi[i|n] = (n_i+1)/(s+1) p(n+e_i)/p(n) sums to 1 over i for non-PIM P.
  RngStream rng(555, 1);
  auto model = random_dense(3, 1.3, rng);
  ExactSolver solver(model, 7);
  for (int rep = 0; rep < 8; ++rep) {
    std::vector<int> counts(3, 0);
    int s = 2 + static_cast<int>(rng.next_u64() % 5);
    for (int k = 0; k < s; ++k) ++counts[rng.next_u64() % 3];
    auto n = TypeCounts::from_dense(counts);
    double p_n = solver.probability(n);
    double tot = 0.0;
    for (int i = 0; i < 3; ++i) {
      auto up = n;
      up.add(i, +1);
      tot += (n.count_of(i) + 1) / (double(s) + 1.0) * solver.probability(up) / p_n;
    }
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("path numerators: micro-values against hand algebra") {
  auto model = uniform_pim2(1.0);
  // From (2,0): coalescence numerator (n_0 - 1)/(s - 1 + theta) = 1/2.
  auto n20 = TypeCounts::from_dense({2, 0});
  CHECK(log_path_numerator(model, n20, BackwardMove::coalescence(0)) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-13));
  // From (1,1): mutation 0 -> 1 numerator theta/(s-1+theta) * P_01 * (n_0+1)/s
  //  = (1/2) * (1/2) * 1 = 1/4.
  auto n11 = TypeCounts::from_dense({1, 1});
  CHECK(log_path_numerator(model, n11, BackwardMove::mutation(0, 1)) ==
        doctest::Approx(std::log(0.25)).epsilon(1e-13));
  // Self-loop from (2,0): parent count (n_0 + 1 - 1)/s = 1, so theta/(s-1+theta)*P_00*1 = 1/4.
  CHECK(log_path_numerator(model, n20, BackwardMove::mutation(0, 0)) ==
        doctest::Approx(std::log(0.25)).epsilon(1e-13));
  // Root factor is the stationary law.
  CHECK(log_root_factor(model, TypeCounts::from_dense({1, 0})) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-13));
}

TEST_CASE("forward simulation matches exact probabilities at n=3 (10^5 sims)") {
  auto model = uniform_pim2(1.0);
  ExactSolver solver(model, 3);
  std::map<std::vector<int>, int> hits;
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) {
    RngStream rng(31337, static_cast<uint64_t>(r));
    auto states = forward_simulate(model, rng, {3});
    ++hits[states[0].to_dense(2)];
  }
  for (auto& [counts, hit] : hits) {
    double p = solver.probability(TypeCounts::from_dense(counts));
    double se = std::sqrt(p * (1 - p) / reps);
    CHECK(std::fabs(hit / double(reps) - p) < 3 * se);
  }
  // All four level-3 states should appear.
  CHECK(hits.size() == 4);
}

TEST_CASE("nested subsampling preserves totals and support") {
  RngStream rng(11, 0);
  auto model = MutationModel::site_flip(5.0, 8);
  auto states = forward_simulate(model, rng, {200});
  auto sub = subsample_counts(states[0], 50, rng);
  CHECK(sub.size() == 50);
  for (auto [t, c] : sub.entries())
    CHECK(static_cast<uint32_t>(states[0].count_of(t)) >= c);
}
