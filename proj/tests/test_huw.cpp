#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "coalsis/engine.hpp"
#include "coalsis/huw.hpp"
#include "coalsis/ism.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace coalsis;

namespace {

IsmState state_of(std::vector<int64_t> counts, std::vector<std::string> bits,
                  std::vector<double> locations) {
  IsmMatrix m;
  m.counts = std::move(counts);
  m.bits = std::move(bits);
  m.locations = std::move(locations);
  return IsmState::from_matrix(m);
}

// Four-leaf worked sample: "11":1, "01":2, "00":1.  Column 0 is a singleton of
// row 0 (d=1) and column 1 is carried by three of four samples (d = s-1 = 3),
// so R(4,1)=0 and R(4,3)=1 give hand-computable votes for any driving theta:
//   W_0 = 0 + 1/3,  W_1 = 2/3 + 2/3,  W_2 = 1/3 + 0.
IsmState four_leaf() {
  return state_of({1, 2, 1}, {"11", "01", "00"}, {0.25, 0.75});
}

EngineOptions options(int64_t replicates, uint64_t seed, int workers = 1) {
  EngineOptions opt;
  opt.replicates = replicates;
  opt.seed = seed;
  opt.workers = workers;
  return opt;
}

}  // namespace

TEST_CASE("huw table matches direct summation for all sizes up to 200") {
  for (double theta : {0.7, 4.9}) {
    const HuwTable table(200, theta);
    double worst = 0.0;
    for (int64_t s = 2; s <= 200; ++s) {
      for (int64_t d = 1; d <= s - 1; ++d) {
        const HuwSums direct = huw_direct_sums(s, d, theta);
        const double a = table.numerator_sum(s, d);
        const double b = table.denominator_sum(s, d);
        if (direct.numerator == 0.0) {
          CHECK(a == 0.0);
        } else {
          worst = std::max(worst,
                           std::abs(a - direct.numerator) / direct.numerator);
        }
        worst = std::max(worst,
                         std::abs(b - direct.denominator) / direct.denominator);
      }
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("huw sums collapse to the single k=2 term when d = s-1") {
  const double theta = 1.3;
  const HuwTable table(64, theta);
  for (int64_t s : {3, 7, 20, 64}) {
    const double t2 = 1.0 / static_cast<double>(s - 1);
    const double b = t2 / (1.0 + theta);
    const double a = huw_numerator_weight(s - 1) * t2 /
                     ((1.0 + theta) * static_cast<double>(s - 2));
    CHECK(table.denominator_sum(s, s - 1) == doctest::Approx(b).epsilon(1e-14));
    CHECK(table.numerator_sum(s, s - 1) == doctest::Approx(a).epsilon(1e-14));
    CHECK(table.ratio(s, s - 1) == doctest::Approx(1.0).epsilon(1e-13));
  }
  // s=2, d=1: the only admissible pair at the smallest size.
  CHECK(table.ratio(2, 1) == 0.0);
}

TEST_CASE("huw ratios and brackets stay inside [0,1] across the table") {
  for (double theta : {0.5, 4.9}) {
    const HuwTable table(150, theta);
    for (int64_t s = 2; s <= 150; ++s) {
      for (int64_t d = 1; d <= s - 1; ++d) {
        const double a = table.numerator_sum(s, d);
        const double b = table.denominator_sum(s, d);
        REQUIRE(std::isfinite(a));
        REQUIRE(std::isfinite(b));
        REQUIRE(a >= 0.0);
        REQUIRE(b > 0.0);
        const double r = table.ratio(s, d);
        REQUIRE(r >= 0.0);
        REQUIRE(r <= 1.0 + 1e-14);
        REQUIRE(1.0 - r >= -1e-14);  // bracketed factor in the non-carrier branch
      }
    }
  }
}

TEST_CASE("huw table persistence round-trips bit-exactly") {
  const HuwTable table(120, 4.90);
  std::ostringstream out;
  table.save(out);
  const std::string bytes = out.str();

  std::istringstream in(bytes);
  const HuwTable loaded = HuwTable::load(in, "buffer");
  CHECK(loaded.s_max() == 120);
  CHECK(loaded.theta() == 4.90);
  CHECK(table.bit_identical(loaded));

  std::istringstream bad_magic(std::string("XXXX") + bytes.substr(4));
  CHECK_THROWS_WITH_AS(HuwTable::load(bad_magic, "buffer"),
                       doctest::Contains("not a proposal table cache"),
                       CoalsisError);

  std::string wrong_version = bytes;
  wrong_version[4] = 9;  // bump the version field
  std::istringstream bad_version(wrong_version);
  CHECK_THROWS_WITH_AS(HuwTable::load(bad_version, "buffer"),
                       doctest::Contains("cache version"), CoalsisError);

  std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_WITH_AS(HuwTable::load(truncated, "buffer"),
                       doctest::Contains("truncated"), CoalsisError);
}

TEST_CASE("huw table misses raise errors demanding re-precompute") {
  const HuwTable table(50, 2.0);
  CHECK(table.covers(50));
  CHECK(!table.covers(51));
  CHECK_THROWS_WITH_AS(table.ratio(51, 3),
                       doctest::Contains("re-run the precompute"),
                       CoalsisError);
  CHECK_THROWS_AS(table.ratio(1, 1), CoalsisError);
  CHECK_THROWS_AS(table.ratio(10, 10), CoalsisError);
  CHECK_THROWS_AS(table.ratio(10, 0), CoalsisError);
}

TEST_CASE("huw_u evaluates both branches through the table") {
  const double theta = 1.0;
  const HuwTable table(10, theta);
  const IsmState st = four_leaf();

  CHECK(huw_u(st, 0, 0, table) == doctest::Approx(0.0));           // carrier, d=1
  CHECK(huw_u(st, 0, 1, table) == doctest::Approx(1.0 / 3.0));      // carrier, d=3
  CHECK(huw_u(st, 1, 0, table) == doctest::Approx(2.0 / 3.0));      // non-carrier
  CHECK(huw_u(st, 1, 1, table) == doctest::Approx(2.0 / 3.0));      // carrier, d=3
  CHECK(huw_u(st, 2, 0, table) == doctest::Approx(1.0 / 3.0));      // non-carrier
  CHECK(huw_u(st, 2, 1, table) == doctest::Approx(0.0));            // non-carrier, d=s-1

  // A mid-range d: cross-check the table against direct sums through huw_u.
  const IsmState mid = state_of({2, 3}, {"10", "01"}, {0.2, 0.8});
  const double expect =
      (2.0 / 2.0) * huw_direct_sums(5, 2, theta).ratio();
  CHECK(huw_u(mid, 0, 0, table) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("huw proposal reproduces the four-leaf hand enumeration") {
  const double theta = 1.7;  // model theta; votes here do not depend on it
  const HuwTable table(10, 0.9);
  IsmHuwProposal prop(&table, theta);
  auto sc = prop.make_scratch();
  std::vector<IsmHuwProposal::Candidate> cands;

  const IsmState st = four_leaf();
  const double z = prop.enumerate(st, sc, cands);
  REQUIRE(cands.size() == 2);
  CHECK(cands[0].move.kind == IsmMove::Kind::Coalesce);
  CHECK(cands[0].move.row_id == 1);
  CHECK(cands[0].mass == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(cands[0].log_numerator ==
        doctest::Approx(std::log(1.0 / (3.0 + theta))));
  CHECK(cands[1].move.kind == IsmMove::Kind::RemoveMerge);
  CHECK(cands[1].move.row_id == 0);
  CHECK(cands[1].move.merge_row_id == 1);
  CHECK(cands[1].mass == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(cands[1].log_numerator ==
        doctest::Approx(std::log(theta * 3.0 / (4.0 * (3.0 + theta)))));
  CHECK(z == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
  CHECK(prop.counters().fallback_steps == 0);
  CHECK(prop.counters().step_eval_ops == 2);
  CHECK(prop.counters().maintenance_ops > 0);  // one full recompute
}

TEST_CASE("huw zero-vote and two-lineage steps substitute SD masses") {
  const double theta = 1.0;
  const HuwTable table(10, theta);
  IsmHuwProposal prop(&table, theta);
  auto sc = prop.make_scratch();
  std::vector<IsmHuwProposal::Candidate> cands;

  // Three-leaf worked sample: the singleton carrier's vote is exactly zero
  // (R(3,1)=0 and its only other column has d=s-1), so the step falls back.
  const IsmState st = state_of({1, 2}, {"1", "0"}, {0.5});
  const double z = prop.enumerate(st, sc, cands);
  REQUIRE(cands.size() == 2);
  CHECK(cands[0].mass == doctest::Approx(2.0));  // SD coalescence mass n_j
  CHECK(cands[1].mass == doctest::Approx(1.0));  // SD removal mass
  CHECK(z == doctest::Approx(3.0));
  CHECK(prop.counters().fallback_steps == 1);

  // Two lineages: documented endgame substitute.
  prop.reset_counters();
  const IsmState pair = state_of({1, 1}, {"1", "0"}, {0.5});
  prop.on_replicate_begin(sc, pair);
  prop.enumerate(pair, sc, cands);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].mass == doctest::Approx(1.0));
  CHECK(prop.counters().fallback_steps == 1);
}

TEST_CASE("huw incremental refresh equals full recompute along paths") {
  const double theta = 3.0;
  const HuwTable table(40, theta);
  IsmHuwProposal prop(&table, theta);
  std::vector<IsmHuwProposal::Candidate> inc, fresh;

  for (uint64_t seed : {11u, 12u, 13u, 14u, 15u}) {
    RngStream rng(seed, 0, 0);
    IsmState st = ism_simulate(30, theta, rng);
    auto sc = prop.make_scratch();
    prop.on_replicate_begin(sc, st);
    int64_t removals = 0;
    while (!IsmHuwProposal::is_terminal(st)) {
      const double z_inc = prop.enumerate(st, sc, inc);
      auto sc_fresh = prop.make_scratch();
      const double z_fresh = prop.enumerate(st, sc_fresh, fresh);
      REQUIRE(inc.size() == fresh.size());
      CHECK(z_inc == doctest::Approx(z_fresh).epsilon(1e-12));
      for (size_t i = 0; i < inc.size(); ++i) {
        CHECK(inc[i].move.kind == fresh[i].move.kind);
        CHECK(inc[i].mass == doctest::Approx(fresh[i].mass).epsilon(1e-12));
      }
      std::vector<double> masses;
      for (const auto& c : inc) masses.push_back(c.mass);
      const auto pick =
          static_cast<size_t>(rng.next_index_by_mass(masses, z_inc));
      IsmHuwProposal::apply(st, inc[pick].move);
      prop.on_applied(sc, st, inc[pick].move);
      if (inc[pick].move.kind != IsmMove::Kind::Coalesce) ++removals;
    }
    CHECK(st.column_count() == 0);
    CHECK(removals >= 1);  // paths at theta=3 carry mutations
  }
}

TEST_CASE("huw estimates agree with the exact solver") {
  RngStream rng(77, 3, 0);  // same fixture as the ism engine test
  IsmState sample = ism_simulate(6, 1.0, rng);
  REQUIRE(sample.column_count() <= 6);
  const double theta = 1.0;
  const double exact = ism_exact_probability(sample, theta);

  const HuwTable table(10, theta);
  IsmHuwProposal prop(&table, theta);
  SisEngine<IsmHuwProposal> engine(prop);
  const RunResult res = engine.run(sample, options(20000, 11));
  CHECK(res.discarded == 0);
  CHECK(res.proposal_steps ==
        20000 * (sample.size() - 1 + sample.column_count()));
  const double est = std::exp(res.log_estimate);
  CHECK(std::abs(est - exact) <= 4.0 * res.rel_se * est + 1e-12 * est);
}

TEST_CASE("huw and sd estimates agree within three standard errors") {
  RngStream rng(500, 1, 0);
  IsmState sample = ism_simulate(25, 2.0, rng);
  const double theta = 2.0;
  const int64_t reps = 20000;

  IsmProposal sd(IsmProposalKind::SD, theta);
  SisEngine<IsmProposal> sd_engine(sd);
  const RunResult rs = sd_engine.run(sample, options(reps, 21));

  const HuwTable table(30, watterson_theta(sample.column_count(), 25));
  IsmHuwProposal huw(&table, theta);
  SisEngine<IsmHuwProposal> huw_engine(huw);
  const RunResult rh = huw_engine.run(sample, options(reps, 22));

  const double es = std::exp(rs.log_estimate);
  const double eh = std::exp(rh.log_estimate);
  const double spread = 3.0 * std::sqrt(std::pow(rs.rel_se * es, 2) +
                                        std::pow(rh.rel_se * eh, 2));
  CHECK(std::abs(es - eh) <= spread);
}

TEST_CASE("huw direct mode reproduces table-mode masses and counts terms") {
  const double theta = 2.4;
  const HuwTable table(40, theta);
  IsmHuwProposal by_table(&table, theta);
  IsmHuwProposal by_sums(nullptr, theta, HuwEvalMode::Direct, theta);

  RngStream rng(9, 0, 0);
  const IsmState st = ism_simulate(18, theta, rng);
  auto sc_t = by_table.make_scratch();
  auto sc_d = by_sums.make_scratch();
  std::vector<IsmHuwProposal::Candidate> ct, cd;
  const double zt = by_table.enumerate(st, sc_t, ct);
  const double zd = by_sums.enumerate(st, sc_d, cd);
  REQUIRE(ct.size() == cd.size());
  CHECK(zt == doctest::Approx(zd).epsilon(1e-11));
  for (size_t i = 0; i < ct.size(); ++i)
    CHECK(ct[i].mass == doctest::Approx(cd[i].mass).epsilon(1e-11));
  CHECK(by_sums.counters().direct_term_ops > 0);
  CHECK(by_table.counters().direct_term_ops == 0);
}

TEST_CASE("huw runs are byte-identical across worker counts with counters") {
  RngStream rng(31, 2, 0);
  const IsmState sample = ism_simulate(14, 1.5, rng);
  const double theta = 1.5;
  const HuwTable table(20, theta);

  IsmHuwProposal p1(&table, theta);
  SisEngine<IsmHuwProposal> e1(p1);
  const RunResult r1 = e1.run(sample, options(600, 7, 1));

  IsmHuwProposal p3(&table, theta);
  SisEngine<IsmHuwProposal> e3(p3);
  const RunResult r3 = e3.run(sample, options(600, 7, 3));

  CHECK(r1.log_estimate == r3.log_estimate);
  CHECK(r1.proposal_steps == r3.proposal_steps);
  const IsmHuwCounters c1 = p1.counters();
  const IsmHuwCounters c3 = p3.counters();
  CHECK(c1.step_eval_ops == c3.step_eval_ops);
  CHECK(c1.refresh_ops == c3.refresh_ops);
  CHECK(c1.maintenance_ops == c3.maintenance_ops);
  CHECK(c1.fallback_steps == c3.fallback_steps);

  p1.reset_counters();
  const IsmHuwCounters zeroed = p1.counters();
  CHECK(zeroed.per_step_evaluation_ops() == 0);
  CHECK(zeroed.maintenance_ops == 0);
}
