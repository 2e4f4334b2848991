// ============================================================================
//  coalsis/engine.hpp
//
//  The sequential importance sampling engine.  Generic over a Proposal
//  backend providing
//
//    types   State, Move, Candidate { move, mass, log_numerator }, Scratch
//    methods make_scratch()
//            enumerate(state, scratch, out) -> total mass Z
//            static is_terminal(state) / static apply(state, move)
//            log_terminal(state)
//    plus    State::size()  -- the remaining lineage count.
//
//  Replicates advance in lockstep through lineage levels n, n-1, ..., 1: a
//  level step runs each replicate until its next coalescence (mutation-type
//  moves do not change the lineage count).  Weights accumulate the one-step
//  costs log q~ - log(mass / Z) in log space; the terminal factor is applied
//  at the root.  Between levels the engine can record weight-spread
//  diagnostics and resample (systematic, offspring weight = parent mean,
//  which keeps the estimator unbiased).
//
//  Determinism contract: results are byte-identical for a fixed seed across
//  worker counts.  Each replicate owns a counter-based RNG stream keyed by
//  (seed, replicate index, generation); the generation index advances at
//  every resampling barrier, which re-keys offspring streams independently
//  of their ancestors' consumption.  Workers process disjoint contiguous
//  index ranges, and every reduction and every resampling decision runs
//  single-threaded in replicate-index order.
// ============================================================================
#pragma once

#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/logspace.hpp"
#include "coalsis/resample.hpp"
#include "coalsis/rng.hpp"

namespace coalsis {

struct ResamplePolicy {
  enum class Kind { None, EssFraction, AtLevel };
  Kind kind = Kind::None;
  double ess_fraction = 0.0;  // EssFraction: trigger when ESS < fraction * R
  int64_t level = 0;          // AtLevel: trigger when this many lineages remain
  int64_t target = 0;         // AtLevel: replicate count afterwards

  static ResamplePolicy none() { return {}; }
  static ResamplePolicy ess(double fraction) {
    check(fraction > 0.0 && fraction <= 1.0, "ResamplePolicy: ESS fraction outside (0,1]");
    return {Kind::EssFraction, fraction, 0, 0};
  }
  static ResamplePolicy at_level(int64_t level, int64_t target) {
    check(level >= 2 && target >= 1, "ResamplePolicy: bad level/target");
    return {Kind::AtLevel, 0.0, level, target};
  }
};

struct EngineOptions {
  int64_t replicates = 1000;
  uint64_t seed = 1;
  int workers = 1;
  ResamplePolicy resample{};
  // > 0: replicates exceeding this many cumulative mutation-type moves are
  // discarded (weight zero, simulation stopped).  Guards proposals that can
  // wander through unboundedly many mutations.
  int64_t max_mutations = 0;
  bool record_levels = false;
};

struct LevelStats {
  int64_t level = 0;          // lineages remaining when recorded
  double rel_variance = 0;    // sample variance of w_i / mean(w)
  double log_mean = kLogZero; // log of the mean stopped weight at this level
  double ess = 0;             // (sum w)^2 / sum w^2
  int64_t alive = 0;
};

struct RunResult {
  double log_estimate = kLogZero;
  double rel_se = 0.0;  // sqrt(Var(w/mean)/R): i.i.d.-valid (no-resampling) form
  int64_t replicates = 0;
  int64_t discarded = 0;
  int64_t resample_events = 0;
  int64_t coalescence_draws = 0;  // schedule accounting: alive replicates per level
  int64_t proposal_steps = 0;     // every enumerated draw, mutation moves included
  std::vector<LevelStats> levels;
};

struct TruncatedResult {
  double log_mean_cost = kLogZero;  // over replicates that survived all steps
  double rel_se = 0.0;              // relative SE of the mean cost (i.i.d. replicates)
  int64_t steps_each = 0;
  int64_t included = 0;
  int64_t absorbed_early = 0;  // hit the root before completing; excluded
};

template <class Proposal>
class SisEngine {
 public:
  using State = typename Proposal::State;
  using Candidate = typename Proposal::Candidate;
  using Scratch = typename Proposal::Scratch;

  explicit SisEngine(const Proposal& proposal) : proposal_(&proposal) {}

  // Full backward run from `start` to the root.
  RunResult run(const State& start, const EngineOptions& opt) const {
    check(!Proposal::is_terminal(start), "SisEngine::run: start state is already terminal");
    check(opt.replicates >= 1, "SisEngine::run: need at least one replicate");
    const int64_t n0 = start.size();

    std::vector<Rep> reps;
    reps.reserve(static_cast<size_t>(opt.replicates));
    for (int64_t i = 0; i < opt.replicates; ++i)
      reps.push_back(Rep{start, RngStream(opt.seed, static_cast<uint64_t>(i), 0), 0.0, 0, true});
    uint64_t generation = 0;

    std::vector<WorkerCtx> ctx = make_contexts(opt.workers);
    RunResult res;
    std::vector<double> log_w;  // reused reduction buffer

    for (int64_t level = n0; level >= 2; --level) {
      if (opt.record_levels) res.levels.push_back(level_stats(level, reps, log_w));
      maybe_resample(level, opt, reps, generation, res);
      for (const Rep& r : reps) res.coalescence_draws += r.alive ? 1 : 0;
      parallel_over(static_cast<int64_t>(reps.size()), opt.workers, [&](int w, int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
          if (reps[i].alive) advance_one_level(reps[i], ctx[w], opt.max_mutations);
      });
      for (const WorkerCtx& c : ctx) res.proposal_steps += c.steps;
      for (WorkerCtx& c : ctx) c.steps = 0;
    }

    collect_weights(reps, log_w);
    for (size_t i = 0; i < reps.size(); ++i)
      if (reps[i].alive) log_w[i] += proposal_->log_terminal(reps[i].state);
    if (opt.record_levels) res.levels.push_back(level_stats(1, reps, log_w, &log_w));

    res.replicates = static_cast<int64_t>(reps.size());
    for (const Rep& r : reps) res.discarded += r.alive ? 0 : 1;
    res.log_estimate = log_mean_exp(log_w);
    res.rel_se = relative_se(log_w, res.log_estimate);
    return res;
  }

  // Runs exactly floor(t * ||start||) proposal steps per replicate (moves of
  // every kind count) and reports the mean accumulated cost product over the
  // replicates that did not reach the root early.  No terminal factor.
  TruncatedResult truncated_run(const State& start, double t, const EngineOptions& opt) const {
    check(t > 0.0, "truncated_run: t must be positive");
    const auto steps = static_cast<int64_t>(std::floor(t * static_cast<double>(start.size())));
    check(steps >= 1, "truncated_run: floor(t n) must be at least one step");

    std::vector<Rep> reps;
    reps.reserve(static_cast<size_t>(opt.replicates));
    for (int64_t i = 0; i < opt.replicates; ++i)
      reps.push_back(Rep{start, RngStream(opt.seed, static_cast<uint64_t>(i), 0), 0.0, 0, true});

    std::vector<WorkerCtx> ctx = make_contexts(opt.workers);
    parallel_over(static_cast<int64_t>(reps.size()), opt.workers, [&](int w, int64_t lo, int64_t hi) {
      for (int64_t i = lo; i < hi; ++i) {
        Rep& r = reps[i];
        begin_replicate(r, ctx[w]);
        for (int64_t k = 0; k < steps && r.alive; ++k) {
          if (Proposal::is_terminal(r.state)) {
            r.alive = false;  // absorbed before completing the step budget
            break;
          }
          step_once(r, ctx[w], opt.max_mutations);
        }
      }
    });

    TruncatedResult res;
    res.steps_each = steps;
    std::vector<double> log_w;
    for (const Rep& r : reps) {
      if (r.alive) {
        log_w.push_back(r.log_w);
        ++res.included;
      } else {
        ++res.absorbed_early;
      }
    }
    res.log_mean_cost = log_mean_exp(log_w);
    res.rel_se = relative_se(log_w, res.log_mean_cost);
    return res;
  }

 private:
  struct Rep {
    State state;
    RngStream rng;
    double log_w;
    int64_t mutations;
    bool alive;
  };

  struct WorkerCtx {
    Scratch scratch;
    std::vector<Candidate> cands;
    std::vector<double> masses;
    int64_t steps = 0;
  };

  std::vector<WorkerCtx> make_contexts(int workers) const {
    check(workers >= 1, "SisEngine: need at least one worker");
    std::vector<WorkerCtx> ctx;
    ctx.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) ctx.push_back(WorkerCtx{proposal_->make_scratch(), {}, {}, 0});
    return ctx;
  }

  // One proposal draw: enumerate, sample, accumulate cost, apply.
  void step_once(Rep& r, WorkerCtx& ctx, int64_t max_mutations) const {
    const double z = proposal_->enumerate(r.state, ctx.scratch, ctx.cands);
    ctx.masses.clear();
    for (const Candidate& c : ctx.cands) ctx.masses.push_back(c.mass);
    const Candidate& pick = ctx.cands[static_cast<size_t>(r.rng.next_index_by_mass(ctx.masses, z))];
    r.log_w += pick.log_numerator - std::log(pick.mass) + std::log(z);
    const int64_t before = r.state.size();
    Proposal::apply(r.state, pick.move);
    // Proposals that keep incremental per-replicate state update it here.
    if constexpr (requires(const Proposal& p, Scratch& s, const State& st,
                           const decltype(pick.move)& m) {
                    p.on_applied(s, st, m);
                  })
      proposal_->on_applied(ctx.scratch, r.state, pick.move);
    ++ctx.steps;
    if (r.state.size() == before) {  // mutation-type move
      ++r.mutations;
      if (max_mutations > 0 && r.mutations > max_mutations) {
        r.alive = false;
        r.log_w = kLogZero;
      }
    }
  }

  // Advance a replicate to the next coalescence (one lineage level).
  void advance_one_level(Rep& r, WorkerCtx& ctx, int64_t max_mutations) const {
    begin_replicate(r, ctx);
    const int64_t target = r.state.size() - 1;
    while (r.alive && r.state.size() != target) step_once(r, ctx, max_mutations);
  }

  // A worker context may have served another replicate since this one last
  // advanced; proposals with cached per-replicate state must drop it.
  void begin_replicate(Rep& r, WorkerCtx& ctx) const {
    if constexpr (requires(const Proposal& p, Scratch& s, const State& st) {
                    p.on_replicate_begin(s, st);
                  })
      proposal_->on_replicate_begin(ctx.scratch, r.state);
  }

  void collect_weights(const std::vector<Rep>& reps, std::vector<double>& log_w) const {
    log_w.clear();
    for (const Rep& r : reps) log_w.push_back(r.alive ? r.log_w : kLogZero);
  }

  LevelStats level_stats(int64_t level, const std::vector<Rep>& reps, std::vector<double>& buf,
                         const std::vector<double>* ready = nullptr) const {
    if (ready == nullptr) collect_weights(reps, buf);
    const std::vector<double>& log_w = ready ? *ready : buf;
    LevelStats st;
    st.level = level;
    for (const Rep& r : reps) st.alive += r.alive ? 1 : 0;
    st.ess = effective_sample_size(log_w);
    const double log_mean = log_mean_exp(log_w);
    st.log_mean = log_mean;
    if (log_mean != kLogZero) {
      std::vector<double> norm(log_w.size());
      for (size_t i = 0; i < log_w.size(); ++i) norm[i] = log_w[i] - log_mean;
      st.rel_variance = variance_of_exp(norm);
    }
    return st;
  }

  void maybe_resample(int64_t level, const EngineOptions& opt, std::vector<Rep>& reps,
                      uint64_t& generation, RunResult& res) const {
    const ResamplePolicy& p = opt.resample;
    int64_t target = 0;
    if (p.kind == ResamplePolicy::Kind::AtLevel) {
      if (level != p.level) return;
      target = p.target;
    } else if (p.kind == ResamplePolicy::Kind::EssFraction) {
      std::vector<double> log_w;
      collect_weights(reps, log_w);
      const double ess = effective_sample_size(log_w);
      if (ess >= p.ess_fraction * static_cast<double>(reps.size())) return;
      target = static_cast<int64_t>(reps.size());
    } else {
      return;
    }
    resample(reps, target, opt.seed, generation, res);
  }

  void resample(std::vector<Rep>& reps, int64_t target, uint64_t seed, uint64_t& generation,
                RunResult& res) const {
    double hi = kLogZero;
    for (const Rep& r : reps)
      if (r.alive) hi = std::max(hi, r.log_w);
    if (hi == kLogZero) return;  // every replicate discarded; nothing to redistribute

    std::vector<double> mass(reps.size(), 0.0);
    double log_sum = kLogZero;
    for (size_t i = 0; i < reps.size(); ++i) {
      if (!reps[i].alive) continue;
      mass[i] = std::exp(reps[i].log_w - hi);
      log_sum = log_add(log_sum, reps[i].log_w);
    }
    // Offspring all carry the parents' mean weight, so the weighted mean over
    // the new population is an unbiased continuation of the old one.
    const double log_mean = log_sum - std::log(static_cast<double>(reps.size()));

    RngStream resample_rng(seed, ~uint64_t{0}, generation);
    const std::vector<int64_t> counts = systematic_counts(mass, target, resample_rng.next_double());
    ++generation;

    std::vector<Rep> next;
    next.reserve(static_cast<size_t>(target));
    for (size_t i = 0; i < reps.size(); ++i)
      for (int64_t c = 0; c < counts[i]; ++c) {
        const auto id = static_cast<uint64_t>(next.size());
        next.push_back(Rep{reps[i].state, RngStream(seed, id, generation), log_mean,
                           reps[i].mutations, true});
      }
    reps = std::move(next);
    ++res.resample_events;
  }

  static double relative_se(const std::vector<double>& log_w, double log_mean) {
    if (log_mean == kLogZero || log_w.size() < 2) return 0.0;
    std::vector<double> norm(log_w.size());
    for (size_t i = 0; i < log_w.size(); ++i) norm[i] = log_w[i] - log_mean;
    return std::sqrt(variance_of_exp(norm) / static_cast<double>(log_w.size()));
  }

  template <class Fn>
  static void parallel_over(int64_t count, int workers, Fn&& fn) {
    if (workers <= 1 || count <= 1) {
      fn(0, 0, count);
      return;
    }
    const int w = static_cast<int>(std::min<int64_t>(workers, count));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(w));
    for (int k = 0; k < w; ++k) {
      const int64_t lo = count * k / w, hi = count * (k + 1) / w;
      pool.emplace_back([&fn, k, lo, hi] { fn(k, lo, hi); });
    }
    for (std::thread& t : pool) t.join();
  }

  const Proposal* proposal_;
};

}  // namespace coalsis
