#pragma once
// HUW backward proposal for the infinite-sites model.
//
// The proposal mass for a backward move acting on haplotype row j is the vote
// total W_j = sum_w u_{j,w}(theta) over all current mutation columns w, where
//
//   u_{j,w} = (n_j / d_w) R(s, d_w)              when row j carries w,
//   u_{j,w} = n_j / (s - d_w) (1 - R(s, d_w))    when it does not,
//
// with R(s,d) = A(s,d) / B(s,d) the ratio of two combinatorial sums over
// k = 2..s-d+1 that depend only on (s, d_w) and the driving mutation rate.
// Those sums are precomputed once into a triangular HuwTable (reusable across
// data sets), making each u evaluation O(1); the whole proposal then only
// needs a full recompute after a coalescence and an O(r+h) refresh after a
// mutation removal.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <utility>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/ism.hpp"

namespace coalsis {

// The printed numerator weight "d - 1" is read as (d_w - 1): under that
// reading the k == s term (reachable only when d_w == 1) carries a zero
// numerator against its (s - k) pole, so A(s, 1) == 0 exactly and every sum is
// finite without special conventions.  Compiling with -DCOALSIS_HUW_BRACKET_ALT
// flips the reading to d_w for sensitivity checks; the pole term is then
// excluded outright, since it would otherwise divide by zero.
inline constexpr bool kHuwBracketAlt =
#ifdef COALSIS_HUW_BRACKET_ALT
    true;
#else
    false;
#endif

inline double huw_numerator_weight(int64_t d) {
  return kHuwBracketAlt ? static_cast<double>(d) : static_cast<double>(d - 1);
}

// Incremental vote maintenance is subtractive, so a vote that has cancelled
// many orders of magnitude below the level's largest is indistinguishable
// from floating-point residue.  In particular a true zero vote (a row whose
// only columns are singletons, whose numerator weight is exactly 0) shows up
// as ~1e-16 noise and would dodge the degeneracy fallback.  Votes below this
// fraction of the level maximum are re-derived from a fresh recompute before
// they are trusted.
inline constexpr double kHuwVoteResidueGuard = 1e-6;

struct HuwSums {
  double numerator = 0.0;
  double denominator = 0.0;
  double ratio() const { return numerator / denominator; }
};

// Direct log-space evaluation of the two inner sums for one (s, d) pair; the
// binomial ratio C(s-d-1, k-2) / C(s-1, k-1) is taken through lgamma term by
// term.  Serves as the independent oracle for the table and as the
// non-precomputed evaluation path whose cost the experiments compare against.
// When `ops` is given it is incremented once per inner-loop term.
inline HuwSums huw_direct_sums(int64_t s, int64_t d, double theta,
                               int64_t* ops = nullptr) {
  check(s >= 2, "huw_direct_sums: sample size must be at least 2");
  check(d >= 1 && d <= s - 1,
        format_msg("huw_direct_sums: mutant count %lld outside [1, %lld]",
                   static_cast<long long>(d), static_cast<long long>(s - 1)));
  check(theta > 0.0, "huw_direct_sums: theta must be positive");
  const double lg_top = std::lgamma(static_cast<double>(s - d));
  const double lg_bot = std::lgamma(static_cast<double>(s));
  const double weight = huw_numerator_weight(d);
  HuwSums out;
  for (int64_t k = 2; k <= s - d + 1; ++k) {
    const double log_ratio =
        lg_top - std::lgamma(static_cast<double>(k - 1)) -
        std::lgamma(static_cast<double>(s - d - k + 2)) -
        (lg_bot - std::lgamma(static_cast<double>(k)) -
         std::lgamma(static_cast<double>(s - k + 1)));
    const double term = std::exp(log_ratio) /
                        (static_cast<double>(k - 1) + theta);
    out.denominator += term;
    if (k < s) out.numerator += weight * term / static_cast<double>(s - k);
    if (ops) ++*ops;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Precomputed table
// ---------------------------------------------------------------------------

class HuwTable {
 public:
  // Builds the triangular table for all s in [2, s_max], d in [1, s-1].  The
  // inner terms follow the exact ratio recurrence
  //   t_2 = 1/(s-1),  t_{k+1} = t_k * (s-d-k+1)/(k-1) * k/(s-k),
  // evaluated in linear space: every term is a ratio of binomials bounded by
  // s, terms rise to a single peak and then fall, and the sums are of positive
  // terms, so there is no overflow and no cancellation; tail underflow only
  // drops terms below 1e-300 that are negligible against the retained peak.
  HuwTable(int64_t s_max, double theta) : s_max_(s_max), theta_(theta) {
    check(s_max >= 2, "HuwTable: s_max must be at least 2");
    check(theta > 0.0, "HuwTable: theta must be positive");
    const size_t cells = entry_count(s_max);
    a_.resize(cells);
    b_.resize(cells);
    std::vector<double> inv_k(static_cast<size_t>(s_max) + 1, 0.0);
    for (int64_t i = 1; i <= s_max; ++i)
      inv_k[static_cast<size_t>(i)] = 1.0 / static_cast<double>(i);
    std::vector<double> inv_kt(static_cast<size_t>(s_max) + 2, 0.0);
    for (int64_t k = 2; k <= s_max + 1; ++k)
      inv_kt[static_cast<size_t>(k)] = 1.0 / (static_cast<double>(k - 1) + theta);
    std::vector<double> inv_sk;  // 1/(s-k), rebuilt per s
    for (int64_t s = 2; s <= s_max; ++s) {
      inv_sk.assign(static_cast<size_t>(s), 0.0);
      for (int64_t k = 1; k <= s - 1; ++k)
        inv_sk[static_cast<size_t>(k)] = 1.0 / static_cast<double>(s - k);
      const double t2 = 1.0 / static_cast<double>(s - 1);
      for (int64_t d = 1; d <= s - 1; ++d) {
        const int64_t kmax = s - d + 1;
        double t = t2;
        double a = 0.0, b = 0.0;
        for (int64_t k = 2; k <= kmax; ++k) {
          const double tmp = t * inv_kt[static_cast<size_t>(k)];
          b += tmp;
          if (k < s) a += tmp * inv_sk[static_cast<size_t>(k)];
          if (k < kmax)
            t *= static_cast<double>(s - d - k + 1) * static_cast<double>(k) *
                 inv_k[static_cast<size_t>(k - 1)] *
                 inv_sk[static_cast<size_t>(k)];
        }
        const size_t idx = index_of(s, d);
        a_[idx] = huw_numerator_weight(d) * a;
        b_[idx] = b;
      }
    }
  }

  int64_t s_max() const { return s_max_; }
  double theta() const { return theta_; }

  bool covers(int64_t s) const { return s >= 2 && s <= s_max_; }

  double numerator_sum(int64_t s, int64_t d) const {
    return a_[checked_index(s, d)];
  }
  double denominator_sum(int64_t s, int64_t d) const {
    return b_[checked_index(s, d)];
  }
  double ratio(int64_t s, int64_t d) const {
    const size_t idx = checked_index(s, d);
    return a_[idx] / b_[idx];
  }

  // Binary persistence (little-endian host layout); round-trips bit-exactly.
  void save(std::ostream& out) const {
    write_raw(out, kMagic);
    write_raw(out, kVersion);
    write_raw(out, theta_);
    write_raw(out, s_max_);
    out.write(reinterpret_cast<const char*>(a_.data()),
              static_cast<std::streamsize>(a_.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(b_.data()),
              static_cast<std::streamsize>(b_.size() * sizeof(double)));
    check(static_cast<bool>(out), "HuwTable::save: write failed");
  }

  static HuwTable load(std::istream& in, const std::string& source) {
    uint32_t magic = 0, version = 0;
    double theta = 0.0;
    int64_t s_max = 0;
    read_raw(in, magic, source, "magic");
    check(magic == kMagic,
          format_msg("HuwTable: %s is not a proposal table cache",
                     source.c_str()));
    read_raw(in, version, source, "version");
    check(version == kVersion,
          format_msg("HuwTable: %s has cache version %u, expected %u; "
                     "re-run the precompute step",
                     source.c_str(), version, kVersion));
    read_raw(in, theta, source, "theta");
    read_raw(in, s_max, source, "s_max");
    check(s_max >= 2 && theta > 0.0,
          format_msg("HuwTable: %s has corrupt header", source.c_str()));
    HuwTable t(Uninit{}, s_max, theta);
    const size_t cells = entry_count(s_max);
    t.a_.resize(cells);
    t.b_.resize(cells);
    in.read(reinterpret_cast<char*>(t.a_.data()),
            static_cast<std::streamsize>(cells * sizeof(double)));
    in.read(reinterpret_cast<char*>(t.b_.data()),
            static_cast<std::streamsize>(cells * sizeof(double)));
    check(static_cast<bool>(in),
          format_msg("HuwTable: %s truncated; re-run the precompute step",
                     source.c_str()));
    return t;
  }

  bool bit_identical(const HuwTable& o) const {
    return s_max_ == o.s_max_ && theta_ == o.theta_ &&
           std::memcmp(a_.data(), o.a_.data(), a_.size() * sizeof(double)) == 0 &&
           std::memcmp(b_.data(), o.b_.data(), b_.size() * sizeof(double)) == 0;
  }

 private:
  struct Uninit {};
  HuwTable(Uninit, int64_t s_max, double theta) : s_max_(s_max), theta_(theta) {}

  static constexpr uint32_t kMagic = 0x57554843u;  // "CHUW" little-endian
  static constexpr uint32_t kVersion = 1u;

  static size_t entry_count(int64_t s_max) {
    return static_cast<size_t>(s_max * (s_max - 1) / 2);
  }

  // Entries for size s start after those of 2..s-1: offset (s-1)(s-2)/2.
  static size_t index_of(int64_t s, int64_t d) {
    return static_cast<size_t>((s - 1) * (s - 2) / 2 + (d - 1));
  }

  size_t checked_index(int64_t s, int64_t d) const {
    check(covers(s),
          format_msg("HuwTable: sample size %lld outside table range [2, %lld];"
                     " re-run the precompute step with a larger s_max",
                     static_cast<long long>(s),
                     static_cast<long long>(s_max_)));
    check(d >= 1 && d <= s - 1,
          format_msg("HuwTable: mutant count %lld outside [1, %lld]",
                     static_cast<long long>(d), static_cast<long long>(s - 1)));
    return index_of(s, d);
  }

  template <class T>
  static void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <class T>
  static void read_raw(std::istream& in, T& v, const std::string& source,
                       const char* what) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    check(static_cast<bool>(in),
          format_msg("HuwTable: %s truncated while reading %s", source.c_str(),
                     what));
  }

  int64_t s_max_;
  double theta_;
  std::vector<double> a_, b_;
};

// O(1) vote of row `row_index` for column `col_id` via the table.
inline double huw_u(const IsmState& st, size_t row_index, int32_t col_id,
                    const HuwTable& table) {
  const auto& row = st.rows()[row_index];
  const auto& col = st.column_by_id(col_id);
  const int64_t s = st.size();
  const int64_t d = col.carriers;
  const double r = table.ratio(s, d);
  if (st.row_carries(row, col_id))
    return static_cast<double>(row.count) / static_cast<double>(d) * r;
  return static_cast<double>(row.count) / static_cast<double>(s - d) *
         (1.0 - r);
}

// ---------------------------------------------------------------------------
// Proposal
// ---------------------------------------------------------------------------

// Operation counters for the complexity experiments.  The headline quantity is
// per_step_evaluation_ops(): work done to evaluate proposal masses while
// stepping (candidate emissions, incremental refresh touches, and -- on the
// non-precomputed path -- direct-summation inner terms).  Full recomputes
// after coalescence events are maintenance and counted separately.
struct IsmHuwCounters {
  int64_t step_eval_ops = 0;    // candidate-mass emissions during sampling
  int64_t refresh_ops = 0;      // incremental O(r+h) touches after removals
  int64_t maintenance_ops = 0;  // full O(rh) recompute touches
  int64_t direct_term_ops = 0;  // direct-summation inner-loop terms
  int64_t fallback_steps = 0;   // steps substituted with SD masses

  int64_t per_step_evaluation_ops() const {
    return step_eval_ops + refresh_ops + direct_term_ops;
  }
  void reset() { *this = IsmHuwCounters{}; }
  IsmHuwCounters& operator+=(const IsmHuwCounters& o) {
    step_eval_ops += o.step_eval_ops;
    refresh_ops += o.refresh_ops;
    maintenance_ops += o.maintenance_ops;
    direct_term_ops += o.direct_term_ops;
    fallback_steps += o.fallback_steps;
    return *this;
  }
};

enum class HuwEvalMode {
  Table,   // O(1) u lookups plus incremental cache (the practical path)
  Direct,  // every mass by direct summation (the comparison path)
};

class IsmHuwProposal {
 public:
  using State = IsmState;
  struct Candidate {
    IsmMove move;
    double mass = 0.0;
    double log_numerator = 0.0;
  };

  struct CacheColumn {
    int32_t id = 0;
    double a = 0.0;  // carrier coefficient:      u = n_j * a
    double b = 0.0;  // non-carrier coefficient:  u = n_j * b
  };
  struct CacheRow {
    uint32_t id = 0;
    int64_t count = 0;
    double w = 0.0;  // vote total W_j
  };

  // The cached proposal state for the replicate currently being advanced.  It
  // is only ever valid between a full recompute and the next coalescence (or
  // replicate switch), which keeps runs byte-identical across worker counts:
  // every replicate begins every lineage level with a fresh recompute.
  struct Scratch {
    bool valid = false;
    std::vector<CacheColumn> cols;
    std::vector<CacheRow> rows;
    std::vector<IsmEnumeratedMove> moves;
    std::vector<int32_t> col_slot;  // column id -> cache index (recompute only)
    IsmHuwCounters* counters = nullptr;
  };

  // `model_theta` enters the exact path numerators; proposal masses use the
  // table's own driving value (Table mode) or `driving_theta` (Direct mode,
  // defaulting to the model value).
  IsmHuwProposal(const HuwTable* table, double model_theta,
                 HuwEvalMode mode = HuwEvalMode::Table,
                 double driving_theta = 0.0)
      : table_(table), theta_(model_theta), mode_(mode) {
    check(model_theta > 0.0, "IsmHuwProposal: theta must be positive");
    if (mode_ == HuwEvalMode::Table) {
      check(table_ != nullptr, "IsmHuwProposal: table mode requires a table");
      driving_theta_ = table_->theta();
    } else {
      driving_theta_ = driving_theta > 0.0 ? driving_theta : model_theta;
    }
  }

  double theta() const { return theta_; }
  double driving_theta() const { return driving_theta_; }
  HuwEvalMode mode() const { return mode_; }

  Scratch make_scratch() const {
    Scratch sc;
    std::lock_guard<std::mutex> lock(slots_mu_);
    slots_.push_back(std::make_unique<IsmHuwCounters>());
    sc.counters = slots_.back().get();
    return sc;
  }

  IsmHuwCounters counters() const {
    std::lock_guard<std::mutex> lock(slots_mu_);
    IsmHuwCounters total;
    for (const auto& s : slots_) total += *s;
    return total;
  }
  void reset_counters() const {
    std::lock_guard<std::mutex> lock(slots_mu_);
    for (const auto& s : slots_) s->reset();
  }

  static bool is_terminal(const State& st) { return st.size() == 1; }
  double log_terminal(const State& st) const {
    check(st.column_count() == 0,
          "IsmHuwProposal: terminal state still carries mutations");
    return 0.0;
  }
  static void apply(State& st, const IsmMove& mv) { st.apply(mv); }

  void on_replicate_begin(Scratch& sc, const State&) const { sc.valid = false; }

  void on_applied(Scratch& sc, const State& st, const IsmMove& mv) const {
    if (mode_ != HuwEvalMode::Table || !sc.valid) return;
    if (mv.kind == IsmMove::Kind::Coalesce) {
      sc.valid = false;  // s changed: every coefficient changes
      return;
    }
    refresh_after_removal(sc, st, mv);
  }

  double enumerate(const State& st, Scratch& sc,
                   std::vector<Candidate>& out) const {
    ism_enumerate_moves(st, theta_, sc.moves);
    out.clear();
    bool degenerate = st.size() == 2;  // documented endgame substitute
    if (!degenerate) {
      const bool was_cached = mode_ == HuwEvalMode::Table && sc.valid;
      if (mode_ == HuwEvalMode::Table) {
        if (!sc.valid) full_recompute(sc, st);
      }
      for (const IsmEnumeratedMove& e : sc.moves) {
        Candidate c;
        c.move = e.move;
        c.log_numerator = e.log_numerator;
        c.mass = mode_ == HuwEvalMode::Table
                     ? cached_vote(sc, e.move.row_id)
                     : direct_vote(st, e.move.row_id, sc);
        out.push_back(c);
      }
      if (was_cached && votes_need_verification(out)) {
        full_recompute(sc, st);
        for (Candidate& c : out) c.mass = cached_vote(sc, c.move.row_id);
      }
      if (sc.counters)
        sc.counters->step_eval_ops += static_cast<int64_t>(out.size());
      for (const Candidate& c : out)
        if (!(c.mass > 0.0) || !std::isfinite(c.mass)) {
          degenerate = true;  // zero vote on a supported move would bias
          break;
        }
    }
    if (degenerate) {
      out.clear();
      for (const IsmEnumeratedMove& e : sc.moves) {
        Candidate c;
        c.move = e.move;
        c.log_numerator = e.log_numerator;
        c.mass = e.move.kind == IsmMove::Kind::Coalesce
                     ? static_cast<double>(e.row_count)
                     : 1.0;
        out.push_back(c);
      }
      if (sc.counters) {
        sc.counters->fallback_steps += 1;
        sc.counters->step_eval_ops += static_cast<int64_t>(out.size());
      }
    }
    double z = 0.0;
    for (const Candidate& c : out) z += c.mass;
    return z;
  }

  // Recomputes the cache from scratch (exposed so that tests can shadow the
  // incremental path against a fresh evaluation).
  void full_recompute(Scratch& sc, const State& st) const {
    check(mode_ == HuwEvalMode::Table,
          "IsmHuwProposal: cache is only kept in table mode");
    const int64_t s = st.size();
    int64_t ops = 0;
    sc.cols.clear();
    sc.cols.reserve(st.columns().size());
    int32_t max_id = -1;
    for (const auto& col : st.columns()) max_id = std::max(max_id, col.id);
    sc.col_slot.assign(static_cast<size_t>(max_id + 1), -1);
    double b_total = 0.0;
    for (const auto& col : st.columns()) {
      const double r = table_->ratio(s, col.carriers);
      CacheColumn cc;
      cc.id = col.id;
      cc.a = r / static_cast<double>(col.carriers);
      cc.b = (1.0 - r) / static_cast<double>(s - col.carriers);
      sc.col_slot[static_cast<size_t>(col.id)] =
          static_cast<int32_t>(sc.cols.size());
      sc.cols.push_back(cc);
      b_total += cc.b;
      ++ops;
    }
    sc.rows.clear();
    sc.rows.reserve(st.rows().size());
    for (const auto& row : st.rows()) {
      double acc = b_total;
      for (int32_t c : row.cols) {
        const CacheColumn& cc =
            sc.cols[static_cast<size_t>(sc.col_slot[static_cast<size_t>(c)])];
        acc += cc.a - cc.b;
        ++ops;
      }
      CacheRow cr;
      cr.id = row.id;
      cr.count = row.count;
      cr.w = static_cast<double>(row.count) * acc;
      sc.rows.push_back(cr);
      ++ops;
    }
    sc.valid = true;
    if (sc.counters) sc.counters->maintenance_ops += ops;
  }

 private:
  double cached_vote(const Scratch& sc, uint32_t row_id) const {
    for (const CacheRow& r : sc.rows)
      if (r.id == row_id) return r.w;
    raise(format_msg("IsmHuwProposal: no cached vote for row %u", row_id));
  }

  // True when any incrementally maintained vote is non-finite, non-positive,
  // or small enough relative to the level maximum to be cancellation residue
  // (see kHuwVoteResidueGuard).
  static bool votes_need_verification(const std::vector<Candidate>& out) {
    double top = 0.0;
    for (const Candidate& c : out) {
      if (!std::isfinite(c.mass) || c.mass <= 0.0) return true;
      top = std::max(top, c.mass);
    }
    for (const Candidate& c : out)
      if (c.mass < top * kHuwVoteResidueGuard) return true;
    return false;
  }

  // Direct (non-precomputed) vote: every u term by direct summation.
  double direct_vote(const State& st, uint32_t row_id, Scratch& sc) const {
    const size_t ri = st.row_index(row_id);
    const auto& row = st.rows()[ri];
    const int64_t s = st.size();
    double w = 0.0;
    int64_t ops = 0;
    for (const auto& col : st.columns()) {
      const HuwSums sums = huw_direct_sums(s, col.carriers, driving_theta_, &ops);
      const double r = sums.ratio();
      if (st.row_carries(row, col.id))
        w += static_cast<double>(row.count) / static_cast<double>(col.carriers) * r;
      else
        w += static_cast<double>(row.count) /
             static_cast<double>(s - col.carriers) * (1.0 - r);
    }
    if (sc.counters) sc.counters->direct_term_ops += ops;
    return w;
  }

  // After removing singleton column `mv.col_id` (pre-carrier row `mv.row_id`):
  // subtract every row's vote for the vanished column, rescale the merge
  // target for its extra copy, and drop merged rows.  The state `st` is
  // post-move; s and all other columns' carrier counts are unchanged, so the
  // remaining coefficients stay valid.  O(r + h).
  void refresh_after_removal(Scratch& sc, const State& st,
                             const IsmMove& mv) const {
    size_t cpos = sc.cols.size();
    for (size_t i = 0; i < sc.cols.size(); ++i)
      if (sc.cols[i].id == mv.col_id) {
        cpos = i;
        break;
      }
    check(cpos != sc.cols.size(),
          "IsmHuwProposal: removed column missing from cache");
    const double a_star = sc.cols[cpos].a;
    const double b_star = sc.cols[cpos].b;
    sc.cols.erase(sc.cols.begin() + static_cast<std::ptrdiff_t>(cpos));

    const bool merged = mv.kind == IsmMove::Kind::RemoveMerge;
    size_t drop = sc.rows.size();
    for (size_t i = 0; i < sc.rows.size(); ++i) {
      CacheRow& r = sc.rows[i];
      if (r.id == mv.row_id) {
        if (merged) {
          drop = i;  // merged away entirely
        } else {
          r.w -= a_star;  // carrier vote of the vanished singleton
        }
      } else if (merged && r.id == mv.merge_row_id) {
        const double pre = static_cast<double>(r.count);
        r.w = (r.w - pre * b_star) * (pre + 1.0) / pre;
        r.count += 1;
      } else {
        r.w -= static_cast<double>(r.count) * b_star;
      }
    }
    if (merged) {
      check(drop != sc.rows.size(),
            "IsmHuwProposal: merged row missing from cache");
      sc.rows.erase(sc.rows.begin() + static_cast<std::ptrdiff_t>(drop));
    }
    (void)st;
    if (sc.counters)
      sc.counters->refresh_ops +=
          static_cast<int64_t>(sc.rows.size() + sc.cols.size() + 2);
  }

  const HuwTable* table_;
  double theta_;
  HuwEvalMode mode_;
  double driving_theta_ = 0.0;
  mutable std::mutex slots_mu_;
  mutable std::vector<std::unique_ptr<IsmHuwCounters>> slots_;
};

}  // namespace coalsis
