#pragma once
// Infinite-sites model (ISM): sample representation, strict file I/O, forward
// simulation, backward proposal distributions (GT and SD variants), a memoized
// exact solver for small samples, and the Watterson estimator utility.
//
// A sample is a triple (S, n, ell): S is an h x r binary matrix whose rows are
// the distinct haplotypes, n gives their multiplicities, and ell lists the
// mutation locations in [0,1].  Internally each row stores the sorted list of
// column ids it carries; column ids are stable across removals so that
// incremental consumers can track columns by identity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/logspace.hpp"
#include "coalsis/rng.hpp"

namespace coalsis {

// ---------------------------------------------------------------------------
// Moves
// ---------------------------------------------------------------------------

struct IsmMove {
  enum class Kind : uint8_t {
    Coalesce,         // remove one copy of row `row_id` (requires count >= 2)
    RemoveMerge,      // strip singleton column `col_id` from `row_id`; the row
                      // becomes identical to `merge_row_id` and merges into it
    RemoveDistinct,   // strip singleton column `col_id`; the row stays distinct
  };
  Kind kind = Kind::Coalesce;
  uint32_t row_id = 0;
  int32_t col_id = -1;
  uint32_t merge_row_id = 0;
};

// ---------------------------------------------------------------------------
// Sample state
// ---------------------------------------------------------------------------

struct IsmMatrix {
  std::vector<int64_t> counts;       // length h
  std::vector<std::string> bits;     // h bitstrings of length r
  std::vector<double> locations;     // length r
};

class IsmState {
 public:
  struct Row {
    uint32_t id = 0;
    int64_t count = 0;
    std::vector<int32_t> cols;  // sorted, stable column ids
  };
  struct Column {
    int32_t id = 0;
    double location = 0.0;
    int64_t carriers = 0;  // d_w: number of SAMPLES (not rows) carrying it
  };

  IsmState() = default;

  // Builds and validates a state from matrix form.  Enforces all sample
  // invariants: positive multiplicities, pairwise-distinct rows, every column
  // segregating (carried by at least one sample and not by all samples),
  // pairwise column compatibility (perfect phylogeny / three-gamete test),
  // and pairwise-distinct locations inside [0,1].
  static IsmState from_matrix(const IsmMatrix& m) {
    const auto h = m.counts.size();
    check(h >= 1, "IsmState: need at least one haplotype row");
    check(m.bits.size() == h, "IsmState: counts/bits length mismatch");
    const size_t r = m.locations.size();
    IsmState st;
    st.rows_.reserve(h);
    int64_t total = 0;
    for (size_t i = 0; i < h; ++i) {
      check(m.counts[i] >= 1,
            format_msg("IsmState: multiplicity of row %zu must be positive", i));
      check(m.bits[i].size() == r,
            format_msg("IsmState: row %zu has %zu sites, expected %zu", i,
                       m.bits[i].size(), r));
      Row row;
      row.id = static_cast<uint32_t>(i);
      row.count = m.counts[i];
      for (size_t w = 0; w < r; ++w) {
        const char c = m.bits[i][w];
        check(c == '0' || c == '1',
              format_msg("IsmState: row %zu site %zu is '%c', expected 0 or 1",
                         i, w, c));
        if (c == '1') row.cols.push_back(static_cast<int32_t>(w));
      }
      total += row.count;
      st.rows_.push_back(std::move(row));
    }
    st.size_ = total;
    st.next_row_id_ = static_cast<uint32_t>(h);
    st.next_col_id_ = static_cast<int32_t>(r);
    st.cols_.reserve(r);
    for (size_t w = 0; w < r; ++w) {
      Column col;
      col.id = static_cast<int32_t>(w);
      col.location = m.locations[w];
      check(col.location >= 0.0 && col.location <= 1.0,
            format_msg("IsmState: location %zu = %g outside [0,1]", w,
                       col.location));
      for (const Row& row : st.rows_)
        if (std::binary_search(row.cols.begin(), row.cols.end(), col.id))
          col.carriers += row.count;
      check(col.carriers >= 1,
            format_msg("IsmState: column %zu carried by no sample", w));
      check(col.carriers <= total - 1,
            format_msg("IsmState: column %zu carried by every sample; "
                       "non-segregating mutations are not representable", w));
      st.cols_.push_back(col);
    }
    for (size_t i = 0; i < h; ++i)
      for (size_t j = i + 1; j < h; ++j)
        check(st.rows_[i].cols != st.rows_[j].cols,
              format_msg("IsmState: rows %zu and %zu are identical", i, j));
    for (size_t a = 0; a < r; ++a)
      for (size_t b = a + 1; b < r; ++b) {
        check(m.locations[a] != m.locations[b],
              format_msg("IsmState: locations %zu and %zu coincide (%g)", a, b,
                         m.locations[a]));
        st.check_compatible(static_cast<int32_t>(a), static_cast<int32_t>(b));
      }
    return st;
  }

  int64_t size() const { return size_; }
  int64_t row_count() const { return static_cast<int64_t>(rows_.size()); }
  int64_t column_count() const { return static_cast<int64_t>(cols_.size()); }
  const std::vector<Row>& rows() const { return rows_; }
  const std::vector<Column>& columns() const { return cols_; }

  const Row& row_by_id(uint32_t id) const { return rows_[row_index(id)]; }
  const Column& column_by_id(int32_t id) const { return cols_[col_index(id)]; }

  bool row_carries(const Row& row, int32_t col_id) const {
    return std::binary_search(row.cols.begin(), row.cols.end(), col_id);
  }

  // Matrix form in current row/column storage order (used by the writer and
  // by tests; locations travel with their columns).
  IsmMatrix to_matrix() const {
    IsmMatrix m;
    for (const Row& row : rows_) {
      m.counts.push_back(row.count);
      std::string bits(cols_.size(), '0');
      for (size_t w = 0; w < cols_.size(); ++w)
        if (row_carries(row, cols_[w].id)) bits[w] = '1';
      m.bits.push_back(std::move(bits));
    }
    for (const Column& c : cols_) m.locations.push_back(c.location);
    return m;
  }

  void apply(const IsmMove& mv) {
    switch (mv.kind) {
      case IsmMove::Kind::Coalesce: {
        Row& row = rows_[row_index(mv.row_id)];
        check(row.count >= 2, "IsmState: cannot coalesce a singleton row");
        row.count -= 1;
        size_ -= 1;
        for (int32_t c : row.cols) cols_[col_index(c)].carriers -= 1;
        return;
      }
      case IsmMove::Kind::RemoveMerge:
      case IsmMove::Kind::RemoveDistinct: {
        const size_t ri = row_index(mv.row_id);
        Row& row = rows_[ri];
        check(row.count == 1, "IsmState: mutation removal requires multiplicity 1");
        const size_t ci = col_index(mv.col_id);
        check(cols_[ci].carriers == 1,
              "IsmState: only singleton mutations can be removed");
        check(row_carries(row, mv.col_id),
              "IsmState: row does not carry the mutation being removed");
        row.cols.erase(
            std::lower_bound(row.cols.begin(), row.cols.end(), mv.col_id));
        cols_.erase(cols_.begin() + static_cast<std::ptrdiff_t>(ci));
        const size_t match = matching_row(ri);
        if (mv.kind == IsmMove::Kind::RemoveMerge) {
          check(match != rows_.size(),
                "IsmState: merge removal but stripped row matches no other row");
          check(rows_[match].id == mv.merge_row_id,
                "IsmState: merge removal names the wrong target row");
          rows_[match].count += 1;
          rows_.erase(rows_.begin() + static_cast<std::ptrdiff_t>(ri));
        } else {
          check(match == rows_.size(),
                "IsmState: distinct removal but stripped row duplicates another");
        }
        return;
      }
    }
    raise("IsmState: unknown move kind");
  }

  // Index (not id) of the row other than `ri` with identical content, or
  // rows_.size() when none exists.
  size_t matching_row(size_t ri) const {
    for (size_t g = 0; g < rows_.size(); ++g)
      if (g != ri && rows_[g].cols == rows_[ri].cols) return g;
    return rows_.size();
  }

  size_t row_index(uint32_t id) const {
    for (size_t i = 0; i < rows_.size(); ++i)
      if (rows_[i].id == id) return i;
    raise(format_msg("IsmState: no row with id %u", id));
  }

  size_t col_index(int32_t id) const {
    for (size_t i = 0; i < cols_.size(); ++i)
      if (cols_[i].id == id) return i;
    raise(format_msg("IsmState: no column with id %d", id));
  }

  // Hooks for the forward simulator (which maintains invariants itself).
  std::vector<Row>& mutable_rows() { return rows_; }
  std::vector<Column>& mutable_cols() { return cols_; }
  void set_size(int64_t s) { size_ = s; }
  uint32_t fresh_row_id() { return next_row_id_++; }
  int32_t fresh_col_id() { return next_col_id_++; }

 private:
  // Three-gamete test for one column pair: among observed samples the carrier
  // patterns (1,0), (0,1), (1,1) must not all occur.
  void check_compatible(int32_t a, int32_t b) const {
    bool g10 = false, g01 = false, g11 = false;
    for (const Row& row : rows_) {
      const bool ca = row_carries(row, a);
      const bool cb = row_carries(row, b);
      if (ca && cb) g11 = true;
      else if (ca) g10 = true;
      else if (cb) g01 = true;
    }
    check(!(g10 && g01 && g11),
          format_msg("IsmState: columns %d and %d fail the three-gamete "
                     "compatibility test (no perfect phylogeny)", a, b));
  }

  std::vector<Row> rows_;
  std::vector<Column> cols_;
  int64_t size_ = 0;
  uint32_t next_row_id_ = 0;
  int32_t next_col_id_ = 0;
};

// ---------------------------------------------------------------------------
// Singleton scan
// ---------------------------------------------------------------------------

// Rows eligible for mutation removal: multiplicity 1 and carrying at least one
// column with exactly one carrier.  `entries` lists every removable (row index,
// column id) pair; `rows_in_m` the distinct eligible row indices.
struct SingletonIndex {
  std::vector<std::pair<size_t, int32_t>> entries;
  std::vector<size_t> rows_in_m;
};

inline SingletonIndex singleton_scan(const IsmState& st) {
  SingletonIndex idx;
  const auto& rows = st.rows();
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].count != 1) continue;
    bool any = false;
    for (int32_t c : rows[i].cols) {
      if (st.column_by_id(c).carriers == 1) {
        idx.entries.emplace_back(i, c);
        any = true;
      }
    }
    if (any) idx.rows_in_m.push_back(i);
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Backward move enumeration shared by proposals and the exact solver
// ---------------------------------------------------------------------------

struct IsmEnumeratedMove {
  IsmMove move;
  double log_numerator = 0.0;  // forward-density factor for the SIS weight
  int64_t row_count = 0;       // n_j of the acting row
  int64_t merge_count = 0;     // n_j' of the merge target (RemoveMerge only)
};

// Enumerates the support of the backward chain from `st` together with the
// forward-transition numerators:
//   coalescence of row j:            (n_j - 1) / (s - 1 + theta)
//   removal merging into row j':     theta (n_j' + 1) / (s (s - 1 + theta))
//   removal leaving the row distinct theta / (s (s - 1 + theta))
inline void ism_enumerate_moves(const IsmState& st, double theta,
                                std::vector<IsmEnumeratedMove>& out) {
  out.clear();
  const double s = static_cast<double>(st.size());
  const double denom = s - 1.0 + theta;
  const auto& rows = st.rows();
  for (const auto& row : rows) {
    if (row.count < 2) continue;
    IsmEnumeratedMove e;
    e.move.kind = IsmMove::Kind::Coalesce;
    e.move.row_id = row.id;
    e.row_count = row.count;
    e.log_numerator = std::log(static_cast<double>(row.count - 1) / denom);
    out.push_back(e);
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].count != 1) continue;
    for (int32_t c : rows[i].cols) {
      if (st.column_by_id(c).carriers != 1) continue;
      // Content of row i with column c stripped, compared to the other rows.
      size_t match = rows.size();
      for (size_t g = 0; g < rows.size() && match == rows.size(); ++g) {
        if (g == i || rows[g].cols.size() + 1 != rows[i].cols.size()) continue;
        bool equal = true;
        size_t a = 0;
        for (int32_t cc : rows[i].cols) {
          if (cc == c) continue;
          if (a >= rows[g].cols.size() || rows[g].cols[a] != cc) {
            equal = false;
            break;
          }
          ++a;
        }
        if (equal && a == rows[g].cols.size()) match = g;
      }
      IsmEnumeratedMove e;
      e.move.row_id = rows[i].id;
      e.move.col_id = c;
      e.row_count = 1;
      if (match != rows.size()) {
        e.move.kind = IsmMove::Kind::RemoveMerge;
        e.move.merge_row_id = rows[match].id;
        e.merge_count = rows[match].count;
        e.log_numerator =
            std::log(theta * static_cast<double>(rows[match].count + 1) /
                     (s * denom));
      } else {
        e.move.kind = IsmMove::Kind::RemoveDistinct;
        e.log_numerator = std::log(theta / (s * denom));
      }
      out.push_back(e);
    }
  }
  check(!out.empty(),
        "ism_enumerate_moves: empty backward support; the sample is not a "
        "consistent infinite-sites configuration");
}

// ---------------------------------------------------------------------------
// GT / SD proposals (engine-compatible)
// ---------------------------------------------------------------------------

enum class IsmProposalKind { GT, SD };

inline const char* ism_proposal_name(IsmProposalKind k) {
  return k == IsmProposalKind::GT ? "gt" : "sd";
}

class IsmProposal {
 public:
  using State = IsmState;
  struct Candidate {
    IsmMove move;
    double mass = 0.0;
    double log_numerator = 0.0;
  };
  struct Scratch {
    std::vector<IsmEnumeratedMove> moves;
  };

  IsmProposal(IsmProposalKind kind, double theta) : kind_(kind), theta_(theta) {
    check(theta > 0.0, "IsmProposal: theta must be positive");
  }

  IsmProposalKind kind() const { return kind_; }
  double theta() const { return theta_; }

  Scratch make_scratch() const { return Scratch{}; }

  static bool is_terminal(const State& st) { return st.size() == 1; }

  double log_terminal(const State& st) const {
    check(st.column_count() == 0,
          "IsmProposal: terminal state still carries mutations");
    return 0.0;
  }

  static void apply(State& st, const IsmMove& mv) { st.apply(mv); }

  // Unnormalized proposal masses:
  //   GT: coalescence (n_j - 1); merge removal theta (n_j' + 1)/s;
  //       distinct removal theta/s.
  //   SD: coalescence n_j; any removal 1.
  double enumerate(const State& st, Scratch& sc,
                   std::vector<Candidate>& out) const {
    ism_enumerate_moves(st, theta_, sc.moves);
    out.clear();
    const double s = static_cast<double>(st.size());
    double z = 0.0;
    for (const IsmEnumeratedMove& e : sc.moves) {
      Candidate c;
      c.move = e.move;
      c.log_numerator = e.log_numerator;
      if (kind_ == IsmProposalKind::GT) {
        switch (e.move.kind) {
          case IsmMove::Kind::Coalesce:
            c.mass = static_cast<double>(e.row_count - 1);
            break;
          case IsmMove::Kind::RemoveMerge:
            c.mass = theta_ * static_cast<double>(e.merge_count + 1) / s;
            break;
          case IsmMove::Kind::RemoveDistinct:
            c.mass = theta_ / s;
            break;
        }
      } else {
        c.mass = e.move.kind == IsmMove::Kind::Coalesce
                     ? static_cast<double>(e.row_count)
                     : 1.0;
      }
      z += c.mass;
      out.push_back(c);
    }
    return z;
  }

 private:
  IsmProposalKind kind_;
  double theta_;
};

// ---------------------------------------------------------------------------
// Forward simulation
// ---------------------------------------------------------------------------

// Simulates the growth chain from the first branching (two lineages, no
// mutations) and captures the configuration at the first branch event that
// fires while the sample holds `n` lineages, before that branch is applied.
// Mutations hit a uniformly chosen lineage and insert a fresh singleton column
// at a fresh uniform location.  Mutations older than the first branching are
// carried by every descendant and are not segregating, so starting from two
// lineages loses nothing; every produced column satisfies 1 <= d_w <= s-1.
inline IsmState ism_simulate(int64_t n, double theta, RngStream& rng) {
  check(n >= 2, "ism_simulate: need at least two lineages");
  check(theta > 0.0, "ism_simulate: theta must be positive");
  IsmState st;
  {
    IsmState::Row root;
    root.id = st.fresh_row_id();
    root.count = 2;
    st.mutable_rows().push_back(root);
    st.set_size(2);
  }
  std::vector<double> masses;
  std::vector<double> used_locations;
  while (true) {
    const auto s = st.size();
    const double sd = static_cast<double>(s);
    const bool branch = rng.next_double() * (sd - 1.0 + theta) < sd - 1.0;
    masses.clear();
    for (const auto& row : st.rows())
      masses.push_back(static_cast<double>(row.count));
    const auto i =
        static_cast<size_t>(rng.next_index_by_mass(masses, sd));
    if (branch) {
      if (s == n) return st;  // capture before applying the branch
      auto& row = st.mutable_rows()[i];
      row.count += 1;
      st.set_size(s + 1);
      for (int32_t c : row.cols)
        st.mutable_cols()[st.col_index(c)].carriers += 1;
    } else {
      double loc = rng.next_double();
      while (std::find(used_locations.begin(), used_locations.end(), loc) !=
             used_locations.end())
        loc = rng.next_double();
      used_locations.push_back(loc);
      IsmState::Column col;
      col.id = st.fresh_col_id();
      col.location = loc;
      col.carriers = 1;
      auto& rows = st.mutable_rows();
      if (rows[i].count == 1) {
        rows[i].cols.push_back(col.id);  // fresh ids are increasing: stays sorted
      } else {
        rows[i].count -= 1;
        IsmState::Row split;
        split.id = st.fresh_row_id();
        split.count = 1;
        split.cols = rows[i].cols;
        split.cols.push_back(col.id);
        rows.push_back(std::move(split));
      }
      st.mutable_cols().push_back(col);
    }
  }
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------
//
// Line 1:           h r
// Lines 2 .. h+1:   n_i bitstring      (bitstring has exactly r characters)
// Lines h+2..h+r+1: location_j         (one real in [0,1] per line)
//
// Tokens are separated by blanks; empty lines are not allowed.  Errors are
// reported as "<source>:<line>:<column>: message" with 1-based coordinates.

namespace detail {

class LineTokenizer {
 public:
  LineTokenizer(const std::string& text, const std::string& source)
      : text_(text), source_(source) {}

  bool next_line() {
    if (pos_ >= text_.size()) return false;
    const size_t start = pos_;
    size_t end = text_.find('\n', start);
    if (end == std::string::npos) end = text_.size();
    line_ = text_.substr(start, end - start);
    if (!line_.empty() && line_.back() == '\r') line_.pop_back();
    pos_ = end + (end < text_.size() ? 1 : 0);
    ++line_no_;
    col_ = 0;
    return true;
  }

  // Next whitespace-delimited token on the current line; empty when exhausted.
  std::string next_token() {
    while (col_ < line_.size() && is_blank(line_[col_])) ++col_;
    token_col_ = col_ + 1;
    const size_t start = col_;
    while (col_ < line_.size() && !is_blank(line_[col_])) ++col_;
    return line_.substr(start, col_ - start);
  }

  void expect_line_end() {
    size_t c = col_;
    while (c < line_.size() && is_blank(line_[c])) ++c;
    if (c < line_.size()) fail(c + 1, "unexpected trailing content");
  }

  [[noreturn]] void fail(size_t column, const std::string& msg) const {
    raise(format_msg("%s:%zu:%zu: %s", source_.c_str(), line_no_, column,
                     msg.c_str()));
  }

  [[noreturn]] void fail_token(const std::string& msg) const {
    fail(token_col_, msg);
  }

  size_t line_no() const { return line_no_; }
  size_t token_col() const { return token_col_; }

 private:
  static bool is_blank(char c) { return c == ' ' || c == '\t'; }

  const std::string& text_;
  std::string source_;
  std::string line_;
  size_t pos_ = 0;
  size_t line_no_ = 0;
  size_t col_ = 0;
  size_t token_col_ = 1;
};

inline int64_t parse_int_token(detail::LineTokenizer& tk, const char* what) {
  const std::string tok = tk.next_token();
  if (tok.empty()) tk.fail_token(format_msg("expected %s", what));
  size_t used = 0;
  int64_t value = 0;
  try {
    value = std::stoll(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size())
    tk.fail_token(format_msg("'%s' is not a valid %s", tok.c_str(), what));
  return value;
}

inline double parse_real_token(detail::LineTokenizer& tk, const char* what) {
  const std::string tok = tk.next_token();
  if (tok.empty()) tk.fail_token(format_msg("expected %s", what));
  size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size())
    tk.fail_token(format_msg("'%s' is not a valid %s", tok.c_str(), what));
  return value;
}

}  // namespace detail

inline IsmState parse_ism(const std::string& text, const std::string& source) {
  detail::LineTokenizer tk(text, source);
  if (!tk.next_line()) raise(format_msg("%s:1:1: empty input", source.c_str()));
  const int64_t h = detail::parse_int_token(tk, "haplotype count");
  if (h < 1) tk.fail_token("haplotype count must be at least 1");
  const int64_t r = detail::parse_int_token(tk, "mutation count");
  if (r < 0) tk.fail_token("mutation count must be non-negative");
  tk.expect_line_end();

  IsmMatrix m;
  for (int64_t i = 0; i < h; ++i) {
    if (!tk.next_line())
      raise(format_msg("%s:%zu:1: expected %lld haplotype lines, found %lld",
                       source.c_str(), tk.line_no() + 1,
                       static_cast<long long>(h), static_cast<long long>(i)));
    const int64_t count = detail::parse_int_token(tk, "multiplicity");
    if (count < 1) tk.fail_token("multiplicity must be positive");
    m.counts.push_back(count);
    if (r == 0) {
      m.bits.emplace_back();
    } else {
      const std::string bits = tk.next_token();
      const size_t bits_col = tk.token_col();
      if (bits.empty()) tk.fail_token("expected bitstring");
      if (bits.size() != static_cast<size_t>(r))
        tk.fail_token(format_msg("bitstring has %zu characters, expected %lld",
                                 bits.size(), static_cast<long long>(r)));
      for (size_t c = 0; c < bits.size(); ++c)
        if (bits[c] != '0' && bits[c] != '1')
          tk.fail(bits_col + c,
                  format_msg("invalid bitstring character '%c'", bits[c]));
      m.bits.push_back(bits);
    }
    tk.expect_line_end();
  }
  for (int64_t w = 0; w < r; ++w) {
    if (!tk.next_line())
      raise(format_msg("%s:%zu:1: expected %lld location lines, found %lld",
                       source.c_str(), tk.line_no() + 1,
                       static_cast<long long>(r), static_cast<long long>(w)));
    const double loc = detail::parse_real_token(tk, "location");
    if (loc < 0.0 || loc > 1.0) tk.fail_token("location outside [0,1]");
    m.locations.push_back(loc);
    tk.expect_line_end();
  }
  if (tk.next_line())
    raise(format_msg("%s:%zu:1: unexpected extra line", source.c_str(),
                     tk.line_no()));
  return IsmState::from_matrix(m);
}

inline IsmState read_ism_stream(std::istream& in, const std::string& source) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ism(buf.str(), source);
}

inline std::string format_ism(const IsmState& st) {
  const IsmMatrix m = st.to_matrix();
  std::ostringstream out;
  out << m.counts.size() << ' ' << m.locations.size() << '\n';
  for (size_t i = 0; i < m.counts.size(); ++i) {
    out << m.counts[i];
    if (!m.bits[i].empty()) out << ' ' << m.bits[i];
    out << '\n';
  }
  char buf[64];
  for (double loc : m.locations) {
    std::snprintf(buf, sizeof buf, "%.17g", loc);
    out << buf << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Exact solver for small samples
// ---------------------------------------------------------------------------

namespace detail {

// Canonical key invariant under column relabeling and row order: minimum over
// all column permutations of the sorted "count:carried-positions" row list.
inline std::string ism_canonical_key(const IsmState& st) {
  const auto& rows = st.rows();
  const size_t r = st.columns().size();
  check(r <= 8, "ism exact solver: limited to at most 8 mutations");
  std::vector<int32_t> perm(r);  // perm[dense position] = relabeled position
  for (size_t i = 0; i < r; ++i) perm[i] = static_cast<int32_t>(i);
  std::vector<size_t> dense_of_id;  // column id -> dense position
  {
    int32_t max_id = -1;
    for (const auto& c : st.columns()) max_id = std::max(max_id, c.id);
    dense_of_id.assign(static_cast<size_t>(max_id + 1), 0);
    for (size_t i = 0; i < r; ++i)
      dense_of_id[static_cast<size_t>(st.columns()[i].id)] = i;
  }
  std::string best;
  do {
    std::vector<std::string> lines;
    lines.reserve(rows.size());
    for (const auto& row : rows) {
      std::vector<int32_t> cols;
      cols.reserve(row.cols.size());
      for (int32_t c : row.cols)
        cols.push_back(perm[dense_of_id[static_cast<size_t>(c)]]);
      std::sort(cols.begin(), cols.end());
      std::string line = std::to_string(row.count) + ":";
      for (int32_t c : cols) line += static_cast<char>('a' + c);
      lines.push_back(std::move(line));
    }
    std::sort(lines.begin(), lines.end());
    std::string key;
    for (const auto& l : lines) {
      key += l;
      key += ';';
    }
    if (best.empty() || key < best) best = std::move(key);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double ism_exact_rec(const IsmState& st, double theta,
                            std::map<std::string, double>& memo) {
  if (st.size() == 1) {
    check(st.column_count() == 0,
          "ism exact solver: reached a single lineage with mutations left");
    return 1.0;
  }
  const std::string key = ism_canonical_key(st);
  const auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  std::vector<IsmEnumeratedMove> moves;
  ism_enumerate_moves(st, theta, moves);
  double p = 0.0;
  for (const IsmEnumeratedMove& e : moves) {
    IsmState next = st;
    next.apply(e.move);
    p += std::exp(e.log_numerator) * ism_exact_rec(next, theta, memo);
  }
  memo[key] = p;
  return p;
}

}  // namespace detail

// Exact sampling probability by memoized recursion over the backward support.
// Practical only for small samples (size and mutation count).
inline double ism_exact_probability(const IsmState& st, double theta) {
  check(theta > 0.0, "ism_exact_probability: theta must be positive");
  std::map<std::string, double> memo;
  return detail::ism_exact_rec(st, theta, memo);
}

// ---------------------------------------------------------------------------
// Watterson estimator
// ---------------------------------------------------------------------------

inline double watterson_theta(int64_t segregating, int64_t n) {
  check(n >= 2, "watterson_theta: need at least two samples");
  check(segregating >= 0, "watterson_theta: negative segregating-site count");
  double h = 0.0;
  for (int64_t k = 1; k <= n - 1; ++k) h += 1.0 / static_cast<double>(k);
  return static_cast<double>(segregating) / h;
}

}  // namespace coalsis
