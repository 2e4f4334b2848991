// ============================================================================
//  coalsis/sample_io.hpp
//
//  Plain-text data files for the finite-alleles model, plus small file
//  helpers shared by the command-line front end.
//
//  Finite-alleles sample file:
//      d theta            -- type-space size and the generating mutation rate
//      i n_i              -- one line per OCCUPIED type, ids strictly
//      ...                   increasing, 0 <= i < d, n_i >= 1
//
//  For the site-by-site benchmark model, d is a power of two (d = 2^sites,
//  types are site bitmasks) and `theta` is the per-site rate; for dense
//  models `theta` is the total driving rate and the transition matrix lives
//  in a separate file:
//
//  Matrix file: d lines of d whitespace-separated reals (row-stochastic,
//  validated on model construction).
//
//  Parse errors carry "<source>:<line>:<column>:" prefixes, 1-based.
// ============================================================================
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/ism.hpp"  // LineTokenizer + ISM sample read/write
#include "coalsis/linalg.hpp"
#include "coalsis/state.hpp"

namespace coalsis {

// --- generic file helpers ----------------------------------------------------

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(static_cast<bool>(in), format_msg("cannot open '%s' for reading", path.c_str()));
  std::ostringstream buf;
  buf << in.rdbuf();
  check(!in.bad(), format_msg("I/O error while reading '%s'", path.c_str()));
  return buf.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  check(static_cast<bool>(out), format_msg("cannot open '%s' for writing", path.c_str()));
  out << content;
  out.flush();
  check(static_cast<bool>(out), format_msg("I/O error while writing '%s'", path.c_str()));
}

// --- finite-alleles sample files ----------------------------------------------

struct FaSample {
  int64_t d = 0;       // type-space size
  double theta = 0.0;  // generating rate (per-site for power-of-two site models)
  TypeCounts counts;

  // Number of biallelic sites when d is a power of two; raises otherwise.
  int sites() const {
    check(d >= 2 && (d & (d - 1)) == 0,
          format_msg("sample type-space size %lld is not a power of two; "
                     "not a site-model sample",
                     static_cast<long long>(d)));
    int s = 0;
    for (int64_t v = d; v > 1; v >>= 1) ++s;
    return s;
  }
};

inline FaSample parse_fa_sample(const std::string& text, const std::string& source) {
  detail::LineTokenizer tk(text, source);
  if (!tk.next_line()) raise(format_msg("%s:1:1: empty sample file", source.c_str()));
  FaSample sample;
  sample.d = detail::parse_int_token(tk, "type-space size");
  if (sample.d < 2) tk.fail_token("type-space size must be at least 2");
  sample.theta = detail::parse_real_token(tk, "mutation rate");
  if (!(sample.theta > 0.0) || !std::isfinite(sample.theta))
    tk.fail_token("mutation rate must be positive and finite");
  tk.expect_line_end();

  int64_t previous_id = -1;
  while (tk.next_line()) {
    const int64_t id = detail::parse_int_token(tk, "type id");
    if (id < 0 || id >= sample.d)
      tk.fail_token(format_msg("type id %lld outside [0, %lld)", static_cast<long long>(id),
                               static_cast<long long>(sample.d)));
    if (id <= previous_id)
      tk.fail_token("type ids must be strictly increasing");
    const int64_t count = detail::parse_int_token(tk, "lineage count");
    if (count < 1) tk.fail_token("lineage count must be at least 1");
    if (count > INT32_MAX) tk.fail_token("lineage count too large");
    tk.expect_line_end();
    sample.counts.add(static_cast<type_id>(id), static_cast<int>(count));
    previous_id = id;
  }
  check(sample.counts.size() >= 1,
        format_msg("%s: sample file lists no occupied types", source.c_str()));
  return sample;
}

inline FaSample read_fa_sample(const std::string& path) {
  return parse_fa_sample(read_text_file(path), path);
}

inline std::string format_fa_sample(const FaSample& sample) {
  std::string out = format_msg("%lld %.17g\n", static_cast<long long>(sample.d), sample.theta);
  for (auto [t, c] : sample.counts.entries())
    out += format_msg("%lld %lld\n", static_cast<long long>(t), static_cast<long long>(c));
  return out;
}

inline void write_fa_sample(const std::string& path, const FaSample& sample) {
  write_text_file(path, format_fa_sample(sample));
}

// --- dense matrix files -------------------------------------------------------

inline Matrix parse_matrix(const std::string& text, const std::string& source) {
  detail::LineTokenizer tk(text, source);
  std::vector<std::vector<double>> rows;
  size_t width = 0;
  while (tk.next_line()) {
    std::vector<double> row;
    while (true) {
      const std::string tok = tk.next_token();  // empty at end of line
      if (tok.empty()) break;
      size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size())
        tk.fail_token(format_msg("'%s' is not a valid matrix entry", tok.c_str()));
      row.push_back(value);
    }
    if (row.empty()) tk.fail(1, "blank line inside matrix file");
    if (width == 0)
      width = row.size();
    else if (row.size() != width)
      tk.fail(1, format_msg("row has %zu entries, expected %zu", row.size(), width));
    rows.push_back(std::move(row));
  }
  check(!rows.empty(), format_msg("%s: empty matrix file", source.c_str()));
  check(rows.size() == width,
        format_msg("%s: matrix is %zu x %zu, must be square", source.c_str(), rows.size(),
                   width));
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(width));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < width; ++j) m(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return m;
}

inline Matrix read_matrix(const std::string& path) {
  return parse_matrix(read_text_file(path), path);
}

inline std::string format_matrix(const Matrix& m) {
  std::string out;
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j)
      out += format_msg(j + 1 == m.cols() ? "%.17g" : "%.17g ", m(i, j));
    out += '\n';
  }
  return out;
}

inline void write_matrix(const std::string& path, const Matrix& m) {
  write_text_file(path, format_matrix(m));
}

}  // namespace coalsis
