// ============================================================================
//  coalsis/csv.hpp
//
//  Minimal CSV tables for experiment output.  Cells never contain commas,
//  quotes, or newlines (numbers and short identifiers only), so no quoting
//  dialect is needed; serialization is the exact byte-level contract used by
//  the reproducibility checks.  Doubles are rendered with "%.17g" so that a
//  written table re-parses to bit-identical values.
// ============================================================================
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coalsis/common.hpp"

namespace coalsis {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    raise(format_msg("CSV table has no column named '%s'", name.c_str()));
  }

  const std::string& cell(size_t row, const std::string& name) const {
    check(row < rows.size(), "CSV cell row out of range");
    return rows[row][static_cast<size_t>(column(name))];
  }

  double number(size_t row, const std::string& name) const {
    return std::stod(cell(row, name));
  }

  // Serializes with a trailing newline; every cell must respect the no-comma
  // contract and every row must match the header width.
  std::string to_string() const {
    check(!header.empty(), "CSV table has no header");
    std::string out = join(header);
    for (const auto& row : rows) {
      check(row.size() == header.size(), "CSV row width does not match the header");
      out += join(row);
    }
    return out;
  }

  bool operator==(const CsvTable& o) const { return header == o.header && rows == o.rows; }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (size_t j = 0; j < cells.size(); ++j) {
      const std::string& c = cells[j];
      check(c.find_first_of(",\"\n\r") == std::string::npos,
            format_msg("CSV cell '%s' contains a reserved character", c.c_str()));
      if (j) line += ',';
      line += c;
    }
    line += '\n';
    return line;
  }
};

// Cell formatters: one canonical rendering per value type.
inline std::string csv_cell(double v) { return format_msg("%.17g", v); }
inline std::string csv_cell(int64_t v) { return format_msg("%lld", static_cast<long long>(v)); }
inline std::string csv_cell(int v) { return csv_cell(static_cast<int64_t>(v)); }
inline std::string csv_cell(uint64_t v) {
  return format_msg("%llu", static_cast<unsigned long long>(v));
}

inline CsvTable parse_csv(const std::string& text, const std::string& source) {
  CsvTable table;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + (end < text.size() ? 1 : 0);
    ++line_no;

    std::vector<std::string> cells;
    size_t field_start = 0;
    while (true) {
      size_t comma = line.find(',', field_start);
      if (comma == std::string::npos) {
        cells.push_back(line.substr(field_start));
        break;
      }
      cells.push_back(line.substr(field_start, comma - field_start));
      field_start = comma + 1;
    }
    if (line_no == 1) {
      table.header = std::move(cells);
    } else {
      check(cells.size() == table.header.size(),
            format_msg("%s:%zu: row has %zu fields, header has %zu", source.c_str(), line_no,
                       cells.size(), table.header.size()));
      table.rows.push_back(std::move(cells));
    }
  }
  check(!table.header.empty(), format_msg("%s: empty CSV", source.c_str()));
  return table;
}

}  // namespace coalsis
