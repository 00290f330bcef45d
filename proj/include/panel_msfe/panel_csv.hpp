#pragma once

// Long-format panel files.
//
//   panel file:    id,t,y,x1,...,xK   one row per (individual, period)
//   predict file:  id,x1,...,xK       one row per individual: x_{i,T+1}
//
// Individuals keep the order of their first appearance in the panel file.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "panel_msfe/error.hpp"
#include "panel_msfe/panel.hpp"

namespace panel_msfe {

/// Column names of the long-format panel file. Empty `x` means every column
/// other than id, time and y, in file order.
struct ColumnMapping {
  std::string id = "id";
  std::string time = "t";
  std::string y = "y";
  std::vector<std::string> x;
  friend bool operator==(const ColumnMapping&, const ColumnMapping&) = default;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(trim(cell));
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  ///< 1-based file line of each row
};

inline CsvTable read_csv(std::istream& in, const std::string& label) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw ParseError(label + " line " + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw ParseError(label + ": missing header row");
  return t;
}

inline std::size_t column_index(const CsvTable& t, const std::string& name, const std::string& label) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw ParseError(label + ": no column named '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

inline double numeric_cell(const CsvTable& t, std::size_t row, std::size_t col,
                           const std::string& label) {
  const std::string& s = t.rows[row][col];
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw NonNumericCell(label + " row " + std::to_string(t.line_numbers[row]) + ", column '" +
                         t.header[col] + "': '" + s + "' is not a finite number");
  return v;
}

inline long integer_cell(const CsvTable& t, std::size_t row, std::size_t col, const std::string& label) {
  const std::string& s = t.rows[row][col];
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw NonNumericCell(label + " row " + std::to_string(t.line_numbers[row]) + ", column '" +
                         t.header[col] + "': '" + s + "' is not an integer");
  return v;
}

}  // namespace detail

/// Reads a balanced long-format panel and its prediction regressors.
/// Throws UnbalancedPanel, MissingPrediction, NonNumericCell or ParseError.
inline Panel load_panel(std::istream& panel_in, std::istream& predict_in,
                        const ColumnMapping& columns = {}) {
  using detail::column_index;
  const std::string pl = "panel file";
  const std::string ql = "prediction file";
  const detail::CsvTable pt = detail::read_csv(panel_in, pl);
  const detail::CsvTable qt = detail::read_csv(predict_in, ql);

  const std::size_t id_col = column_index(pt, columns.id, pl);
  const std::size_t t_col = column_index(pt, columns.time, pl);
  const std::size_t y_col = column_index(pt, columns.y, pl);
  std::vector<std::string> x_names = columns.x;
  if (x_names.empty())
    for (std::size_t c = 0; c < pt.header.size(); ++c)
      if (c != id_col && c != t_col && c != y_col) x_names.push_back(pt.header[c]);
  if (x_names.empty()) throw ParseError("panel file has no regressor columns");
  std::vector<std::size_t> x_cols;
  for (const auto& name : x_names) x_cols.push_back(column_index(pt, name, pl));
  const Index k = static_cast<Index>(x_cols.size());

  // Group rows by individual, preserving first-appearance order.
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<std::pair<long, std::size_t>>> rows_of;
  for (std::size_t r = 0; r < pt.rows.size(); ++r) {
    const std::string& id = pt.rows[r][id_col];
    auto [it, fresh] = slot.emplace(id, ids.size());
    if (fresh) {
      ids.push_back(id);
      rows_of.emplace_back();
    }
    rows_of[it->second].emplace_back(detail::integer_cell(pt, r, t_col, pl), r);
  }
  if (ids.empty()) throw InvalidPanel("panel file has no data rows");

  for (auto& rows : rows_of) std::sort(rows.begin(), rows.end());
  const auto& ref = rows_of.front();
  for (std::size_t i = 0; i < rows_of.size(); ++i) {
    const auto& rows = rows_of[i];
    bool ok = rows.size() == ref.size();
    for (std::size_t s = 0; ok && s < rows.size(); ++s) {
      ok = rows[s].first == ref[s].first;
      if (s > 0) ok = ok && rows[s].first == rows[s - 1].first + 1;
    }
    if (!ok) throw UnbalancedPanel("individual '" + ids[i] + "' does not share the contiguous time index of '" + ids[0] + "'");
  }

  const Index n = static_cast<Index>(ids.size());
  const Index t_len = static_cast<Index>(ref.size());
  Panel panel;
  panel.y.resize(t_len, n);
  panel.x_next.resize(k, n);
  panel.x.assign(n, MatrixXd(t_len, k));
  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < t_len; ++s) {
      const std::size_t r = rows_of[i][s].second;
      panel.y(s, i) = detail::numeric_cell(pt, r, y_col, pl);
      for (Index j = 0; j < k; ++j) panel.x[i](s, j) = detail::numeric_cell(pt, r, x_cols[j], pl);
    }
  }

  const std::size_t qid = column_index(qt, columns.id, ql);
  std::vector<std::size_t> qx;
  for (const auto& name : x_names) qx.push_back(column_index(qt, name, ql));
  std::vector<bool> seen(n, false);
  for (std::size_t r = 0; r < qt.rows.size(); ++r) {
    const auto it = slot.find(qt.rows[r][qid]);
    if (it == slot.end()) continue;
    const auto i = static_cast<Index>(it->second);
    for (Index j = 0; j < k; ++j) panel.x_next(j, i) = detail::numeric_cell(qt, r, qx[j], ql);
    seen[i] = true;
  }
  for (Index i = 0; i < n; ++i)
    if (!seen[i]) throw MissingPrediction("no prediction regressors for individual '" + ids[i] + "'");

  panel.validate();
  return panel;
}

inline Panel load_panel(const std::string& panel_path, const std::string& predict_path,
                        const ColumnMapping& columns = {}) {
  std::ifstream p(panel_path);
  if (!p) throw IoError("cannot open panel file '" + panel_path + "'");
  std::ifstream q(predict_path);
  if (!q) throw IoError("cannot open prediction file '" + predict_path + "'");
  return load_panel(p, q, columns);
}

/// Writes the panel in the layout read by load_panel (ids 1..N, periods 1..T,
/// columns x1..xK), with round-trip precision.
inline void write_panel(const Panel& panel, std::ostream& panel_out, std::ostream& predict_out) {
  panel_out << std::setprecision(17);
  predict_out << std::setprecision(17);
  panel_out << "id,t,y";
  predict_out << "id";
  for (Index j = 0; j < panel.k(); ++j) {
    panel_out << ",x" << j + 1;
    predict_out << ",x" << j + 1;
  }
  panel_out << '\n';
  predict_out << '\n';
  for (Index i = 0; i < panel.n(); ++i) {
    for (Index s = 0; s < panel.t_len(); ++s) {
      panel_out << i + 1 << ',' << s + 1 << ',' << panel.y(s, i);
      for (Index j = 0; j < panel.k(); ++j) panel_out << ',' << panel.x[i](s, j);
      panel_out << '\n';
    }
    predict_out << i + 1;
    for (Index j = 0; j < panel.k(); ++j) predict_out << ',' << panel.x_next(j, i);
    predict_out << '\n';
  }
}

inline void write_panel(const Panel& panel, const std::string& panel_path,
                        const std::string& predict_path) {
  std::ofstream p(panel_path);
  std::ofstream q(predict_path);
  if (!p || !q) throw IoError("cannot write panel files");
  write_panel(panel, p, q);
}

}  // namespace panel_msfe
