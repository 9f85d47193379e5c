#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "segfit/model.hpp"

namespace segfit {

/// Input could not be read or parsed.
class CsvError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but holds values the estimators cannot use (inf, nan, overflow).
class DataError : public Error {
 public:
  using Error::Error;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t cols() const { return rows.empty() ? header.size() : rows.front().size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Comma-separated, all-numeric. Blank lines are skipped.
inline CsvTable read_csv(std::istream& in, bool has_header) {
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (header_pending) {
      for (auto f : fields) table.header.emplace_back(f);
      header_pending = false;
      continue;
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto f = fields[c];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      const std::string where = "line " + std::to_string(lineno) + ", column " + std::to_string(c + 1);
      if (ec == std::errc::result_out_of_range) throw DataError(where + ": numeric overflow in '" + std::string(f) + "'");
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty())
        throw CsvError(where + ": not a number: '" + std::string(f) + "'");
      if (!std::isfinite(v)) throw DataError(where + ": non-finite value '" + std::string(f) + "'");
      row.push_back(v);
    }
    if (!table.rows.empty() && row.size() != table.rows.front().size())
      throw CsvError("line " + std::to_string(lineno) + ": expected " + std::to_string(table.rows.front().size()) +
                     " columns, found " + std::to_string(row.size()));
    table.rows.push_back(std::move(row));
  }
  if (in.bad()) throw CsvError("read error");
  if (table.rows.empty()) throw CsvError("no data rows");
  return table;
}

inline CsvTable read_csv_file(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path + "'");
  try {
    return read_csv(in, has_header);
  } catch (const CsvError& e) {
    throw CsvError(path + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_exact(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct CsvIngestOptions {
  std::optional<std::size_t> y_col;          // default: last column
  std::optional<std::size_t> partition_col;  // default: 0, or 1 with time_index
  bool time_index = false;                   // features (1, t) with t the row number
};

struct IngestedData {
  DataSet dataset;
  std::vector<std::size_t> permutation;  // sorted row r came from input row permutation[r]
};

/// Turns a numeric table into a dataset sorted by the partition column.
inline IngestedData ingest(const CsvTable& table, const CsvIngestOptions& opt) {
  const std::size_t cols = table.cols();
  const std::size_t n = table.rows.size();
  const std::size_t y_col = opt.y_col.value_or(cols - 1);
  if (y_col >= cols) throw ParameterError("y column " + std::to_string(y_col) + " out of range for " + std::to_string(cols) + " columns");

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = table.rows[i][y_col];

  Matrix x;
  if (opt.time_index) {
    x = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      x(i, 1) = static_cast<double>(i);
    }
  } else {
    if (cols < 2) throw ParameterError("need at least one feature column besides y (or use the time index)");
    x = Matrix(n, cols - 1);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = 0;
      for (std::size_t c = 0; c < cols; ++c)
        if (c != y_col) x(i, j++) = table.rows[i][c];
    }
  }
  const std::size_t pcol = opt.partition_col.value_or(opt.time_index ? 1 : 0);
  if (pcol >= x.cols()) throw ParameterError("partition column " + std::to_string(pcol) + " out of range for " + std::to_string(x.cols()) + " features");
  auto [ds, perm] = DataSet::sorted(x, y, pcol);
  return {std::move(ds), std::move(perm)};
}

/// Feature columns then y, one row per line.
inline void write_dataset_csv(std::ostream& os, const DataSet& ds, bool header) {
  if (header) {
    for (std::size_t j = 0; j < ds.dim(); ++j) os << 'x' << j << ',';
    os << "y\n";
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) os << format_exact(v) << ',';
    os << format_exact(ds.y(i)) << '\n';
  }
}

inline void write_column_csv(std::ostream& os, const std::vector<double>& values, const std::string& header) {
  if (!header.empty()) os << header << '\n';
  for (double v : values) os << format_exact(v) << '\n';
}

}  // namespace segfit
