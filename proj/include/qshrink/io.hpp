#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "qshrink/dataset.hpp"
#include "qshrink/error.hpp"

namespace qshrink {

/// Shortest decimal that parses back to the same double; NaN prints as an
/// empty cell so missing values stay missing.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never see a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Tidy output table; every cell is already formatted text.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    if (row.size() != header.size()) throw DataError("table row width does not match header");
    rows.push_back(std::move(row));
  }
};

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Splits one CSV record; handles quoted fields with doubled quotes.
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("unterminated quote on line " + std::to_string(line_no));
  out.push_back(cur);
  for (auto& f : out) {
    const auto a = f.find_first_not_of(" \t\r");
    const auto b = f.find_last_not_of(" \t\r");
    f = a == std::string::npos ? std::string() : f.substr(a, b - a + 1);
  }
  return out;
}

inline bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan"; }

}  // namespace detail

inline std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j) out += ',';
      out += detail::csv_escape(cells[j]);
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

inline void write_table(const std::filesystem::path& path, const Table& t) { atomic_write(path, to_csv(t)); }

struct CsvLoad {
  Dataset data;
  std::vector<std::size_t> dropped_rows;  // 1-based data-row numbers skipped for missing values
};

/// Reads a headed CSV. Rows with a missing selected cell (empty, NA, NaN) are
/// dropped and reported; any other non-numeric selected cell is an error.
/// With no covariate names every column except the response is used.
inline CsvLoad parse_csv(const std::string& text, const std::string& response,
                         const std::vector<std::string>& covariates = {}, const std::string& source = "input") {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = detail::split_csv_line(line, line_no);
    break;
  }
  if (header.empty()) throw DataError(source + " is empty");
  std::map<std::string, std::size_t> pos;
  for (std::size_t j = 0; j < header.size(); ++j) pos.emplace(header[j], j);
  auto find = [&](const std::string& name) {
    auto it = pos.find(name);
    if (it == pos.end()) throw DataError("column \"" + name + "\" not found in " + source);
    return it->second;
  };
  const std::size_t yc = find(response);
  std::vector<std::string> names = covariates;
  if (names.empty())
    for (const auto& h : header)
      if (h != response) names.push_back(h);
  std::vector<std::size_t> xc;
  for (const auto& nm : names) xc.push_back(find(nm));

  std::vector<double> yv, xv;
  CsvLoad out;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row_no;
    const auto cells = detail::split_csv_line(line, line_no);
    if (cells.size() != header.size()) {
      throw DataError(source + " line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    std::vector<double> vals;
    bool missing = false;
    auto take = [&](std::size_t c) {
      double v = 0.0;
      if (detail::is_missing(cells[c])) {
        missing = true;
      } else if (!detail::parse_number(cells[c], v) || !std::isfinite(v)) {
        throw DataError("non-numeric value \"" + cells[c] + "\" at " + source + " line " + std::to_string(line_no) +
                        ", column \"" + header[c] + "\"");
      }
      vals.push_back(v);
    };
    take(yc);
    for (std::size_t c : xc) take(c);
    if (missing) {
      out.dropped_rows.push_back(row_no);
      continue;
    }
    yv.push_back(vals[0]);
    xv.insert(xv.end(), vals.begin() + 1, vals.end());
  }
  const Index n = static_cast<Index>(yv.size());
  if (n == 0) throw DataError(source + " has no complete data rows");
  const Index p = static_cast<Index>(names.size());
  MatrixXd X(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) X(i, j) = xv[static_cast<std::size_t>(i * p + j)];
  out.data = make_dataset(std::move(X), Eigen::Map<VectorXd>(yv.data(), n), true, names);
  return out;
}

inline CsvLoad load_csv(const std::filesystem::path& path, const std::string& response,
                        const std::vector<std::string>& covariates = {}) {
  return parse_csv(read_file(path), response, covariates, path.string());
}

/// Writes response then covariates at full precision.
inline void write_csv(const std::filesystem::path& path, const Dataset& d, const std::string& response = "y") {
  Table t;
  t.header.push_back(response);
  for (Index j = 0; j < d.p(); ++j) t.header.push_back(d.label(j));
  for (Index i = 0; i < d.n(); ++i) {
    std::vector<std::string> r{format_double(d.y(i))};
    for (Index j = 0; j < d.p(); ++j) r.push_back(format_double(d.X(i, j)));
    t.add(std::move(r));
  }
  write_table(path, t);
}

/// Headerless or headed numeric matrix (e.g. a Gamma matrix for the risk
/// command). A first row that does not parse as numbers is treated as a header.
inline MatrixXd load_matrix(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line, line_no);
    std::vector<double> r;
    bool numeric = true;
    for (const auto& c : cells) {
      double v;
      if (!detail::parse_number(c, v)) {
        numeric = false;
        break;
      }
      r.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && line_no == 1) continue;
      throw DataError("non-numeric entry in " + path.string() + " line " + std::to_string(line_no));
    }
    if (!rows.empty() && r.size() != rows.front().size()) throw DataError("ragged rows in " + path.string());
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError(path.string() + " is empty");
  MatrixXd M(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < M.rows(); ++i)
    for (Index j = 0; j < M.cols(); ++j) M(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return M;
}

}  // namespace qshrink
