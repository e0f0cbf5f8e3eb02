#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "nadjust/expreg.hpp"
#include "nadjust/garch.hpp"

namespace nadjust {

namespace detail {

// One CSV record: split on commas, tolerate a trailing CR, strip optional
// surrounding double quotes. Embedded commas/escapes are out of scope for
// the numeric tables handled here.
inline std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    std::string f = line.substr(start, pos == std::string::npos ? pos : pos - start);
    if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
    out.push_back(std::move(f));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_csv_number(const std::string& field, long line_no) {
  double v = 0.0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw ParseError("not a number: \"" + field + "\"", line_no);
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Regression table with the fixed header x1,x2,y.
inline ExpRegData load_expreg_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV file: " + path, 1);
  const auto header = detail::split_csv_line(line);
  if (header != std::vector<std::string>{"x1", "x2", "y"})
    throw ParseError("expected header x1,x2,y in " + path, 1);
  ExpRegData d;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 3) throw ParseError("expected 3 fields", line_no);
    d.x1.push_back(detail::parse_csv_number(f[0], line_no));
    d.x2.push_back(detail::parse_csv_number(f[1], line_no));
    d.y.push_back(detail::parse_csv_number(f[2], line_no));
  }
  if (d.y.empty()) throw InvalidData("no data rows in " + path);
  d.validate();
  return d;
}

inline void save_expreg_csv(const std::string& path, const ExpRegData& d) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write CSV file: " + path);
  out << "x1,x2,y\n";
  for (std::size_t i = 0; i < d.n(); ++i)
    out << detail::format_double(d.x1[i]) << ',' << detail::format_double(d.x2[i]) << ','
        << detail::format_double(d.y[i]) << '\n';
  if (!out) throw IoError("failed writing CSV file: " + path);
}

struct SeriesOptions {
  bool log_transform = false;  // requires strictly positive values
  bool demean = false;         // subtract the sample mean (after any log)
};

// Univariate series table: a `value` column, optionally accompanied by a
// `date` column (carried through untouched, ignored numerically).
inline ReturnSeries load_series_csv(const std::string& path, const SeriesOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV file: " + path, 1);
  const auto header = detail::split_csv_line(line);
  long value_col = -1;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "value") {
      value_col = static_cast<long>(j);
    } else if (header[j] != "date") {
      throw ParseError("unexpected column \"" + header[j] + "\" in " + path, 1);
    }
  }
  if (value_col < 0) throw ParseError("missing value column in " + path, 1);
  ReturnSeries s;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) throw ParseError("wrong field count", line_no);
    double v = detail::parse_csv_number(f[static_cast<std::size_t>(value_col)], line_no);
    if (opts.log_transform) {
      if (!(v > 0.0))
        throw NonPositiveUnderLog("non-positive value under log transform at line " +
                                  std::to_string(line_no) + " of " + path);
      v = std::log(v);
    }
    s.y.push_back(v);
  }
  if (s.y.empty()) throw InvalidData("no data rows in " + path);
  if (opts.demean) {
    double mean = 0.0;
    for (double v : s.y) mean += v;
    mean /= static_cast<double>(s.y.size());
    for (double& v : s.y) v -= mean;
  }
  return s;
}

inline void save_series_csv(const std::string& path, const ReturnSeries& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write CSV file: " + path);
  out << "value\n";
  for (double v : s.y) out << detail::format_double(v) << '\n';
  if (!out) throw IoError("failed writing CSV file: " + path);
}

}  // namespace nadjust
