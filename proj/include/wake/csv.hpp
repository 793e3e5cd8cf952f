#pragma once

#include "wake/errors.hpp"

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace wake {

/// One probe-station evaluation, as persisted in the campaign CSV.
struct ResultRow {
  int iteration = 0;
  double spacing = 0.0;
  double x_p = 0.0;
  double delta_star = 0.0;
  double theta = 0.0;
  double e_l2 = 0.0;
  double e_cos = 0.0;
  double j = 0.0;
  double cyl1_error_d = 0.0;
  double cyl2_error_d = 0.0;
  bool geom_valid = false;
  std::uint64_t seed = 0;
};

inline const char* csv_header() {
  return "iteration,spacing,x_p,delta_star,theta,e_l2,e_cos,j,"
         "cyl1_error_D,cyl2_error_D,geom_valid,seed";
}

/// Nine significant digits, the repo-wide float wire format.
inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string format_row(const ResultRow& r) {
  std::string out;
  out += std::to_string(r.iteration);
  for (double v : {r.spacing, r.x_p, r.delta_star, r.theta, r.e_l2, r.e_cos,
                   r.j, r.cyl1_error_d, r.cyl2_error_d}) {
    out += ',';
    out += format_g9(v);
  }
  out += r.geom_valid ? ",1," : ",0,";
  out += std::to_string(r.seed);
  return out;
}

namespace detail {

inline double parse_double_field(const std::string& s, const char* what) {
  if (s.empty()) throw FormatError(std::string("empty field: ") + what);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE)
    throw FormatError(std::string("bad numeric field ") + what + ": '" + s +
                      "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline ResultRow parse_row(const std::string& line) {
  const auto f = detail::split_csv_line(line);
  if (f.size() != 12)
    throw FormatError("expected 12 fields, got " + std::to_string(f.size()));
  ResultRow r;
  r.iteration =
      static_cast<int>(detail::parse_double_field(f[0], "iteration"));
  r.spacing = detail::parse_double_field(f[1], "spacing");
  r.x_p = detail::parse_double_field(f[2], "x_p");
  r.delta_star = detail::parse_double_field(f[3], "delta_star");
  r.theta = detail::parse_double_field(f[4], "theta");
  r.e_l2 = detail::parse_double_field(f[5], "e_l2");
  r.e_cos = detail::parse_double_field(f[6], "e_cos");
  r.j = detail::parse_double_field(f[7], "j");
  r.cyl1_error_d = detail::parse_double_field(f[8], "cyl1_error_D");
  r.cyl2_error_d = detail::parse_double_field(f[9], "cyl2_error_D");
  if (f[10] == "1")
    r.geom_valid = true;
  else if (f[10] == "0")
    r.geom_valid = false;
  else
    throw FormatError("geom_valid must be 0 or 1, got '" + f[10] + "'");
  errno = 0;
  char* end = nullptr;
  const unsigned long long sv = std::strtoull(f[11].c_str(), &end, 10);
  if (f[11].empty() || end != f[11].c_str() + f[11].size() || errno == ERANGE)
    throw FormatError("bad seed field: '" + f[11] + "'");
  r.seed = sv;
  return r;
}

inline std::vector<ResultRow> read_result_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw FormatError("empty CSV (missing header): " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header())
    throw FormatError("unexpected CSV header in " + path.string() + ": '" +
                      line + "'");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      rows.push_back(parse_row(line));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  return rows;
}

/// Appends rows by rewriting the whole file through a temporary and renaming
/// it into place, so readers never observe a torn file.
inline void append_rows_atomic(const std::filesystem::path& path,
                               const std::vector<ResultRow>& rows) {
  std::string content;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot reopen CSV: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
    if (!content.empty() && content.back() != '\n') content += '\n';
  } else {
    content = std::string(csv_header()) + "\n";
  }
  for (const auto& r : rows) {
    content += format_row(r);
    content += '\n';
  }

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write temp CSV: " + tmp.string());
    out << content;
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace wake
