#pragma once

#include "wake/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace wake::svg {

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;

  void widen(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  void pad() {
    if (hi <= lo) {
      lo -= 0.5;
      hi += 0.5;
      return;
    }
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 600.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 368.0;

inline double map_x(double v, const Range& r) {
  return kLeft + (v - r.lo) / (r.hi - r.lo) * (kRight - kLeft);
}

inline double map_y(double v, const Range& r) {
  return kBottom - (v - r.lo) / (r.hi - r.lo) * (kBottom - kTop);
}

inline void open_canvas(std::string& s, const std::string& title) {
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
       "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) +
       " " + num(kHeight) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) +
       "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"15\">" +
       escape(title) + "</text>\n";
}

inline void axes(std::string& s, const Range& rx, const Range& ry,
                 const std::string& x_label, const std::string& y_label) {
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kBottom) + "\" x2=\"" +
       num(kRight) + "\" y2=\"" + num(kBottom) +
       "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" +
       num(kLeft) + "\" y2=\"" + num(kBottom) +
       "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = rx.lo + (rx.hi - rx.lo) * i / 5.0;
    const double fy = ry.lo + (ry.hi - ry.lo) * i / 5.0;
    const double px = map_x(fx, rx);
    const double py = map_y(fy, ry);
    s += "<line x1=\"" + num(px) + "\" y1=\"" + num(kBottom) + "\" x2=\"" +
         num(px) + "\" y2=\"" + num(kBottom + 5) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(px) + "\" y=\"" + num(kBottom + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\">" +
         num(fx) + "</text>\n";
    s += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(py) + "\" x2=\"" +
         num(kLeft) + "\" y2=\"" + num(py) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" "
         "font-size=\"11\">" +
         num(fy) + "</text>\n";
  }
  s += "<text x=\"" + num((kLeft + kRight) / 2) + "\" y=\"" +
       num(kHeight - 8) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"13\">" +
       escape(x_label) + "</text>\n";
  s += "<text x=\"16\" y=\"" + num((kTop + kBottom) / 2) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
       "transform=\"rotate(-90 16 " +
       num((kTop + kBottom) / 2) + ")\">" + escape(y_label) + "</text>\n";
}

inline const char* series_color(std::size_t i) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                   "#9467bd", "#ff7f0e", "#8c564b"};
  return kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
}

}  // namespace detail

struct Series {
  std::string label;
  std::vector<PointXY> points;
};

/// Point-and-line chart of one or more series over a shared axis frame.
inline std::string render_scaling(const std::vector<Series>& series,
                                  const std::string& title,
                                  const std::string& x_label,
                                  const std::string& y_label) {
  if (series.empty())
    throw std::invalid_argument("render_scaling: no series");
  bool any = false;
  detail::Range rx, ry;
  rx.lo = ry.lo = std::numeric_limits<double>::infinity();
  rx.hi = ry.hi = -std::numeric_limits<double>::infinity();
  for (const Series& s : series)
    for (const PointXY& p : s.points) {
      any = true;
      rx.widen(p.x);
      ry.widen(p.y);
    }
  if (!any) throw std::invalid_argument("render_scaling: empty series");
  rx.pad();
  ry.pad();

  std::string out;
  detail::open_canvas(out, title);
  detail::axes(out, rx, ry, x_label, y_label);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = detail::series_color(i);
    std::vector<PointXY> pts = series[i].points;
    std::stable_sort(pts.begin(), pts.end(),
                     [](const PointXY& a, const PointXY& b) {
                       return a.x < b.x;
                     });
    if (pts.size() > 1) {
      out += "<polyline fill=\"none\" stroke=\"";
      out += color;
      out += "\" stroke-width=\"1.5\" points=\"";
      for (const PointXY& p : pts) {
        out += detail::num(detail::map_x(p.x, rx)) + "," +
               detail::num(detail::map_y(p.y, ry)) + " ";
      }
      out += "\"/>\n";
    }
    for (const PointXY& p : pts) {
      out += "<circle cx=\"" + detail::num(detail::map_x(p.x, rx)) +
             "\" cy=\"" + detail::num(detail::map_y(p.y, ry)) +
             "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    const double ly = detail::kTop + 14.0 * static_cast<double>(i);
    out += "<rect x=\"" + detail::num(detail::kRight - 150) + "\" y=\"" +
           detail::num(ly - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
           color + "\"/>\n";
    out += "<text x=\"" + detail::num(detail::kRight - 136) + "\" y=\"" +
           detail::num(ly + 1) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::escape(series[i].label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

/// Landscape heatmap. Finite cells run on a blue-to-red ramp; absent cells
/// (NaN) get a neutral grey fill.
inline std::string render_heatmap(const LandscapeGrid& grid,
                                  const std::string& title,
                                  const std::string& x_label,
                                  const std::string& y_label) {
  if (grid.spacings.empty() || grid.stations.empty())
    throw std::invalid_argument("render_heatmap: empty grid");

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& row : grid.values)
    for (double v : row)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!(lo <= hi))
    throw std::invalid_argument("render_heatmap: no finite cells");
  if (hi == lo) hi = lo + 1.0;

  const auto ns = grid.stations.size();
  const auto nr = grid.spacings.size();
  const double cw = (detail::kRight - detail::kLeft) / static_cast<double>(ns);
  const double ch =
      (detail::kBottom - detail::kTop) / static_cast<double>(nr);

  std::string out;
  detail::open_canvas(out, title);
  for (std::size_t r = 0; r < nr; ++r) {
    for (std::size_t c = 0; c < ns; ++c) {
      const double v = grid.values[r][c];
      std::string fill = "#dddddd";
      if (std::isfinite(v)) {
        const double t = (v - lo) / (hi - lo);
        const int red = static_cast<int>(std::lround(255.0 * t));
        const int blue = static_cast<int>(std::lround(255.0 * (1.0 - t)));
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x40%02x", red, blue);
        fill = buf;
      }
      // Row 0 (smallest spacing) at the bottom, like a conventional S axis.
      const double x = detail::kLeft + cw * static_cast<double>(c);
      const double y = detail::kBottom - ch * static_cast<double>(r + 1);
      out += "<rect x=\"" + detail::num(x) + "\" y=\"" + detail::num(y) +
             "\" width=\"" + detail::num(cw) + "\" height=\"" +
             detail::num(ch) + "\" fill=\"" + fill + "\"/>\n";
    }
  }
  for (std::size_t c = 0; c < ns; c += std::max<std::size_t>(1, ns / 8)) {
    const double x = detail::kLeft + cw * (static_cast<double>(c) + 0.5);
    out += "<text x=\"" + detail::num(x) + "\" y=\"" +
           detail::num(detail::kBottom + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"10\">" +
           detail::num(grid.stations[c]) + "</text>\n";
  }
  for (std::size_t r = 0; r < nr; r += std::max<std::size_t>(1, nr / 8)) {
    const double y = detail::kBottom - ch * (static_cast<double>(r) + 0.5);
    out += "<text x=\"" + detail::num(detail::kLeft - 8) + "\" y=\"" +
           detail::num(y + 3) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"10\">" +
           detail::num(grid.spacings[r]) + "</text>\n";
  }
  out += "<text x=\"" + detail::num((detail::kLeft + detail::kRight) / 2) +
         "\" y=\"" + detail::num(detail::kHeight - 8) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">" +
         detail::escape(x_label) + "</text>\n";
  out += "<text x=\"16\" y=\"" +
         detail::num((detail::kTop + detail::kBottom) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 16 " +
         detail::num((detail::kTop + detail::kBottom) / 2) + ")\">" +
         detail::escape(y_label) + "</text>\n";
  out += "</svg>\n";
  return out;
}

/// |delta x*| against spacing.
inline std::string render_divergence(const std::vector<DivergenceRow>& rows,
                                     const std::string& title) {
  if (rows.empty())
    throw std::invalid_argument("render_divergence: empty table");
  Series s;
  s.label = "|dx*| / D";
  for (const DivergenceRow& r : rows)
    s.points.push_back({r.spacing, r.abs_divergence});
  return render_scaling({s}, title, "S / D", "|dx*| / D");
}

}  // namespace wake::svg
