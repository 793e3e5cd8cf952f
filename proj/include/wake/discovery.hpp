#pragma once

#include "wake/csv.hpp"
#include "wake/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace wake {

struct PointXY {
  double x = 0.0;
  double y = 0.0;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double sse = 0.0;
  int n = 0;
};

/// Ordinary least squares. R^2 is defined as 1 when the responses are
/// constant (SST = 0 forces SSE = 0 for the OLS line).
inline LinearFit linear_fit(const std::vector<PointXY>& pts) {
  const auto n = static_cast<int>(pts.size());
  if (n < 2) throw std::invalid_argument("linear_fit: need at least 2 points");
  double xb = 0.0, yb = 0.0;
  for (const auto& p : pts) {
    xb += p.x;
    yb += p.y;
  }
  xb /= n;
  yb /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : pts) {
    sxx += (p.x - xb) * (p.x - xb);
    sxy += (p.x - xb) * (p.y - yb);
  }
  if (sxx == 0.0)
    throw std::invalid_argument("linear_fit: degenerate abscissae");
  LinearFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = yb - f.slope * xb;
  double sse = 0.0, sst = 0.0;
  for (const auto& p : pts) {
    const double r = p.y - (f.slope * p.x + f.intercept);
    sse += r * r;
    sst += (p.y - yb) * (p.y - yb);
  }
  f.sse = sse;
  f.r_squared = sst > 0.0 ? 1.0 - sse / sst : 1.0;
  return f;
}

struct PiecewiseFit {
  double breakpoint = 0.0;
  LinearFit left;
  LinearFit right;
  double total_sse = 0.0;
  int split_index = 0;  // size of the left segment
};

namespace detail {

inline std::vector<PointXY> sorted_by_x(std::vector<PointXY> pts) {
  std::stable_sort(pts.begin(), pts.end(), [](const PointXY& a,
                                              const PointXY& b) {
    return a.x < b.x;
  });
  return pts;
}

}  // namespace detail

/// Exhaustive split search: the left segment takes k points (k >= min_segment)
/// and the right keeps at least min_segment - 1, so a boundary point belongs
/// to the left side only. Breakpoint is the midpoint of the bounding
/// abscissae; ties in total SSE go to the smallest split.
inline PiecewiseFit piecewise_fit(std::vector<PointXY> pts,
                                  int min_segment = 3) {
  if (min_segment < 2)
    throw std::invalid_argument("piecewise_fit: min_segment must be >= 2");
  const auto n = static_cast<int>(pts.size());
  if (n < 2 * min_segment - 1)
    throw std::invalid_argument(
        "piecewise_fit: need at least 2*min_segment - 1 points");
  pts = detail::sorted_by_x(pts);

  bool have = false;
  PiecewiseFit best;
  for (int k = min_segment; k <= n - (min_segment - 1); ++k) {
    std::vector<PointXY> left(pts.begin(), pts.begin() + k);
    std::vector<PointXY> right(pts.begin() + k, pts.end());
    LinearFit fl, fr;
    try {
      fl = linear_fit(left);
      fr = linear_fit(right);
    } catch (const std::invalid_argument&) {
      continue;  // coincident abscissae on one side; skip this split
    }
    const double tot = fl.sse + fr.sse;
    if (!have || tot < best.total_sse) {
      have = true;
      best.total_sse = tot;
      best.split_index = k;
      best.breakpoint = 0.5 * (pts[static_cast<std::size_t>(k - 1)].x +
                               pts[static_cast<std::size_t>(k)].x);
      best.left = fl;
      best.right = fr;
    }
  }
  if (!have)
    throw std::invalid_argument("piecewise_fit: no admissible split");
  return best;
}

enum class ModelChoice { single, two_segment };

struct ModelSelection {
  ModelChoice choice = ModelChoice::single;
  LinearFit single;
  PiecewiseFit two_segment;
  double bic_single = 0.0;
  double bic_two = 0.0;
};

namespace detail {

/// BIC with an SSE floor of 1e-12 * SST so noiseless fits do not send the
/// log to -infinity.
inline double bic_score(int n, double sse, int p, double sst) {
  const double floored = std::max(sse, 1e-12 * sst);
  return n * std::log(floored / n) + p * std::log(static_cast<double>(n));
}

}  // namespace detail

/// Single line (p = 2) vs two segments (p = 5) under BIC; ties favor the
/// simpler model.
inline ModelSelection select_model(std::vector<PointXY> pts,
                                   int min_segment = 3) {
  pts = detail::sorted_by_x(pts);
  ModelSelection sel;
  sel.single = linear_fit(pts);
  sel.two_segment = piecewise_fit(pts, min_segment);
  const auto n = static_cast<int>(pts.size());
  double yb = 0.0;
  for (const auto& p : pts) yb += p.y;
  yb /= n;
  double sst = 0.0;
  for (const auto& p : pts) sst += (p.y - yb) * (p.y - yb);
  sel.bic_single = detail::bic_score(n, sel.single.sse, 2, sst);
  sel.bic_two = detail::bic_score(n, sel.two_segment.total_sse, 5, sst);
  sel.choice = sel.bic_single <= sel.bic_two ? ModelChoice::single
                                             : ModelChoice::two_segment;
  return sel;
}

/// Per-spacing extremum over the geometrically valid rows.
inline std::vector<OptimumPoint> best_per_spacing(
    const std::vector<ResultRow>& rows, const MetricMode& mode) {
  if (rows.empty())
    throw std::invalid_argument("best_per_spacing: no rows");
  std::map<double, std::vector<ProbeResult>> by_spacing;
  for (const ResultRow& r : rows) {
    if (!r.geom_valid) continue;
    ProbeResult pr;
    pr.spacing = r.spacing;
    pr.x_p = r.x_p;
    pr.metrics.delta_star = r.delta_star;
    pr.metrics.theta = r.theta;
    pr.metrics.e_l2 = r.e_l2;
    pr.metrics.e_cos = r.e_cos;
    pr.metrics.j = r.j;
    by_spacing[r.spacing].push_back(pr);
  }
  if (by_spacing.empty())
    throw std::invalid_argument("best_per_spacing: no geometrically valid rows");
  std::vector<OptimumPoint> out;
  out.reserve(by_spacing.size());
  for (const auto& [spacing, results] : by_spacing)
    out.push_back(find_extremum(results, mode));
  return out;
}

struct DivergenceRow {
  double spacing = 0.0;
  double x_delta_star = 0.0;
  double x_theta_star = 0.0;
  double abs_divergence = 0.0;
};

/// Pairs delta* and theta optima by spacing; spacings are matched to the
/// nearest partner within 0.1 D, and unmatched entries are skipped with a
/// warning. The reported spacing is the delta*-side value.
inline std::vector<DivergenceRow> divergence_table(
    const std::vector<OptimumPoint>& delta_opts,
    const std::vector<OptimumPoint>& theta_opts,
    std::vector<std::string>* warnings = nullptr) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };
  std::vector<DivergenceRow> out;
  for (const OptimumPoint& d : delta_opts) {
    const OptimumPoint* best = nullptr;
    double best_gap = 0.1;
    for (const OptimumPoint& t : theta_opts) {
      const double gap = std::abs(t.spacing - d.spacing);
      if (gap <= best_gap + 1e-12 && (!best || gap < best_gap)) {
        best = &t;
        best_gap = gap;
      }
    }
    if (!best) {
      warn("no theta optimum within 0.1 D of spacing " + format_g9(d.spacing));
      continue;
    }
    DivergenceRow row;
    row.spacing = d.spacing;
    row.x_delta_star = d.x_star;
    row.x_theta_star = best->x_star;
    row.abs_divergence = std::abs(best->x_star - d.x_star);
    out.push_back(row);
  }
  for (const OptimumPoint& t : theta_opts) {
    bool matched = false;
    for (const OptimumPoint& d : delta_opts)
      if (std::abs(t.spacing - d.spacing) <= 0.1 + 1e-12) matched = true;
    if (!matched)
      warn("no delta* optimum within 0.1 D of spacing " +
           format_g9(t.spacing));
  }
  return out;
}

struct LandscapeGrid {
  std::vector<double> spacings;             // ascending
  std::vector<double> stations;             // ascending union of x_p values
  std::vector<std::vector<double>> values;  // [spacing][station], NaN = absent
};

/// Rectangularizes the ragged per-spacing sweeps over the union of stations.
/// Values are copied from rows verbatim; cells a spacing never probed stay
/// NaN.
inline LandscapeGrid landscape_grid(const std::vector<ResultRow>& rows,
                                    const MetricMode& mode) {
  if (rows.empty())
    throw std::invalid_argument("landscape_grid: no rows");
  const auto key = [&](const ResultRow& r) {
    return mode.primary == PrimaryMetric::delta_star ? r.delta_star : r.theta;
  };

  LandscapeGrid g;
  std::map<double, std::map<double, double>> cells;
  std::map<double, int> station_index;
  for (const ResultRow& r : rows) {
    cells[r.spacing][r.x_p] = key(r);
    station_index.emplace(r.x_p, 0);
  }
  int idx = 0;
  for (auto& [x, i] : station_index) {
    i = idx++;
    g.stations.push_back(x);
  }
  for (const auto& [spacing, row_cells] : cells) {
    g.spacings.push_back(spacing);
    std::vector<double> vals(g.stations.size(),
                             std::numeric_limits<double>::quiet_NaN());
    for (const auto& [x, v] : row_cells)
      vals[static_cast<std::size_t>(station_index[x])] = v;
    g.values.push_back(std::move(vals));
  }
  return g;
}

}  // namespace wake
