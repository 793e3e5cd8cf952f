#pragma once

#include "wake/field.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace wake {

/// Integral wake quantities and matching errors at one probe station.
struct ProbeMetrics {
  double delta_star = 0.0;
  double theta = 0.0;
  double e_l2 = 0.0;
  double e_cos = 0.0;
  double j = 0.0;
};

enum class PrimaryMetric { delta_star, theta };
enum class Direction { minimize, maximize };

/// Objective configuration: linear weights plus which column drives the
/// extremum search and in which direction.
struct MetricMode {
  double w_delta = 0.0;
  double w_theta = 0.0;
  double w_l2 = 0.0;
  double w_cos = 0.0;
  PrimaryMetric primary = PrimaryMetric::delta_star;
  Direction direction = Direction::minimize;

  static MetricMode delta_star_mode() {
    return MetricMode{1.0, 0.0, 0.0, 0.0, PrimaryMetric::delta_star,
                      Direction::minimize};
  }
  static MetricMode theta_mode() {
    return MetricMode{0.0, 1.0, 0.0, 0.0, PrimaryMetric::theta,
                      Direction::maximize};
  }
};

/// Probe sweep layout between the cylinders. Stations run from x_start to
/// spacing - x_end_offset in increments of step.
struct SweepSpec {
  double x_start = 0.5;
  double x_end_offset = 0.75;
  double step = 0.15;
  int ny_quadrature = 1024;

  int station_count(double spacing) const {
    const double x_end = spacing - x_end_offset;
    if (!(step > 0.0))
      throw std::invalid_argument("SweepSpec: step must be positive");
    if (x_end < x_start)
      throw std::invalid_argument("SweepSpec: empty sweep range for spacing " +
                                  std::to_string(spacing));
    return static_cast<int>(
               std::floor((x_end - x_start) / step + 1e-9)) + 1;
  }

  /// Stations as exact multiples of the step, no accumulation drift.
  std::vector<double> stations(double spacing) const {
    const int n = station_count(spacing);
    std::vector<double> xs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      xs[static_cast<std::size_t>(i)] = x_start + i * step;
    return xs;
  }
};

struct ProbeResult {
  double spacing = 0.0;
  double x_p = 0.0;
  ProbeMetrics metrics;
  GeometryEstimate geometry;
};

struct OptimumPoint {
  double spacing = 0.0;
  double x_star = 0.0;
  double value = 0.0;
};

namespace detail {

inline void check_profile(const Profile& p, const char* who) {
  if (p.y.size() != p.u.size())
    throw std::invalid_argument(std::string(who) + ": y/u size mismatch");
  if (p.y.size() < 2)
    throw std::invalid_argument(std::string(who) +
                                ": profile needs at least 2 samples");
  for (std::size_t i = 1; i < p.y.size(); ++i)
    if (!(p.y[i] > p.y[i - 1]))
      throw std::invalid_argument(std::string(who) +
                                  ": y must be strictly increasing");
}

template <class F>
double trapezoid(const Profile& p, F&& integrand) {
  double acc = 0.0;
  for (std::size_t i = 1; i < p.y.size(); ++i) {
    const double h = p.y[i] - p.y[i - 1];
    acc += 0.5 * h * (integrand(p.u[i]) + integrand(p.u[i - 1]));
  }
  return acc;
}

}  // namespace detail

/// Displacement thickness: integral of (1 - u/u_ref) over the profile extent.
inline double displacement_thickness(const Profile& profile, double u_ref) {
  detail::check_profile(profile, "displacement_thickness");
  if (!(u_ref > 0.0))
    throw std::invalid_argument(
        "displacement_thickness: u_ref must be positive");
  return detail::trapezoid(profile,
                           [u_ref](double u) { return 1.0 - u / u_ref; });
}

/// Momentum thickness: integral of (u/u_ref)(1 - u/u_ref).
inline double momentum_thickness(const Profile& profile, double u_ref) {
  detail::check_profile(profile, "momentum_thickness");
  if (!(u_ref > 0.0))
    throw std::invalid_argument("momentum_thickness: u_ref must be positive");
  return detail::trapezoid(profile, [u_ref](double u) {
    const double r = u / u_ref;
    return r * (1.0 - r);
  });
}

/// Relative L2 error and cosine distance of a profile against a reference.
/// A reference on a different y grid is resampled onto the profile's grid by
/// linear interpolation (clamped at the ends).
inline std::pair<double, double> profile_errors(const Profile& profile,
                                                const Profile& reference) {
  detail::check_profile(profile, "profile_errors");
  detail::check_profile(reference, "profile_errors(reference)");

  bool same_grid = profile.y.size() == reference.y.size();
  if (same_grid)
    for (std::size_t i = 0; i < profile.y.size(); ++i)
      if (std::abs(profile.y[i] - reference.y[i]) > 1e-12) {
        same_grid = false;
        break;
      }

  std::vector<double> ref(profile.y.size());
  if (same_grid) {
    ref = reference.u;
  } else {
    for (std::size_t i = 0; i < profile.y.size(); ++i) {
      const double yq = profile.y[i];
      if (yq <= reference.y.front()) {
        ref[i] = reference.u.front();
      } else if (yq >= reference.y.back()) {
        ref[i] = reference.u.back();
      } else {
        const auto it =
            std::upper_bound(reference.y.begin(), reference.y.end(), yq);
        const std::size_t hi =
            static_cast<std::size_t>(it - reference.y.begin());
        const std::size_t lo = hi - 1;
        const double w =
            (yq - reference.y[lo]) / (reference.y[hi] - reference.y[lo]);
        ref[i] = (1.0 - w) * reference.u[lo] + w * reference.u[hi];
      }
    }
  }

  double nn = 0.0, nr = 0.0, nd = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double u = profile.u[i];
    const double r = ref[i];
    nn += u * u;
    nr += r * r;
    nd += (u - r) * (u - r);
    dot += u * r;
  }
  if (!(nr > 0.0))
    throw std::domain_error("profile_errors: zero-norm reference");
  if (!(nn > 0.0))
    throw std::domain_error("profile_errors: zero-norm profile");
  const double e_l2 = std::sqrt(nd) / std::sqrt(nr);
  const double e_cos = 1.0 - dot / (std::sqrt(nn) * std::sqrt(nr));
  return {e_l2, e_cos};
}

/// Weighted sum of the four probe metrics.
inline double composite_objective(const ProbeMetrics& m,
                                  const MetricMode& mode) {
  const double vals[4] = {m.delta_star, m.theta, m.e_l2, m.e_cos};
  const double wts[4] = {mode.w_delta, mode.w_theta, mode.w_l2, mode.w_cos};
  double j = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (!std::isfinite(vals[i]) || !std::isfinite(wts[i]))
      throw std::invalid_argument("composite_objective: non-finite input");
    j += wts[i] * vals[i];
  }
  return j;
}

/// Profile provider for a sweep: returns the u(y) profile at a station.
using ProfileSource = std::function<Profile(double x_p)>;

/// Evaluates every station of the sweep. The first station doubles as the
/// upstream reference for the matching errors, so its own e_l2 and e_cos are
/// exactly zero. A per-spacing geometry estimate, when provided, is stamped
/// into every result row.
inline std::vector<ProbeResult> sweep_probes(
    const ProfileSource& source, double spacing, const SweepSpec& spec,
    const MetricMode& mode, const GeometryEstimate& geometry = {}) {
  if (!source) throw std::invalid_argument("sweep_probes: null source");
  const std::vector<double> xs = spec.stations(spacing);

  const Profile reference = source(xs.front());
  std::vector<ProbeResult> out;
  out.reserve(xs.size());
  for (const double x_p : xs) {
    const Profile prof = x_p == xs.front() ? reference : source(x_p);
    ProbeResult r;
    r.spacing = spacing;
    r.x_p = x_p;
    r.geometry = geometry;
    r.metrics.delta_star = displacement_thickness(prof, 1.0);
    r.metrics.theta = momentum_thickness(prof, 1.0);
    const auto [e_l2, e_cos] = profile_errors(prof, reference);
    r.metrics.e_l2 = e_l2;
    r.metrics.e_cos = e_cos;
    r.metrics.j = composite_objective(r.metrics, mode);
    out.push_back(r);
  }
  return out;
}

inline std::vector<ProbeResult> sweep_probes(
    const Frame& mean, double spacing, const SweepSpec& spec,
    const MetricMode& mode, const GeometryEstimate& geometry = {}) {
  return sweep_probes(
      [&mean](double x_p) { return extract_profile(mean, x_p); }, spacing,
      spec, mode, geometry);
}

/// Best station by the mode's primary metric. Results must share one
/// spacing; ties resolve to the smallest x_p.
inline OptimumPoint find_extremum(const std::vector<ProbeResult>& results,
                                  const MetricMode& mode) {
  if (results.empty())
    throw std::invalid_argument("find_extremum: empty result list");
  for (const ProbeResult& r : results)
    if (r.spacing != results.front().spacing)
      throw std::invalid_argument("find_extremum: mixed spacings");

  std::vector<std::size_t> order(results.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return results[a].x_p < results[b].x_p;
  });

  const auto value = [&](std::size_t i) {
    return mode.primary == PrimaryMetric::delta_star
               ? results[i].metrics.delta_star
               : results[i].metrics.theta;
  };

  std::size_t best = order.front();
  for (const std::size_t i : order) {
    const bool better = mode.direction == Direction::minimize
                            ? value(i) < value(best)
                            : value(i) > value(best);
    if (better) best = i;
  }
  return OptimumPoint{results.front().spacing, results[best].x_p, value(best)};
}

}  // namespace wake
