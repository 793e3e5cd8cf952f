#pragma once

#include "wake/field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wake {

/// Constants of the closed-form tandem-wake landscape. The displacement
/// thickness target is a linear baseline minus a logistic-gated Gaussian dip
/// whose center tracks the spacing; the momentum thickness target combines a
/// traveling peak, a near-cylinder recirculation deficit, and a fixed bump.
struct AnalyticModelParams {
  double b0 = 0.40;
  double b1 = 0.08;
  double dip_depth = 0.5;
  double dip_center_slope = 0.71;
  double dip_center_intercept = -2.2;
  double dip_width = 0.8;
  double switch_center = 7.0;
  double switch_steepness = 4.0;
  double theta_peak = 0.35;
  double theta_width = 1.0;
  double theta_peak_offset = 1.2;
  double recirc_amplitude = 0.5;
  double recirc_decay = 0.35;
  double bump_amplitude = 0.08;
  double bump_center = 1.8;
  double bump_width = 0.4;

  double spacing_min = 3.5;
  double spacing_max = 10.0;
  double x_start = 0.5;
  double x_end_offset = 0.75;

  double dip_center(double spacing) const {
    return dip_center_slope * spacing + dip_center_intercept;
  }
  double dip_gate(double spacing) const {
    return dip_depth /
           (1.0 + std::exp(-switch_steepness * (spacing - switch_center)));
  }
};

namespace detail {

inline std::pair<double, double> analytic_targets_unchecked(
    double spacing, double x_p, const AnalyticModelParams& mp) {
  const double dm = x_p - mp.dip_center(spacing);
  const double delta_star =
      mp.b0 + mp.b1 * (x_p - mp.x_start) -
      mp.dip_gate(spacing) *
          std::exp(-dm * dm / (2.0 * mp.dip_width * mp.dip_width));

  const double pm = x_p - (spacing - mp.theta_peak_offset);
  const double bm = x_p - mp.bump_center;
  const double theta =
      mp.theta_peak *
          std::exp(-pm * pm / (2.0 * mp.theta_width * mp.theta_width)) -
      mp.recirc_amplitude * std::exp(-(x_p - mp.x_start) / mp.recirc_decay) +
      mp.bump_amplitude *
          std::exp(-bm * bm / (2.0 * mp.bump_width * mp.bump_width));
  return {delta_star, theta};
}

}  // namespace detail

/// Target (delta_star, theta) pair at a station. Arguments are range-checked
/// against the model's swept domain.
inline std::pair<double, double> analytic_targets(
    double spacing, double x_p, const AnalyticModelParams& mp = {}) {
  if (spacing < mp.spacing_min || spacing > mp.spacing_max)
    throw std::domain_error("analytic_targets: spacing " +
                            std::to_string(spacing) + " outside [" +
                            std::to_string(mp.spacing_min) + ", " +
                            std::to_string(mp.spacing_max) + "]");
  if (x_p < mp.x_start || x_p > spacing - mp.x_end_offset)
    throw std::domain_error("analytic_targets: station " +
                            std::to_string(x_p) + " outside sweep range");
  return detail::analytic_targets_unchecked(spacing, x_p, mp);
}

/// Checks the model's feasibility invariant (0.05 < delta_star and
/// theta < delta_star) on a 0.05-resolution grid of the swept domain.
inline void validate_analytic_params(const AnalyticModelParams& mp = {}) {
  for (double spacing = mp.spacing_min; spacing <= mp.spacing_max + 1e-12;
       spacing += 0.05) {
    const double s = std::min(spacing, mp.spacing_max);
    for (double x = mp.x_start; x <= s - mp.x_end_offset + 1e-12; x += 0.05) {
      const auto [ds, th] = detail::analytic_targets_unchecked(s, x, mp);
      if (!(ds > 0.05))
        throw std::domain_error(
            "analytic model infeasible: delta_star <= 0.05 at S=" +
            std::to_string(s) + ", x=" + std::to_string(x));
      if (!(th < ds))
        throw std::domain_error(
            "analytic model infeasible: theta >= delta_star at S=" +
            std::to_string(s) + ", x=" + std::to_string(x));
    }
  }
}

/// Gaussian-deficit amplitude and width realizing the given thickness pair:
/// A = sqrt(2)*(1 - theta/delta_star), s = delta_star/(A*sqrt(2*pi)).
inline std::pair<double, double> invert_deficit(double delta_star,
                                                double theta) {
  if (!(delta_star > 0.0))
    throw std::domain_error("invert_deficit: delta_star must be positive");
  if (!(theta < delta_star))
    throw std::domain_error(
        "invert_deficit: infeasible targets (theta >= delta_star)");
  const double amplitude = std::numbers::sqrt2 * (1.0 - theta / delta_star);
  const double width =
      delta_star / (amplitude * std::sqrt(2.0 * std::numbers::pi));
  return {amplitude, width};
}

/// Closed-form wake profile at a station: u(y) = 1 - A*exp(-y^2/(2 s^2))
/// with (A, s) chosen so the trapezoid integrals reproduce the targets.
inline Profile analytic_profile(double spacing, double x_p, int y_samples,
                                double y_lo = -4.0, double y_hi = 4.0,
                                const AnalyticModelParams& mp = {}) {
  if (y_samples < 2)
    throw std::invalid_argument("analytic_profile: y_samples must be >= 2");
  if (!(y_hi > y_lo))
    throw std::invalid_argument("analytic_profile: empty y interval");
  const auto [ds, th] = analytic_targets(spacing, x_p, mp);
  const auto [amplitude, width] = invert_deficit(ds, th);

  Profile prof;
  prof.x_p = x_p;
  prof.y.resize(static_cast<std::size_t>(y_samples));
  prof.u.resize(static_cast<std::size_t>(y_samples));
  for (int i = 0; i < y_samples; ++i) {
    const double y = y_lo + (y_hi - y_lo) * i / (y_samples - 1);
    prof.y[static_cast<std::size_t>(i)] = y;
    prof.u[static_cast<std::size_t>(i)] =
        1.0 - amplitude * std::exp(-y * y / (2.0 * width * width));
  }
  return prof;
}

/// Fine-grid argmin of the delta_star target over the sweep interval.
inline double analytic_delta_star_minimizer(double spacing,
                                            double resolution = 0.001,
                                            const AnalyticModelParams& mp =
                                                {}) {
  if (!(resolution > 0.0))
    throw std::invalid_argument("resolution must be positive");
  double best_x = mp.x_start;
  double best_v = std::numeric_limits<double>::infinity();
  const double x_end = spacing - mp.x_end_offset;
  for (double x = mp.x_start; x <= x_end + 1e-12; x += resolution) {
    const double xc = std::min(x, x_end);
    const auto [ds, th] = analytic_targets(spacing, xc, mp);
    (void)th;
    if (ds < best_v) {
      best_v = ds;
      best_x = xc;
    }
  }
  return best_x;
}

/// Fine-grid argmax of the theta target over the sweep interval.
inline double analytic_theta_maximizer(double spacing,
                                       double resolution = 0.001,
                                       const AnalyticModelParams& mp = {}) {
  if (!(resolution > 0.0))
    throw std::invalid_argument("resolution must be positive");
  double best_x = mp.x_start;
  double best_v = -std::numeric_limits<double>::infinity();
  const double x_end = spacing - mp.x_end_offset;
  for (double x = mp.x_start; x <= x_end + 1e-12; x += resolution) {
    const double xc = std::min(x, x_end);
    const auto [ds, th] = analytic_targets(spacing, xc, mp);
    (void)ds;
    if (th > best_v) {
      best_v = th;
      best_x = xc;
    }
  }
  return best_x;
}

namespace detail {

inline bool in_disk(double x, double y, double cx) {
  return (x - cx) * (x - cx) + y * y <= 0.25;
}

}  // namespace detail

/// Mean streamwise field on a raster: each column carries the closed-form
/// profile of its station (clamped to the sweep interval), with zero-velocity
/// disks of diameter 1 imprinted at (0,0) and (spacing,0). v and p are zero
/// everywhere; pressure is carried for format fidelity only.
inline Frame rasterize_mean(double spacing, const Grid& grid,
                            const AnalyticModelParams& mp = {}) {
  if (spacing < mp.spacing_min || spacing > mp.spacing_max)
    throw std::domain_error("rasterize_mean: spacing out of range");
  Frame f = Frame::zeros(grid);
  const double x_end = spacing - mp.x_end_offset;
  for (int ix = 0; ix < grid.nx; ++ix) {
    const double x = grid.x(ix);
    const double xc = std::clamp(x, mp.x_start, x_end);
    const auto [ds, th] = detail::analytic_targets_unchecked(spacing, xc, mp);
    const auto [amplitude, width] = invert_deficit(ds, th);
    for (int iy = 0; iy < grid.ny; ++iy) {
      const double y = grid.y(iy);
      const auto k = static_cast<std::size_t>(grid.idx(ix, iy));
      if (detail::in_disk(x, y, 0.0) || detail::in_disk(x, y, spacing)) {
        f.u[k] = 0.0;
      } else {
        f.u[k] = 1.0 - amplitude * std::exp(-y * y / (2.0 * width * width));
      }
    }
  }
  return f;
}

/// Frame sequence with a multiplicative traveling-wave fluctuation:
/// u_j = u_mean * (1 + eps*sin(2*pi*j/period + 2*pi*x/8)). Sampling whole
/// periods makes the time average recover u_mean to roundoff.
inline std::vector<Frame> synthesize_frames(double spacing, int n_frames,
                                            const Grid& grid,
                                            int frames_per_period = 16,
                                            double fluctuation_eps = 0.05,
                                            const AnalyticModelParams& mp =
                                                {}) {
  if (n_frames < 1)
    throw std::invalid_argument("synthesize_frames: n_frames must be >= 1");
  if (frames_per_period < 2)
    throw std::invalid_argument(
        "synthesize_frames: frames_per_period must be >= 2");
  const Frame mean = rasterize_mean(spacing, grid, mp);
  std::vector<Frame> out;
  out.reserve(static_cast<std::size_t>(n_frames));
  for (int j = 0; j < n_frames; ++j) {
    Frame f = Frame::zeros(grid);
    const double phase =
        2.0 * std::numbers::pi * j / frames_per_period;
    for (int iy = 0; iy < grid.ny; ++iy)
      for (int ix = 0; ix < grid.nx; ++ix) {
        const auto k = static_cast<std::size_t>(grid.idx(ix, iy));
        const double wave =
            std::sin(phase + 2.0 * std::numbers::pi * grid.x(ix) / 8.0);
        f.u[k] = mean.u[k] * (1.0 + fluctuation_eps * wave);
      }
    out.push_back(std::move(f));
  }
  return out;
}

/// Translates the downstream disk by dx_shift, leaving every other cell
/// untouched. Vacated cells revert to free stream. Fault-injection fixture
/// for geometry validation paths.
inline Frame corrupt_geometry(const Frame& frame, double spacing,
                              double dx_shift) {
  frame.validate();
  const Grid& g = frame.grid;
  const double new_center = spacing + dx_shift;
  if (new_center - 0.5 < g.x0 || new_center + 0.5 > g.x_max())
    throw std::domain_error(
        "corrupt_geometry: shifted disk leaves the grid (center " +
        std::to_string(new_center) + ")");
  Frame out = frame;
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      const double x = g.x(ix);
      const double y = g.y(iy);
      const bool was = detail::in_disk(x, y, spacing);
      const bool now = detail::in_disk(x, y, new_center);
      if (was == now) continue;
      const auto k = static_cast<std::size_t>(g.idx(ix, iy));
      if (now) {
        out.u[k] = 0.0;
        out.v[k] = 0.0;
        out.p[k] = 0.0;
      } else {
        out.u[k] = 1.0;
        out.v[k] = 0.0;
        out.p[k] = 0.0;
      }
    }
  return out;
}

}  // namespace wake
