#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace wake {

/// Uniform node-based grid. Node (ix, iy) sits at (x0 + ix*dx, y0 + iy*dy);
/// storage is row-major in y, i.e. index = iy*nx + ix.
struct Grid {
  int nx = 0;
  int ny = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double dx = 0.0;
  double dy = 0.0;

  int size() const { return nx * ny; }
  int idx(int ix, int iy) const { return iy * nx + ix; }
  double x(int ix) const { return x0 + ix * dx; }
  double y(int iy) const { return y0 + iy * dy; }
  double x_max() const { return x(nx - 1); }
  double y_max() const { return y(ny - 1); }

  bool same_layout(const Grid& o) const {
    return nx == o.nx && ny == o.ny && x0 == o.x0 && y0 == o.y0 &&
           dx == o.dx && dy == o.dy;
  }

  void validate() const {
    if (nx < 2 || ny < 2)
      throw std::invalid_argument("Grid: nx and ny must be >= 2");
    if (!(dx > 0.0) || !(dy > 0.0))
      throw std::invalid_argument("Grid: dx and dy must be positive");
  }

  /// Default raster covering x in [-2, 14], y in [-4, 4] at 256x128 nodes.
  static Grid standard() {
    return Grid{256, 128, -2.0, -4.0, 16.0 / 255.0, 8.0 / 127.0};
  }
};

/// One snapshot: velocity components and pressure on a shared grid.
/// Solid cells are stored as exact zeros in both velocity components.
struct Frame {
  Grid grid;
  std::vector<double> u;
  std::vector<double> v;
  std::vector<double> p;

  static Frame zeros(const Grid& g) {
    g.validate();
    Frame f;
    f.grid = g;
    f.u.assign(static_cast<std::size_t>(g.size()), 0.0);
    f.v.assign(static_cast<std::size_t>(g.size()), 0.0);
    f.p.assign(static_cast<std::size_t>(g.size()), 0.0);
    return f;
  }

  void validate() const {
    grid.validate();
    const auto n = static_cast<std::size_t>(grid.size());
    if (u.size() != n || v.size() != n || p.size() != n)
      throw std::invalid_argument(
          "Frame: component size does not match grid (" +
          std::to_string(n) + " expected)");
  }
};

/// Time statistics of a snapshot sequence at one spacing.
struct MeanField {
  Grid grid;
  std::vector<double> u_mean;
  std::vector<double> v_mean;
  std::vector<double> r_uu;  // empty unless requested
  int n_samples = 0;
  double spacing = 0.0;
};

namespace detail {

inline void check_sequence(const std::vector<Frame>& frames,
                           const char* who) {
  if (frames.empty())
    throw std::invalid_argument(std::string(who) + ": empty frame sequence");
  frames.front().validate();
  for (const Frame& f : frames) {
    f.validate();
    if (!f.grid.same_layout(frames.front().grid))
      throw std::invalid_argument(std::string(who) +
                                  ": mismatched grids in sequence");
  }
}

}  // namespace detail

/// Pointwise arithmetic mean of u and v over the sequence. Set with_r_uu to
/// also fill the streamwise fluctuation second moment.
inline MeanField time_average(const std::vector<Frame>& frames,
                              double spacing, bool with_r_uu = false) {
  detail::check_sequence(frames, "time_average");
  MeanField m;
  m.grid = frames.front().grid;
  m.spacing = spacing;
  m.n_samples = static_cast<int>(frames.size());
  const auto n = static_cast<std::size_t>(m.grid.size());
  m.u_mean.assign(n, 0.0);
  m.v_mean.assign(n, 0.0);
  for (const Frame& f : frames)
    for (std::size_t i = 0; i < n; ++i) {
      m.u_mean[i] += f.u[i];
      m.v_mean[i] += f.v[i];
    }
  const double inv = 1.0 / m.n_samples;
  for (std::size_t i = 0; i < n; ++i) {
    m.u_mean[i] *= inv;
    m.v_mean[i] *= inv;
  }
  if (with_r_uu) {
    m.r_uu.assign(n, 0.0);
    for (const Frame& f : frames)
      for (std::size_t i = 0; i < n; ++i) {
        const double du = f.u[i] - m.u_mean[i];
        m.r_uu[i] += du * du;
      }
    for (std::size_t i = 0; i < n; ++i) m.r_uu[i] *= inv;
  }
  return m;
}

/// Per-cell mean of (u - u_mean)^2 against a precomputed mean.
inline std::vector<double> reynolds_stress_uu(const std::vector<Frame>& frames,
                                              const MeanField& mean) {
  detail::check_sequence(frames, "reynolds_stress_uu");
  if (!frames.front().grid.same_layout(mean.grid))
    throw std::invalid_argument("reynolds_stress_uu: mean grid mismatch");
  const auto n = static_cast<std::size_t>(mean.grid.size());
  std::vector<double> out(n, 0.0);
  for (const Frame& f : frames)
    for (std::size_t i = 0; i < n; ++i) {
      const double du = f.u[i] - mean.u_mean[i];
      out[i] += du * du;
    }
  const double inv = 1.0 / static_cast<double>(frames.size());
  for (std::size_t i = 0; i < n; ++i) out[i] *= inv;
  return out;
}

/// Streamwise-velocity profile along y at a fixed station x_p.
struct Profile {
  double x_p = 0.0;
  std::vector<double> y;
  std::vector<double> u;
};

namespace detail {

inline Profile extract_profile_impl(const Grid& g,
                                    const std::vector<double>& u, double x_p,
                                    int ny_override) {
  if (x_p < g.x0 || x_p > g.x_max())
    throw std::domain_error("extract_profile: station x=" +
                            std::to_string(x_p) + " outside grid extent");
  const double t = (x_p - g.x0) / g.dx;
  int ix = static_cast<int>(std::floor(t));
  ix = std::clamp(ix, 0, g.nx - 2);
  const double w = t - ix;

  Profile prof;
  prof.x_p = x_p;
  if (ny_override <= 0) {
    prof.y.resize(static_cast<std::size_t>(g.ny));
    prof.u.resize(static_cast<std::size_t>(g.ny));
    for (int iy = 0; iy < g.ny; ++iy) {
      const double ul = u[static_cast<std::size_t>(g.idx(ix, iy))];
      const double ur = u[static_cast<std::size_t>(g.idx(ix + 1, iy))];
      prof.y[static_cast<std::size_t>(iy)] = g.y(iy);
      prof.u[static_cast<std::size_t>(iy)] = (1.0 - w) * ul + w * ur;
    }
    return prof;
  }

  if (ny_override < 2)
    throw std::invalid_argument("extract_profile: ny_override must be >= 2");
  prof.y.resize(static_cast<std::size_t>(ny_override));
  prof.u.resize(static_cast<std::size_t>(ny_override));
  const double span = g.y_max() - g.y0;
  for (int k = 0; k < ny_override; ++k) {
    const double yq = g.y0 + span * k / (ny_override - 1);
    double s = (yq - g.y0) / g.dy;
    int iy = static_cast<int>(std::floor(s));
    iy = std::clamp(iy, 0, g.ny - 2);
    const double wy = s - iy;
    const double lo = (1.0 - w) * u[static_cast<std::size_t>(g.idx(ix, iy))] +
                      w * u[static_cast<std::size_t>(g.idx(ix + 1, iy))];
    const double hi =
        (1.0 - w) * u[static_cast<std::size_t>(g.idx(ix, iy + 1))] +
        w * u[static_cast<std::size_t>(g.idx(ix + 1, iy + 1))];
    prof.y[static_cast<std::size_t>(k)] = yq;
    prof.u[static_cast<std::size_t>(k)] = (1.0 - wy) * lo + wy * hi;
  }
  return prof;
}

}  // namespace detail

/// Samples u(x_p, y), linearly interpolated between the two bracketing
/// columns. By default y samples are the grid rows; a positive ny_override
/// resamples uniformly over the y extent instead.
inline Profile extract_profile(const Frame& frame, double x_p,
                               int ny_override = 0) {
  frame.validate();
  return detail::extract_profile_impl(frame.grid, frame.u, x_p, ny_override);
}

inline Profile extract_profile(const MeanField& mean, double x_p,
                               int ny_override = 0) {
  mean.grid.validate();
  if (mean.u_mean.size() != static_cast<std::size_t>(mean.grid.size()))
    throw std::invalid_argument("extract_profile: mean field size mismatch");
  return detail::extract_profile_impl(mean.grid, mean.u_mean, x_p,
                                      ny_override);
}

/// Connected patch of solid cells, reported as an equivalent circle.
struct CylinderBlob {
  double cx = 0.0;
  double cy = 0.0;
  double diameter = 0.0;
  int cells = 0;
};

namespace detail {

inline std::vector<CylinderBlob> find_blobs(const Grid& g,
                                            const std::vector<double>& u,
                                            const std::vector<double>& v,
                                            double eps_solid) {
  const int n = g.size();
  std::vector<char> solid(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    solid[k] =
        (std::abs(u[k]) <= eps_solid && std::abs(v[k]) <= eps_solid) ? 1 : 0;
  }

  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> stack;
  std::vector<CylinderBlob> blobs;
  for (int start = 0; start < n; ++start) {
    if (!solid[static_cast<std::size_t>(start)] ||
        seen[static_cast<std::size_t>(start)])
      continue;
    stack.clear();
    stack.push_back(start);
    seen[static_cast<std::size_t>(start)] = 1;
    double sx = 0.0, sy = 0.0;
    int cells = 0;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      const int ix = cur % g.nx;
      const int iy = cur / g.nx;
      sx += g.x(ix);
      sy += g.y(iy);
      ++cells;
      const int nbr[4][2] = {{ix - 1, iy}, {ix + 1, iy}, {ix, iy - 1},
                             {ix, iy + 1}};
      for (const auto& nb : nbr) {
        if (nb[0] < 0 || nb[0] >= g.nx || nb[1] < 0 || nb[1] >= g.ny) continue;
        const int j = g.idx(nb[0], nb[1]);
        const auto ju = static_cast<std::size_t>(j);
        if (solid[ju] && !seen[ju]) {
          seen[ju] = 1;
          stack.push_back(j);
        }
      }
    }
    CylinderBlob b;
    b.cx = sx / cells;
    b.cy = sy / cells;
    b.cells = cells;
    b.diameter = 2.0 * std::sqrt(cells * g.dx * g.dy / std::numbers::pi);
    blobs.push_back(b);
  }
  std::sort(blobs.begin(), blobs.end(),
            [](const CylinderBlob& a, const CylinderBlob& b) {
              return a.cx < b.cx;
            });
  return blobs;
}

}  // namespace detail

/// Solid regions (both velocity components below eps_solid in magnitude) by
/// 4-connected flood fill, sorted by centroid x.
inline std::vector<CylinderBlob> detect_cylinders(const Frame& frame,
                                                  double eps_solid = 1e-6) {
  frame.validate();
  return detail::find_blobs(frame.grid, frame.u, frame.v, eps_solid);
}

inline std::vector<CylinderBlob> detect_cylinders(const MeanField& mean,
                                                  double eps_solid = 1e-6) {
  mean.grid.validate();
  return detail::find_blobs(mean.grid, mean.u_mean, mean.v_mean, eps_solid);
}

/// Detected cylinder centers and their offsets from the expected positions,
/// in cylinder diameters. Missing detections report +inf offsets and NaN
/// centers rather than throwing.
struct GeometryEstimate {
  std::array<double, 2> cyl1_center{std::nan(""), std::nan("")};
  std::array<double, 2> cyl2_center{std::nan(""), std::nan("")};
  double cyl1_error_D = std::numeric_limits<double>::infinity();
  double cyl2_error_D = std::numeric_limits<double>::infinity();
  int n_blobs = 0;
  bool valid = false;
};

namespace detail {

inline GeometryEstimate match_centers(std::vector<CylinderBlob> blobs,
                                      const std::array<double, 2>& c1,
                                      const std::array<double, 2>& c2,
                                      double tolerance) {
  GeometryEstimate est;
  est.n_blobs = static_cast<int>(blobs.size());
  if (blobs.size() < 2) return est;

  if (blobs.size() > 2) {
    // Keep the two largest patches; tiny spurious patches lose out.
    std::stable_sort(blobs.begin(), blobs.end(),
                     [](const CylinderBlob& a, const CylinderBlob& b) {
                       return a.cells > b.cells;
                     });
    blobs.resize(2);
    std::sort(blobs.begin(), blobs.end(),
              [](const CylinderBlob& a, const CylinderBlob& b) {
                return a.cx < b.cx;
              });
  }

  const auto dist = [](const CylinderBlob& b, const std::array<double, 2>& c) {
    return std::hypot(b.cx - c[0], b.cy - c[1]);
  };
  const double straight = dist(blobs[0], c1) + dist(blobs[1], c2);
  const double crossed = dist(blobs[1], c1) + dist(blobs[0], c2);
  const CylinderBlob& b1 = straight <= crossed ? blobs[0] : blobs[1];
  const CylinderBlob& b2 = straight <= crossed ? blobs[1] : blobs[0];
  est.cyl1_center = {b1.cx, b1.cy};
  est.cyl2_center = {b2.cx, b2.cy};
  est.cyl1_error_D = dist(b1, c1);
  est.cyl2_error_D = dist(b2, c2);
  est.valid = est.cyl1_error_D <= tolerance && est.cyl2_error_D <= tolerance;
  return est;
}

}  // namespace detail

/// Matches the two largest solid patches against the expected center pair.
/// Fewer than two patches is a detection failure: valid = false with +inf
/// sentinels, not an exception.
inline GeometryEstimate detect_cylinder_centers(
    const Frame& frame, const std::array<double, 2>& expected1,
    const std::array<double, 2>& expected2, double tolerance = 0.25,
    double eps_solid = 1e-6) {
  if (!(tolerance > 0.0))
    throw std::invalid_argument(
        "detect_cylinder_centers: tolerance must be positive");
  return detail::match_centers(detect_cylinders(frame, eps_solid), expected1,
                               expected2, tolerance);
}

inline GeometryEstimate detect_cylinder_centers(
    const MeanField& mean, const std::array<double, 2>& expected1,
    const std::array<double, 2>& expected2, double tolerance = 0.25,
    double eps_solid = 1e-6) {
  if (!(tolerance > 0.0))
    throw std::invalid_argument(
        "detect_cylinder_centers: tolerance must be positive");
  return detail::match_centers(detect_cylinders(mean, eps_solid), expected1,
                               expected2, tolerance);
}

/// Tandem-pair convenience: cylinder 1 at the origin, cylinder 2 at
/// (spacing, 0).
template <class FieldLike>
GeometryEstimate estimate_geometry(const FieldLike& field, double spacing,
                                   double tolerance = 0.25,
                                   double eps_solid = 1e-6) {
  if (!(spacing > 0.0))
    throw std::invalid_argument("estimate_geometry: spacing must be positive");
  return detect_cylinder_centers(field, {0.0, 0.0}, {spacing, 0.0}, tolerance,
                                 eps_solid);
}

}  // namespace wake
