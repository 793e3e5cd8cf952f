#pragma once

#include "wake/analytic_model.hpp"
#include "wake/field.hpp"
#include "wake/remote_surrogate.hpp"
#include "wake/snapshot_io.hpp"

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace wake {

enum class SurrogateBackend { analytic, replay, remote };

/// Configuration of the flow generator behind the uniform generate() call.
struct SurrogateSpec {
  SurrogateBackend backend = SurrogateBackend::analytic;
  double spacing_min = 3.5;
  double spacing_max = 10.0;
  Grid grid = Grid::standard();
  int frames_per_period = 16;
  double fluctuation_eps = 0.05;
  AnalyticModelParams analytic;
  std::string replay_path;
  RemoteOptions remote;
};

/// Uniform front door for flow generation. The analytic backend synthesizes
/// frames from the closed-form model and additionally exposes the exact
/// per-station profiles; replay serves frames from an archive; remote
/// delegates to an HTTP service.
class Surrogate {
 public:
  explicit Surrogate(SurrogateSpec spec) : spec_(std::move(spec)) {
    if (spec_.frames_per_period < 2)
      throw std::invalid_argument("Surrogate: frames_per_period must be >= 2");
    if (!(spec_.spacing_min < spec_.spacing_max))
      throw std::invalid_argument("Surrogate: empty spacing range");
    switch (spec_.backend) {
      case SurrogateBackend::analytic:
        spec_.analytic.spacing_min = spec_.spacing_min;
        spec_.analytic.spacing_max = spec_.spacing_max;
        validate_analytic_params(spec_.analytic);
        break;
      case SurrogateBackend::replay:
        archive_ = load_replay(spec_.replay_path);
        break;
      case SurrogateBackend::remote:
        remote_.emplace(spec_.remote);
        break;
    }
  }

  const SurrogateSpec& spec() const { return spec_; }

  bool is_analytic() const {
    return spec_.backend == SurrogateBackend::analytic;
  }

  /// Snapshot sequence for one spacing. Deterministic for a fixed
  /// (spacing, n_frames, seed) triple on every backend.
  std::vector<Frame> generate(double spacing, int n_frames,
                              std::uint64_t seed) const {
    check_spacing(spacing);
    if (n_frames < 1)
      throw std::invalid_argument("Surrogate: n_frames must be >= 1");
    switch (spec_.backend) {
      case SurrogateBackend::analytic:
        return synthesize_frames(spacing, n_frames, spec_.grid,
                                 spec_.frames_per_period,
                                 spec_.fluctuation_eps, spec_.analytic);
      case SurrogateBackend::replay:
        return replay_frames(spacing, n_frames);
      case SurrogateBackend::remote:
        return remote_->generate(spacing, n_frames, seed);
    }
    throw std::logic_error("Surrogate: unreachable backend");
  }

  /// Closed-form station profile; analytic backend only.
  Profile profile(double spacing, double x_p, int y_samples) const {
    if (!is_analytic())
      throw std::logic_error(
          "Surrogate: exact profiles exist only on the analytic backend");
    check_spacing(spacing);
    return analytic_profile(spacing, x_p, y_samples, spec_.grid.y0,
                            spec_.grid.y_max(), spec_.analytic);
  }

  /// Snapshot cadence used when persisting generated frames.
  double dt() const { return 1.0 / spec_.frames_per_period; }

 private:
  void check_spacing(double spacing) const {
    if (spacing < spec_.spacing_min || spacing > spec_.spacing_max)
      throw std::domain_error("Surrogate: spacing " + std::to_string(spacing) +
                              " outside [" + std::to_string(spec_.spacing_min) +
                              ", " + std::to_string(spec_.spacing_max) + "]");
  }

  std::vector<Frame> replay_frames(double spacing, int n_frames) const {
    if (std::abs(archive_->spacing - spacing) > 1e-9)
      throw std::invalid_argument(
          "Surrogate: replay archive holds spacing " +
          std::to_string(archive_->spacing) + ", requested " +
          std::to_string(spacing));
    if (n_frames > static_cast<int>(archive_->snapshots.size()))
      throw std::invalid_argument(
          "Surrogate: replay archive holds " +
          std::to_string(archive_->snapshots.size()) + " frames, requested " +
          std::to_string(n_frames));
    return {archive_->snapshots.begin(),
            archive_->snapshots.begin() + n_frames};
  }

  SurrogateSpec spec_;
  std::optional<SnapshotArchive> archive_;
  std::optional<RemoteSurrogate> remote_;
};

}  // namespace wake
