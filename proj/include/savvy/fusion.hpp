#pragma once

// Stage 2: egocentric tracks -> world-frame global map. Static objects become
// DBSCAN anchors; the sounding object's trajectory is fused with Seg > SD >
// Audio priority, refined by audio in a frustum around the current estimate,
// and Kalman-smoothed over the query span.

#include "savvy/geometry.hpp"
#include "savvy/tracks.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace savvy::fusion {

enum class Source { kSeg, kSd, kAudio, kSmoothed };

std::string_view to_string(Source s);
Source source_from_string(std::string_view s);

struct TrackPoint {
  double t = 0.0;
  geometry::GlobalPoint position;
  Source source = Source::kSeg;
  std::optional<double> confidence;
  /// The egocentric observation this point came from and the camera pose it
  /// was projected with.
  geometry::EgoObservation ego;
  geometry::PlanarPose pose;
  /// False for audio entries without a range estimate; `ego.r` is then a
  /// placeholder.
  bool has_range = true;
};

using GlobalTrack = std::vector<TrackPoint>;

struct Span {
  double start = 0.0;
  double end = 0.0;

  bool contains(double t) const noexcept { return t >= start && t <= end; }
  double midpoint() const noexcept { return 0.5 * (start + end); }
};

struct StaticAnchor {
  geometry::GlobalPoint position;
  std::size_t support = 0;
  Source source = Source::kSd;
};

struct FrustumConfig {
  double range_margin = 1.0;
  double angular_span = 45.0;
  int angular_bins = 10;
  int range_bins = 5;
  double behind_threshold = 90.0;

  void validate() const;
};

struct KalmanConfig {
  /// Continuous white-acceleration spectral density, m^2/s^3.
  double process_noise = 1.0;
  /// Per-axis position measurement variance, m^2.
  double measurement_noise = 0.25;
  double output_period = 0.1;
  /// Prior variance of the initial velocity, (m/s)^2.
  double initial_velocity_variance = 4.0;

  void validate() const;
};

struct FusionConfig {
  FrustumConfig frustum;
  KalmanConfig kalman;
  /// SD points farther than this from the most recent accepted point within
  /// `sd_gate_window` seconds are rejected.
  double sd_gate_radius = 1.5;
  double sd_gate_window = 2.0;
  /// An audio timestamp within this many seconds of a Seg or SD sample counts
  /// as covered.
  double coverage_tolerance = 0.5;
  /// Range used for direction-only audio when no estimate exists yet.
  double default_audio_range = 2.0;
  double static_eps = 1.0;
  std::size_t static_min_pts = 2;
  tracks::SegThresholds seg_thresholds;
};

/// Projects observations through the interpolated camera pose.
GlobalTrack globalize(const std::vector<geometry::EgoObservation>& ego, const geometry::CameraTrajectory& traj,
                      Source source, const std::vector<double>& confidences = {});
GlobalTrack globalize(const std::vector<tracks::SegObservation>& seg, const geometry::CameraTrajectory& traj);
/// Direction-only entries are projected at `default_range` and flagged.
GlobalTrack globalize(const std::vector<tracks::AudioObservation>& audio, const geometry::CameraTrajectory& traj,
                      double default_range);

/// Dominant DBSCAN cluster centroid (ties: earliest first member). When every
/// point is noise, falls back to the highest-confidence point; throws
/// ClusterError when none carries a confidence or the input is empty.
StaticAnchor cluster_static(const GlobalTrack& points, double eps = 1.0, std::size_t min_pts = 2);

/// Candidate (theta, r) bin centers of the frustum around (theta_c, r_c),
/// angular-major. Candidates with r <= 0 are dropped.
std::vector<geometry::EgoObservation> frustum_candidates(double theta_c, double r_c, double t,
                                                         const FrustumConfig& config);

/// Time-major priority fusion restricted to `span`. Output is strictly
/// time-sorted. Throws EmptyTrackError when no source has a point in the span.
GlobalTrack fuse_dynamic(const GlobalTrack& seg, const GlobalTrack& sd, const GlobalTrack& audio, Span span,
                         const FusionConfig& config = {});

/// Constant-velocity Kalman filter plus RTS smoother, evaluated at `times`.
GlobalTrack smooth_at(const GlobalTrack& track, const KalmanConfig& config, const std::vector<double>& times);

/// smooth_at over span.start, span.start + period, ..., span.end.
GlobalTrack kalman_smooth(const GlobalTrack& track, const KalmanConfig& config, Span span);

struct GlobalMap {
  tracks::Mode mode = tracks::Mode::kEgocentric;
  Span span;
  /// Smoothed target trajectory over the span.
  GlobalTrack target;
  /// Fused points before smoothing.
  GlobalTrack fused;
  std::optional<StaticAnchor> reference;
  std::optional<StaticAnchor> facing;

  /// Linear interpolation of the smoothed track, clamped at its ends.
  geometry::GlobalPoint target_at(double t) const;
};

GlobalMap build_global_map(const tracks::TrackBundle& bundle, const geometry::CameraTrajectory& traj,
                           const FusionConfig& config = {});

inline constexpr int kGlobalMapVersion = 1;

nlohmann::json to_json(const GlobalMap& map);
GlobalMap global_map_from_json(const nlohmann::json& j);

/// Top-down PNG of the map; `traj` adds the camera path when non-empty.
void plot_global_map(const GlobalMap& map, const geometry::CameraTrajectory& traj, const std::string& path,
                     int size = 640);

}  // namespace savvy::fusion
