#pragma once

// Coordinate conventions shared by the whole pipeline.
//
// World frame: right-handed, x/y span the horizontal plane, z points up. All
// map reasoning is planar; the vertical component of a pose is carried but
// ignored in distances.
//
// Angles are degrees. Egocentric azimuth theta: 0 = camera forward, negative
// = left, positive = right, normalized into [-180, 180). Headings use the same
// convention in the world plane: 0 = +y, +90 = +x.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace savvy::geometry {

inline constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps any finite angle into [-180, 180).
double normalize_deg(double deg);

/// Absolute circular difference in [0, 180].
double angular_distance(double a_deg, double b_deg);

/// One egocentric sample (t, theta, r).
struct EgoObservation {
  double t = 0.0;
  double theta = 0.0;
  double r = 1.0;

  /// Normalizes theta and rejects non-positive or non-finite ranges.
  static EgoObservation make(double t, double theta, double r);

  friend bool operator==(const EgoObservation&, const EgoObservation&) = default;
};

struct GlobalPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const GlobalPoint&, const GlobalPoint&) = default;
};

/// Which device axis is "forward" and which is "right". Defaults follow the
/// seven-mic glasses frame: +z points away from the rear temple mics, +x is
/// the wearer's right.
struct FrameConfig {
  Eigen::Vector3d forward{0.0, 0.0, 1.0};
  Eigen::Vector3d right{1.0, 0.0, 0.0};
};

struct CameraPose {
  double t = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  /// Device-to-world rotation.
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

/// Horizontal projection of a pose: where the camera stands and where it looks.
struct PlanarPose {
  GlobalPoint position;
  double heading = 0.0;
};

class CameraTrajectory {
 public:
  CameraTrajectory() = default;
  /// Throws GeometryError unless timestamps strictly increase and every
  /// quaternion is unit within 1e-6.
  explicit CameraTrajectory(std::vector<CameraPose> poses, FrameConfig frame = {});

  const std::vector<CameraPose>& poses() const noexcept { return poses_; }
  const FrameConfig& frame() const noexcept { return frame_; }
  bool empty() const noexcept { return poses_.empty(); }

 private:
  std::vector<CameraPose> poses_;
  FrameConfig frame_;
};

/// Reference object at the origin, +y toward the facing object.
struct AlloFrame {
  GlobalPoint reference;
  GlobalPoint facing;
};

struct AlloObservation {
  double theta = 0.0;
  double r = 0.0;
};

enum class SimpleDirection { kLeft, kRight, kBack };
enum class Quadrant { kFrontLeft, kFrontRight, kBackLeft, kBackRight };

std::string_view to_string(SimpleDirection d);
std::string_view to_string(Quadrant q);

/// World heading of the device forward axis projected onto the horizontal
/// plane. Throws GeometryError when that axis is within 1 degree of vertical.
double yaw_of(const CameraPose& pose, const FrameConfig& frame);

PlanarPose planar(const CameraPose& pose, const FrameConfig& frame);

GlobalPoint ego_to_global(const EgoObservation& obs, const PlanarPose& pose);
GlobalPoint ego_to_global(const EgoObservation& obs, const CameraPose& pose,
                          const FrameConfig& frame);

/// Inverse of ego_to_global at the same pose; the returned t is the pose time.
/// Throws GeometryError when the point coincides with the camera.
EgoObservation global_to_ego(GlobalPoint point, const PlanarPose& pose, double t);
EgoObservation global_to_ego(GlobalPoint point, const CameraPose& pose,
                             const FrameConfig& frame);

AlloObservation allocentric_observation(GlobalPoint target, const AlloFrame& frame);

SimpleDirection quantize_simple(double theta);
Quadrant quantize_quadrant(double theta);

double horizontal_distance(GlobalPoint a, GlobalPoint b);

/// Linear position / shortest-arc slerp orientation; clamps outside the range.
CameraPose interpolate_pose(const CameraTrajectory& traj, double t);

/// Trajectory text format: one `t, x, y, z, qw, qx, qy, qz` record per line;
/// blank lines and lines starting with '#' are skipped.
CameraTrajectory read_trajectory(std::istream& in, FrameConfig frame = {});
CameraTrajectory read_trajectory_file(const std::string& path, FrameConfig frame = {});
void write_trajectory(std::ostream& out, const CameraTrajectory& traj);

/// Device-to-world rotation for a level device looking along `heading`,
/// honoring `frame`'s forward/right axes. Used by the simulator and tests.
Eigen::Quaterniond level_orientation(double heading, const FrameConfig& frame = {});

}  // namespace savvy::geometry
