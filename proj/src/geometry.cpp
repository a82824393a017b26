#include "savvy/geometry.hpp"

#include "savvy/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace savvy::geometry {

double normalize_deg(double deg) {
  if (!std::isfinite(deg)) throw GeometryError("non-finite angle");
  double wrapped = std::fmod(deg + 180.0, 360.0);
  if (wrapped < 0.0) wrapped += 360.0;
  wrapped -= 180.0;
  // fmod rounding can land exactly on the open end.
  if (wrapped >= 180.0) wrapped -= 360.0;
  return wrapped;
}

double angular_distance(double a_deg, double b_deg) {
  double d = std::fmod(std::abs(a_deg - b_deg), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

EgoObservation EgoObservation::make(double t, double theta, double r) {
  if (!std::isfinite(t)) throw GeometryError("non-finite observation time");
  if (!(r > 0.0) || !std::isfinite(r)) throw GeometryError("observation range must be positive");
  return EgoObservation{t, normalize_deg(theta), r};
}

std::string_view to_string(SimpleDirection d) {
  switch (d) {
    case SimpleDirection::kLeft: return "left";
    case SimpleDirection::kRight: return "right";
    case SimpleDirection::kBack: return "back";
  }
  return "?";
}

std::string_view to_string(Quadrant q) {
  switch (q) {
    case Quadrant::kFrontLeft: return "front-left";
    case Quadrant::kFrontRight: return "front-right";
    case Quadrant::kBackLeft: return "back-left";
    case Quadrant::kBackRight: return "back-right";
  }
  return "?";
}

CameraTrajectory::CameraTrajectory(std::vector<CameraPose> poses, FrameConfig frame)
    : poses_(std::move(poses)), frame_(std::move(frame)) {
  for (std::size_t i = 0; i < poses_.size(); ++i) {
    if (std::abs(poses_[i].orientation.norm() - 1.0) > 1e-6) {
      throw GeometryError("pose " + std::to_string(i) + ": quaternion is not unit");
    }
    if (i > 0 && !(poses_[i].t > poses_[i - 1].t)) {
      throw GeometryError("pose " + std::to_string(i) + ": timestamps must strictly increase");
    }
  }
}

double yaw_of(const CameraPose& pose, const FrameConfig& frame) {
  const Eigen::Vector3d fwd = pose.orientation * frame.forward.normalized();
  const double horizontal = std::hypot(fwd.x(), fwd.y());
  // Within 1 degree of vertical: the horizontal component is below sin(1 deg).
  if (horizontal < std::sin(deg2rad(1.0))) {
    throw GeometryError("degenerate heading: forward axis is vertical");
  }
  return normalize_deg(rad2deg(std::atan2(fwd.x(), fwd.y())));
}

PlanarPose planar(const CameraPose& pose, const FrameConfig& frame) {
  return PlanarPose{{pose.position.x(), pose.position.y()}, yaw_of(pose, frame)};
}

GlobalPoint ego_to_global(const EgoObservation& obs, const PlanarPose& pose) {
  const double bearing = deg2rad(pose.heading + obs.theta);
  return {pose.position.x + obs.r * std::sin(bearing), pose.position.y + obs.r * std::cos(bearing)};
}

GlobalPoint ego_to_global(const EgoObservation& obs, const CameraPose& pose,
                          const FrameConfig& frame) {
  return ego_to_global(obs, planar(pose, frame));
}

EgoObservation global_to_ego(GlobalPoint point, const PlanarPose& pose, double t) {
  const double dx = point.x - pose.position.x;
  const double dy = point.y - pose.position.y;
  const double r = std::hypot(dx, dy);
  if (!(r > 0.0)) throw GeometryError("point coincides with the camera");
  const double bearing = rad2deg(std::atan2(dx, dy));
  return EgoObservation{t, normalize_deg(bearing - pose.heading), r};
}

EgoObservation global_to_ego(GlobalPoint point, const CameraPose& pose,
                             const FrameConfig& frame) {
  return global_to_ego(point, planar(pose, frame), pose.t);
}

AlloObservation allocentric_observation(GlobalPoint target, const AlloFrame& frame) {
  const double axis_len = horizontal_distance(frame.facing, frame.reference);
  if (!(axis_len > 1e-9)) throw GeometryError("degenerate allocentric frame: reference == facing");
  const double axis_heading = std::atan2(frame.facing.x - frame.reference.x,
                                         frame.facing.y - frame.reference.y);
  const double r = horizontal_distance(target, frame.reference);
  if (r == 0.0) return AlloObservation{0.0, 0.0};
  const double bearing = std::atan2(target.x - frame.reference.x, target.y - frame.reference.y);
  return AlloObservation{normalize_deg(rad2deg(bearing - axis_heading)), r};
}

SimpleDirection quantize_simple(double theta) {
  const double t = normalize_deg(theta);
  if (t >= -120.0 && t < 0.0) return SimpleDirection::kLeft;
  if (t >= 0.0 && t < 120.0) return SimpleDirection::kRight;
  return SimpleDirection::kBack;
}

Quadrant quantize_quadrant(double theta) {
  const double t = normalize_deg(theta);
  if (t < -90.0) return Quadrant::kBackLeft;
  if (t < 0.0) return Quadrant::kFrontLeft;
  if (t < 90.0) return Quadrant::kFrontRight;
  return Quadrant::kBackRight;
}

double horizontal_distance(GlobalPoint a, GlobalPoint b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
}

CameraPose interpolate_pose(const CameraTrajectory& traj, double t) {
  const auto& poses = traj.poses();
  if (poses.empty()) throw GeometryError("cannot interpolate an empty trajectory");
  if (t <= poses.front().t) return poses.front();
  if (t >= poses.back().t) return poses.back();

  auto hi = std::lower_bound(poses.begin(), poses.end(), t,
                             [](const CameraPose& p, double v) { return p.t < v; });
  if (hi->t == t) return *hi;
  auto lo = std::prev(hi);
  const double alpha = (t - lo->t) / (hi->t - lo->t);

  CameraPose out;
  out.t = t;
  out.position = lo->position + alpha * (hi->position - lo->position);
  // Eigen's slerp follows the shorter arc.
  out.orientation = lo->orientation.slerp(alpha, hi->orientation).normalized();
  return out;
}

namespace {

std::vector<double> split_numbers(const std::string& line, std::size_t line_no) {
  std::vector<double> values;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    std::size_t pos = 0;
    try {
      values.push_back(std::stod(field, &pos));
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no), "not a number: '" + field + "'");
    }
    if (field.find_first_not_of(" \t\r", pos) != std::string::npos) {
      throw ParseError("line " + std::to_string(line_no), "trailing characters in '" + field + "'");
    }
  }
  return values;
}

}  // namespace

CameraTrajectory read_trajectory(std::istream& in, FrameConfig frame) {
  std::vector<CameraPose> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto v = split_numbers(line, line_no);
    if (v.size() != 8) {
      throw ParseError("line " + std::to_string(line_no),
                       "expected 8 fields (t, x, y, z, qw, qx, qy, qz)");
    }
    CameraPose p;
    p.t = v[0];
    p.position = {v[1], v[2], v[3]};
    p.orientation = Eigen::Quaterniond(v[4], v[5], v[6], v[7]);
    poses.push_back(p);
  }
  return CameraTrajectory(std::move(poses), std::move(frame));
}

CameraTrajectory read_trajectory_file(const std::string& path, FrameConfig frame) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trajectory file: " + path);
  return read_trajectory(in, std::move(frame));
}

void write_trajectory(std::ostream& out, const CameraTrajectory& traj) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "# t, x, y, z, qw, qx, qy, qz\n";
  for (const auto& p : traj.poses()) {
    const auto& q = p.orientation;
    out << p.t << ", " << p.position.x() << ", " << p.position.y() << ", " << p.position.z() << ", "
        << q.w() << ", " << q.x() << ", " << q.y() << ", " << q.z() << '\n';
  }
  out.precision(old_precision);
}

Eigen::Quaterniond level_orientation(double heading, const FrameConfig& frame) {
  const Eigen::Vector3d f_dev = frame.forward.normalized();
  const Eigen::Vector3d r_dev = frame.right.normalized();
  if (std::abs(f_dev.dot(r_dev)) > 1e-9) throw GeometryError("forward and right axes must be orthogonal");
  const double h = deg2rad(heading);
  const Eigen::Vector3d f_w(std::sin(h), std::cos(h), 0.0);
  const Eigen::Vector3d r_w(std::cos(h), -std::sin(h), 0.0);

  Eigen::Matrix3d dev;
  dev << f_dev, r_dev, f_dev.cross(r_dev);
  Eigen::Matrix3d world;
  world << f_w, r_w, f_w.cross(r_w);
  Eigen::Quaterniond q(Eigen::Matrix3d(world * dev.transpose()));
  q.normalize();
  return q;
}

}  // namespace savvy::geometry
