#include "savvy/fusion.hpp"

#include "savvy/dbscan.hpp"
#include "savvy/errors.hpp"

#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace savvy::fusion {

using geometry::EgoObservation;
using geometry::GlobalPoint;
using geometry::PlanarPose;
using nlohmann::json;

std::string_view to_string(Source s) {
  switch (s) {
    case Source::kSeg: return "seg";
    case Source::kSd: return "sd";
    case Source::kAudio: return "audio";
    case Source::kSmoothed: return "smoothed";
  }
  return "seg";
}

Source source_from_string(std::string_view s) {
  if (s == "seg") return Source::kSeg;
  if (s == "sd") return Source::kSd;
  if (s == "audio") return Source::kAudio;
  if (s == "smoothed") return Source::kSmoothed;
  throw ParseError("source", "unknown source \"" + std::string(s) + "\"");
}

void FrustumConfig::validate() const {
  if (angular_bins < 1 || range_bins < 1) throw Error("frustum: bins must be at least 1");
  if (!(range_margin > 0.0) || !(angular_span > 0.0 && angular_span < 360.0)) {
    throw Error("frustum: range margin and angular span must be positive");
  }
}

void KalmanConfig::validate() const {
  if (!(process_noise > 0.0) || !(measurement_noise > 0.0)) throw Error("kalman: noises must be positive");
  if (!(output_period > 0.0)) throw Error("kalman: output period must be positive");
  if (!(initial_velocity_variance > 0.0)) throw Error("kalman: initial velocity variance must be positive");
}

// --- globalize ----------------------------------------------------------------

namespace {

TrackPoint project(const EgoObservation& obs, const geometry::CameraTrajectory& traj, Source source) {
  const auto pose = geometry::planar(geometry::interpolate_pose(traj, obs.t), traj.frame());
  TrackPoint p;
  p.t = obs.t;
  p.position = geometry::ego_to_global(obs, pose);
  p.source = source;
  p.ego = obs;
  p.pose = pose;
  return p;
}

}  // namespace

GlobalTrack globalize(const std::vector<EgoObservation>& ego, const geometry::CameraTrajectory& traj, Source source,
                      const std::vector<double>& confidences) {
  if (!confidences.empty() && confidences.size() != ego.size()) {
    throw Error("globalize: confidences must match observations");
  }
  GlobalTrack out;
  out.reserve(ego.size());
  for (std::size_t i = 0; i < ego.size(); ++i) {
    out.push_back(project(ego[i], traj, source));
    if (!confidences.empty()) out.back().confidence = confidences[i];
  }
  return out;
}

GlobalTrack globalize(const std::vector<tracks::SegObservation>& seg, const geometry::CameraTrajectory& traj) {
  GlobalTrack out;
  out.reserve(seg.size());
  for (const auto& s : seg) {
    out.push_back(project(EgoObservation::make(s.t, s.theta, s.r), traj, Source::kSeg));
    out.back().confidence = s.confidence;
  }
  return out;
}

GlobalTrack globalize(const std::vector<tracks::AudioObservation>& audio, const geometry::CameraTrajectory& traj,
                      double default_range) {
  GlobalTrack out;
  out.reserve(audio.size());
  for (const auto& a : audio) {
    out.push_back(project(EgoObservation::make(a.t, a.theta, a.r.value_or(default_range)), traj, Source::kAudio));
    out.back().has_range = a.r.has_value();
  }
  return out;
}

// --- static anchors -----------------------------------------------------------

StaticAnchor cluster_static(const GlobalTrack& points, double eps, std::size_t min_pts) {
  if (points.empty()) throw ClusterError("cluster_static: no points");
  auto sorted = points;
  std::sort(sorted.begin(), sorted.end(), [](const TrackPoint& a, const TrackPoint& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.position.x != b.position.x) return a.position.x < b.position.x;
    return a.position.y < b.position.y;
  });
  const auto labels = dbscan(sorted.size(), min_pts, [&](std::size_t i, std::size_t j) {
    return geometry::horizontal_distance(sorted[i].position, sorted[j].position) <= eps;
  });
  const auto clusters = cluster_members(labels);

  if (clusters.empty()) {
    const TrackPoint* best = nullptr;
    for (const auto& p : sorted) {
      if (p.confidence && (!best || *p.confidence > *best->confidence)) best = &p;
    }
    if (!best) throw ClusterError("cluster_static: every point is noise and none carries a confidence");
    return {best->position, 1, best->source};
  }

  auto first_t = [&](const std::vector<std::size_t>& c) {
    double t = std::numeric_limits<double>::infinity();
    for (auto i : c) t = std::min(t, sorted[i].t);
    return t;
  };
  const std::vector<std::size_t>* best = &clusters.front();
  for (const auto& c : clusters) {
    if (c.size() > best->size() || (c.size() == best->size() && first_t(c) < first_t(*best))) best = &c;
  }
  GlobalPoint sum{0.0, 0.0};
  for (auto i : *best) {
    sum.x += sorted[i].position.x;
    sum.y += sorted[i].position.y;
  }
  const double n = static_cast<double>(best->size());
  return {{sum.x / n, sum.y / n}, best->size(), sorted[best->front()].source};
}

// --- dynamic fusion -----------------------------------------------------------

std::vector<EgoObservation> frustum_candidates(double theta_c, double r_c, double t, const FrustumConfig& config) {
  config.validate();
  const double aw = config.angular_span / config.angular_bins;
  const double rw = 2.0 * config.range_margin / config.range_bins;
  std::vector<EgoObservation> out;
  for (int i = 0; i < config.angular_bins; ++i) {
    const double theta = theta_c - 0.5 * config.angular_span + (i + 0.5) * aw;
    for (int j = 0; j < config.range_bins; ++j) {
      const double r = r_c - config.range_margin + (j + 0.5) * rw;
      if (r > 0.0) out.push_back(EgoObservation::make(t, theta, r));
    }
  }
  return out;
}

namespace {

bool covered(double t, const std::vector<double>& times, double tol) {
  const auto it = std::lower_bound(times.begin(), times.end(), t - tol);
  return it != times.end() && *it <= t + tol;
}

// Audio point placed in the frustum around `center`, or as measured when it
// falls outside.
TrackPoint refine_audio(const TrackPoint& a, const TrackPoint* center, const FusionConfig& cfg) {
  TrackPoint out = a;
  std::optional<EgoObservation> c;
  if (center) {
    try {
      c = geometry::global_to_ego(center->position, a.pose, a.t);
    } catch (const GeometryError&) {
      c.reset();  // estimate sits on the camera
    }
  }
  if (!a.has_range) {
    out.ego = EgoObservation::make(a.t, a.ego.theta, c ? c->r : cfg.default_audio_range);
    out.position = geometry::ego_to_global(out.ego, a.pose);
    out.has_range = true;
  }
  if (!c) return out;

  const auto& f = cfg.frustum;
  const bool inside = geometry::angular_distance(out.ego.theta, c->theta) <= 0.5 * f.angular_span &&
                      std::abs(out.ego.r - c->r) <= f.range_margin;
  if (!inside) return out;

  const GlobalPoint measured = out.position;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& cand : frustum_candidates(c->theta, c->r, a.t, f)) {
    const auto p = geometry::ego_to_global(cand, a.pose);
    const double d = geometry::horizontal_distance(p, measured);
    if (d < best) {
      best = d;
      out.position = p;
      out.ego = cand;
    }
  }
  return out;
}

}  // namespace

GlobalTrack fuse_dynamic(const GlobalTrack& seg, const GlobalTrack& sd, const GlobalTrack& audio, Span span,
                         const FusionConfig& config) {
  config.frustum.validate();
  auto in_span = [&](const GlobalTrack& src) {
    GlobalTrack out;
    std::copy_if(src.begin(), src.end(), std::back_inserter(out), [&](const TrackPoint& p) {
      return span.contains(p.t);
    });
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    return out;
  };
  const GlobalTrack sources[3] = {in_span(seg), in_span(sd), in_span(audio)};
  if (sources[0].empty() && sources[1].empty() && sources[2].empty()) {
    throw EmptyTrackError("no target observations inside [" + std::to_string(span.start) + ", " +
                          std::to_string(span.end) + "]");
  }

  std::vector<double> visual_times;
  for (int s = 0; s < 2; ++s) {
    for (const auto& p : sources[s]) visual_times.push_back(p.t);
  }
  std::sort(visual_times.begin(), visual_times.end());

  std::vector<double> timeline;
  for (const auto& src : sources) {
    for (const auto& p : src) timeline.push_back(p.t);
  }
  std::sort(timeline.begin(), timeline.end());
  timeline.erase(std::unique(timeline.begin(), timeline.end()), timeline.end());

  std::map<double, TrackPoint> accepted;
  const TrackPoint* last = nullptr;  // most recently accepted, i.e. latest t so far
  std::size_t cursor[3] = {0, 0, 0};

  for (double t : timeline) {
    for (int s = 0; s < 3; ++s) {
      const auto& src = sources[s];
      auto& k = cursor[s];
      if (k >= src.size() || src[k].t != t) continue;
      const TrackPoint& p = src[k];
      while (k < src.size() && src[k].t == t) ++k;  // later duplicates are dropped
      if (accepted.count(t)) continue;

      if (s == 1 && last && t - last->t <= config.sd_gate_window &&
          geometry::horizontal_distance(p.position, last->position) > config.sd_gate_radius) {
        continue;
      }
      TrackPoint admitted = p;
      if (s == 2) {
        const bool behind = std::abs(p.ego.theta) > config.frustum.behind_threshold;
        if (!behind && covered(t, visual_times, config.coverage_tolerance)) continue;
        admitted = refine_audio(p, last, config);
      }
      last = &(accepted[t] = admitted);
    }
  }

  GlobalTrack out;
  out.reserve(accepted.size());
  for (auto& [t, p] : accepted) out.push_back(p);
  return out;
}

// --- smoothing ----------------------------------------------------------------

GlobalTrack smooth_at(const GlobalTrack& track, const KalmanConfig& config, const std::vector<double>& times) {
  config.validate();
  if (track.empty()) throw EmptyTrackError("kalman_smooth: no points");
  auto meas = track;
  std::stable_sort(meas.begin(), meas.end(), [](const auto& a, const auto& b) { return a.t < b.t; });

  // Timeline of measurement and output instants.
  std::vector<double> timeline;
  for (const auto& m : meas) timeline.push_back(m.t);
  timeline.insert(timeline.end(), times.begin(), times.end());
  std::sort(timeline.begin(), timeline.end());
  timeline.erase(std::unique(timeline.begin(), timeline.end()), timeline.end());
  const std::size_t n = timeline.size();

  using Vec = Eigen::Vector2d;
  using Mat = Eigen::Matrix2d;
  const double q = config.process_noise;
  const double r = config.measurement_noise;
  GlobalTrack out(times.size());

  for (int axis = 0; axis < 2; ++axis) {
    auto coord = [&](const TrackPoint& p) { return axis == 0 ? p.position.x : p.position.y; };
    std::vector<Vec> xp(n), xf(n);
    std::vector<Mat> pp(n), pf(n);
    Vec x(coord(meas.front()), 0.0);
    Mat P;
    P << r, 0.0, 0.0, config.initial_velocity_variance;
    std::size_t m = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0) {
        const double dt = timeline[k] - timeline[k - 1];
        Mat F;
        F << 1.0, dt, 0.0, 1.0;
        Mat Q;
        Q << dt * dt * dt / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt;
        x = F * x;
        P = F * P * F.transpose() + q * Q;
      }
      xp[k] = x;
      pp[k] = P;
      while (m < meas.size() && meas[m].t == timeline[k]) {
        const double s = P(0, 0) + r;
        const Vec K = P.col(0) / s;
        x += K * (coord(meas[m]) - x(0));
        const Mat I_KH = Mat::Identity() - K * Eigen::RowVector2d(1.0, 0.0);
        P = I_KH * P * I_KH.transpose() + r * K * K.transpose();
        ++m;
      }
      xf[k] = x;
      pf[k] = P;
    }
    std::vector<Vec> xs(n);
    xs[n - 1] = xf[n - 1];
    Mat Ps = pf[n - 1];
    for (std::size_t k = n - 1; k-- > 0;) {
      const double dt = timeline[k + 1] - timeline[k];
      Mat F;
      F << 1.0, dt, 0.0, 1.0;
      const Mat C = pf[k] * F.transpose() * pp[k + 1].inverse();
      xs[k] = xf[k] + C * (xs[k + 1] - xp[k + 1]);
      Ps = pf[k] + C * (Ps - pp[k + 1]) * C.transpose();
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto k = static_cast<std::size_t>(std::lower_bound(timeline.begin(), timeline.end(), times[i]) -
                                              timeline.begin());
      (axis == 0 ? out[i].position.x : out[i].position.y) = xs[k](0);
    }
  }
  for (std::size_t i = 0; i < times.size(); ++i) {
    out[i].t = times[i];
    out[i].source = Source::kSmoothed;
  }
  return out;
}

GlobalTrack kalman_smooth(const GlobalTrack& track, const KalmanConfig& config, Span span) {
  config.validate();
  if (!(span.end >= span.start)) throw Error("kalman_smooth: span end precedes start");
  std::vector<double> times;
  for (std::size_t i = 0;; ++i) {
    const double t = span.start + static_cast<double>(i) * config.output_period;
    if (t >= span.end - 1e-9) break;
    times.push_back(t);
  }
  times.push_back(span.end);
  return smooth_at(track, config, times);
}

// --- map ------------------------------------------------------------------------

GlobalPoint GlobalMap::target_at(double t) const {
  if (target.empty()) throw EmptyTrackError("global map has no target track");
  if (t <= target.front().t) return target.front().position;
  if (t >= target.back().t) return target.back().position;
  const auto it = std::lower_bound(target.begin(), target.end(), t,
                                   [](const TrackPoint& p, double v) { return p.t < v; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double u = (t - a.t) / (b.t - a.t);
  return {a.position.x + u * (b.position.x - a.position.x), a.position.y + u * (b.position.y - a.position.y)};
}

namespace {

std::optional<StaticAnchor> anchor_for(const std::optional<tracks::ObjectEntry>& sd_obj, tracks::Role role,
                                       const tracks::TrackBundle& bundle, const geometry::CameraTrajectory& traj,
                                       const FusionConfig& cfg) {
  if (sd_obj && !sd_obj->is_camera && !sd_obj->keyframes.empty()) {
    try {
      auto a = cluster_static(globalize(sd_obj->keyframes, traj, Source::kSd), cfg.static_eps, cfg.static_min_pts);
      a.source = Source::kSd;
      return a;
    } catch (const ClusterError& e) {
      spdlog::info("{} anchor: SD track unusable ({}), trying Seg", tracks::to_string(role), e.what());
    }
  }
  const auto it = bundle.seg.find(role);
  if (it == bundle.seg.end()) return std::nullopt;
  const auto seg = tracks::filter_seg_confidence(it->second.observations, role, cfg.seg_thresholds);
  if (seg.empty()) return std::nullopt;
  try {
    auto a = cluster_static(globalize(seg, traj), cfg.static_eps, cfg.static_min_pts);
    a.source = Source::kSeg;
    return a;
  } catch (const ClusterError& e) {
    spdlog::info("{} anchor: Seg track unusable ({})", tracks::to_string(role), e.what());
    return std::nullopt;
  }
}

}  // namespace

GlobalMap build_global_map(const tracks::TrackBundle& bundle, const geometry::CameraTrajectory& traj,
                           const FusionConfig& config) {
  bundle.validate();
  if (traj.empty()) throw GeometryError("build_global_map: empty camera trajectory");
  GlobalMap map;
  map.mode = bundle.sd.mode;
  map.span = {bundle.sd.start, bundle.sd.end};

  if (map.mode == tracks::Mode::kAllocentric) {
    map.reference = anchor_for(bundle.sd.reference, tracks::Role::kReference, bundle, traj, config);
    map.facing = anchor_for(bundle.sd.facing, tracks::Role::kFacing, bundle, traj, config);
    if (!map.reference) throw ModeError("allocentric map: no reference anchor could be placed");
    if (!map.facing) throw ModeError("allocentric map: no facing anchor could be placed");
  }

  GlobalTrack seg;
  if (const auto it = bundle.seg.find(tracks::Role::kTarget); it != bundle.seg.end()) {
    seg = globalize(tracks::filter_seg_confidence(it->second.observations, tracks::Role::kTarget,
                                                  config.seg_thresholds),
                    traj);
  }
  const GlobalTrack sd = globalize(bundle.sd.target.keyframes, traj, Source::kSd);

  if (bundle.sd.target.is_static) {
    // A static sounding object is an anchor like any other, held over the span.
    std::optional<StaticAnchor> a;
    if (!sd.empty()) {
      try {
        a = cluster_static(sd, config.static_eps, config.static_min_pts);
      } catch (const ClusterError&) {
      }
    }
    if (!a && !seg.empty()) {
      try {
        a = cluster_static(seg, config.static_eps, config.static_min_pts);
      } catch (const ClusterError&) {
      }
    }
    if (a) {
      TrackPoint p;
      p.position = a->position;
      p.source = a->source;
      p.t = map.span.start;
      map.fused = {p};
      map.target = kalman_smooth(map.fused, config.kalman, map.span);
      return map;
    }
  }

  const GlobalTrack audio = globalize(bundle.audio, traj, config.default_audio_range);
  map.fused = fuse_dynamic(seg, sd, audio, map.span, config);
  map.target = kalman_smooth(map.fused, config.kalman, map.span);
  return map;
}

namespace {

json point_json(const TrackPoint& p) {
  json j{{"t", p.t}, {"x", p.position.x}, {"y", p.position.y}, {"source", to_string(p.source)}};
  if (p.confidence) j["confidence"] = *p.confidence;
  return j;
}

TrackPoint point_from(const json& j) {
  TrackPoint p;
  p.t = j.at("t").get<double>();
  p.position = {j.at("x").get<double>(), j.at("y").get<double>()};
  p.source = source_from_string(j.value("source", std::string("smoothed")));
  if (j.contains("confidence")) p.confidence = j.at("confidence").get<double>();
  return p;
}

json anchor_json(const std::optional<StaticAnchor>& a) {
  if (!a) return nullptr;
  return {{"x", a->position.x}, {"y", a->position.y}, {"support", a->support}, {"source", to_string(a->source)}};
}

std::optional<StaticAnchor> anchor_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  StaticAnchor a;
  a.position = {j.at("x").get<double>(), j.at("y").get<double>()};
  a.support = j.value("support", std::size_t{1});
  a.source = source_from_string(j.value("source", std::string("sd")));
  return a;
}

}  // namespace

json to_json(const GlobalMap& map) {
  json j;
  j["format"] = "savvy-global-map";
  j["version"] = kGlobalMapVersion;
  j["mode"] = std::string(tracks::to_string(map.mode));
  j["span"] = {map.span.start, map.span.end};
  j["target"] = json::array();
  for (const auto& p : map.target) j["target"].push_back(point_json(p));
  j["fused"] = json::array();
  for (const auto& p : map.fused) j["fused"].push_back(point_json(p));
  j["reference"] = anchor_json(map.reference);
  j["facing"] = anchor_json(map.facing);
  return j;
}

GlobalMap global_map_from_json(const json& j) {
  GlobalMap map;
  try {
    if (j.value("format", std::string()) != "savvy-global-map") throw ParseError("format", "not a global map");
    const int version = j.at("version").get<int>();
    if (version != kGlobalMapVersion) {
      throw ParseError("version", "unsupported global map version " + std::to_string(version));
    }
    map.mode = tracks::mode_from_string(j.at("mode").get<std::string>());
    map.span = {j.at("span").at(0).get<double>(), j.at("span").at(1).get<double>()};
    for (const auto& p : j.at("target")) map.target.push_back(point_from(p));
    for (const auto& p : j.value("fused", json::array())) map.fused.push_back(point_from(p));
    map.reference = anchor_from(j.value("reference", json()));
    map.facing = anchor_from(j.value("facing", json()));
  } catch (const json::exception& e) {
    throw ParseError("global map", e.what());
  }
  return map;
}

}  // namespace savvy::fusion
