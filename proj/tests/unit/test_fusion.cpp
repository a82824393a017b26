#include <doctest.h>

#include "../oracles/aggregation_oracle.hpp"
#include "savvy/errors.hpp"
#include "savvy/fusion.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace savvy;
using namespace savvy::fusion;
using geometry::EgoObservation;

namespace {

geometry::CameraTrajectory still_camera(double heading = 0.0, double x = 0.0, double y = 0.0) {
  geometry::FrameConfig frame;
  std::vector<geometry::CameraPose> poses(2);
  poses[0].t = 0.0;
  poses[1].t = 100.0;
  for (auto& p : poses) {
    p.position = {x, y, 1.5};
    p.orientation = geometry::level_orientation(heading, frame);
  }
  return geometry::CameraTrajectory(poses, frame);
}

TrackPoint at(double t, double x, double y, Source s = Source::kSeg) {
  TrackPoint p;
  p.t = t;
  p.position = {x, y};
  p.source = s;
  return p;
}

}  // namespace

TEST_CASE("globalize with a fixed pose") {
  const auto traj = still_camera();
  const auto g = globalize(std::vector<EgoObservation>{EgoObservation::make(3.0, 90.0, 1.0)}, traj, Source::kSd);
  REQUIRE(g.size() == 1);
  CHECK(g[0].position.x == doctest::Approx(1.0));
  CHECK(std::abs(g[0].position.y) < 1e-12);
  CHECK(globalize(std::vector<EgoObservation>{}, traj, Source::kSd).empty());
}

TEST_CASE("globalize across a half turn maps mirrored observations to one point") {
  geometry::FrameConfig frame;
  std::vector<geometry::CameraPose> poses(2);
  poses[0].t = 0.0;
  poses[0].orientation = geometry::level_orientation(0.0, frame);
  poses[1].t = 10.0;
  poses[1].orientation = geometry::level_orientation(180.0, frame);
  // Hold each heading with a knot just before/after the turn.
  poses.insert(poses.begin() + 1, poses[0]);
  poses[1].t = 4.9;
  poses.insert(poses.begin() + 2, poses[2]);
  poses[2].t = 5.1;
  const geometry::CameraTrajectory traj(poses, frame);
  const auto g = globalize(
      std::vector<EgoObservation>{EgoObservation::make(1.0, 30.0, 2.0), EgoObservation::make(9.0, -150.0, 2.0)}, traj,
      Source::kSd);
  CHECK(g[0].position.x == doctest::Approx(g[1].position.x));
  CHECK(g[0].position.y == doctest::Approx(g[1].position.y));
}

TEST_CASE("cluster_static") {
  GlobalTrack pts;
  const double xs[] = {0.0, 0.1, 0.2, 0.05, 0.15};
  for (int i = 0; i < 5; ++i) pts.push_back(at(i, 2.0 + xs[i], 3.0 - xs[i]));
  pts.push_back(at(5, 12.0, 3.0));
  auto a = cluster_static(pts, 1.0, 2);
  CHECK(a.position.x == doctest::Approx(2.1));
  CHECK(a.position.y == doctest::Approx(2.9));
  CHECK(a.support == 5);

  GlobalTrack same(4, at(0, 1.0, 1.0));
  a = cluster_static(same, 1.0, 2);
  CHECK(a.support == 4);
  CHECK(a.position.x == 1.0);

  a = cluster_static(GlobalTrack{at(0, 4.0, -1.0)}, 1.0, 1);
  CHECK(a.position.x == 4.0);

  // All noise: highest confidence wins; without confidences it fails.
  GlobalTrack sparse{at(0, 0, 0), at(1, 5, 0), at(2, 10, 0)};
  CHECK_THROWS_AS(cluster_static(sparse, 1.0, 2), ClusterError);
  sparse[1].confidence = 0.9;
  sparse[2].confidence = 0.7;
  CHECK(cluster_static(sparse, 1.0, 2).position.x == 5.0);

  // Equal clusters: the one seen first wins, regardless of input order.
  GlobalTrack tie{at(3, 0, 0), at(4, 0.1, 0), at(1, 9, 0), at(2, 9.1, 0)};
  CHECK(cluster_static(tie, 1.0, 2).position.x == doctest::Approx(9.05));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(tie.begin(), tie.end(), rng);
    CHECK(cluster_static(tie, 1.0, 2).position.x == doctest::Approx(9.05));
  }
}

TEST_CASE("frustum candidates are bin centers") {
  const auto c = frustum_candidates(0.0, 2.0, 0.0, FrustumConfig{});
  REQUIRE(c.size() == 50);
  CHECK(c.front().theta == doctest::Approx(-20.25));
  CHECK(c.front().r == doctest::Approx(1.2));
  CHECK(c.back().theta == doctest::Approx(20.25));
  CHECK(c.back().r == doctest::Approx(2.8));
  // r_c = 0.5: bin centers -0.3, 0.1, 0.5, 0.9, 1.3; the negative one is dropped.
  CHECK(frustum_candidates(0.0, 0.5, 0.0, FrustumConfig{}).size() == 40);
}

TEST_CASE("fuse_dynamic: Seg covering the span is returned unchanged") {
  const auto traj = still_camera();
  GlobalTrack seg, sd, audio;
  for (int i = 0; i <= 20; ++i) {
    seg.push_back(at(i * 0.1, 1.0 + 0.01 * i, 2.0));
    sd.push_back(at(i * 0.1, 5.0, 5.0, Source::kSd));
  }
  const auto fused = fuse_dynamic(seg, sd, audio, {0.0, 2.0});
  REQUIRE(fused.size() == seg.size());
  for (std::size_t i = 0; i < seg.size(); ++i) {
    CHECK(fused[i].t == seg[i].t);
    CHECK(fused[i].position == seg[i].position);
    CHECK(fused[i].source == Source::kSeg);
  }
}

TEST_CASE("fuse_dynamic: SD gate") {
  GlobalTrack seg{at(1.0, 0.0, 2.0)};
  GlobalTrack sd{at(1.5, 5.0, 2.0, Source::kSd), at(2.0, 0.5, 2.2, Source::kSd), at(4.5, 6.0, 2.0, Source::kSd)};
  const auto fused = fuse_dynamic(seg, sd, {}, {0.0, 10.0});
  REQUIRE(fused.size() == 3);
  CHECK(fused[0].t == 1.0);
  CHECK(fused[1].t == 2.0);  // 1.5 rejected: 5 m from the seg point
  CHECK(fused[2].t == 4.5);  // no accepted point in the preceding 2 s
  CHECK_THROWS_AS(fuse_dynamic({}, {}, {}, {0.0, 1.0}), EmptyTrackError);
  CHECK_THROWS_AS(fuse_dynamic(seg, {}, {}, {2.0, 3.0}), EmptyTrackError);
}

TEST_CASE("fuse_dynamic: audio rules") {
  const auto traj = still_camera();
  const auto seg = globalize(std::vector<tracks::SegObservation>{{1.0, 10.0, 2.0, 0.9}}, traj);
  // Audio at the seg time but in front: skipped. Behind, uncovered, and far
  // from any visual time are admitted.
  std::vector<tracks::AudioObservation> a{{1.0, 12.0, 2.0, 1.0, 1.0},
                                          {1.25, 30.0, 2.0, 1.0, 1.0},
                                          {1.75, 25.0, 2.0, 1.0, 1.0},
                                          {2.0, 120.0, std::nullopt, 0.0, 1.0}};
  const auto audio = globalize(a, traj, 2.0);
  const auto fused = fuse_dynamic(seg, {}, audio, {0.0, 5.0});
  REQUIRE(fused.size() == 3);
  CHECK(fused[0].source == Source::kSeg);
  CHECK(fused[1].t == 1.75);
  // 1.75 is inside the frustum around the seg estimate: snapped to a bin center.
  CHECK(std::fmod(std::abs(fused[1].ego.theta - (10.0 - 22.5)), 4.5) == doctest::Approx(2.25));
  // Behind-camera, direction-only: takes the current estimate's range.
  CHECK(fused[2].t == 2.0);
  CHECK(fused[2].ego.r == doctest::Approx(2.0).epsilon(0.21));
}

TEST_CASE("fuse_dynamic matches the aggregation oracle on random small instances") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ang(-180.0, 180.0), rr(0.5, 4.0), head(-180.0, 180.0);
  std::uniform_int_distribution<int> count(0, 7), slot(0, 39);
  for (int trial = 0; trial < 400; ++trial) {
    geometry::FrameConfig frame;
    std::vector<geometry::CameraPose> poses(3);
    for (int i = 0; i < 3; ++i) {
      poses[i].t = 5.0 * i;
      poses[i].position = {0.3 * i, -0.2 * i, 1.5};
      poses[i].orientation = geometry::level_orientation(head(rng), frame);
    }
    const geometry::CameraTrajectory traj(poses, frame);

    auto times = [&](int n) {
      std::vector<double> t;
      for (int i = 0; i < n; ++i) t.push_back(0.25 * slot(rng));
      std::sort(t.begin(), t.end());
      return t;
    };
    std::vector<tracks::SegObservation> s;
    for (double t : times(count(rng))) s.push_back({t, ang(rng), rr(rng), 0.9});
    std::vector<EgoObservation> d;
    for (double t : times(count(rng))) d.push_back(EgoObservation::make(t, ang(rng), rr(rng)));
    std::vector<tracks::AudioObservation> a;
    for (double t : times(count(rng))) {
      std::optional<double> r;
      if (slot(rng) % 3) r = rr(rng);
      a.push_back({t, ang(rng), r, 0.0, 1.0});
    }
    const auto S = globalize(s, traj);
    const auto D = globalize(d, traj, Source::kSd);
    const auto A = globalize(a, traj, 2.0);
    const double t0 = 0.25 * slot(rng) / 4.0, t1 = t0 + 6.0;

    const auto want = oracle::aggregate(S, D, A, t0, t1, {});
    if (want.empty()) {
      CHECK_THROWS_AS(fuse_dynamic(S, D, A, {t0, t1}), EmptyTrackError);
      continue;
    }
    const auto got = fuse_dynamic(S, D, A, {t0, t1});
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].t == want[i].t);
      CHECK(static_cast<int>(got[i].source) == want[i].source);
      CHECK(got[i].position.x == doctest::Approx(want[i].x).epsilon(1e-12));
      CHECK(got[i].position.y == doctest::Approx(want[i].y).epsilon(1e-12));
    }
    for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].t < got[i].t);
  }
}

TEST_CASE("kalman smoothing") {
  KalmanConfig cfg;
  SUBCASE("stationary input stays put") {
    GlobalTrack pts;
    for (int i = 0; i < 30; ++i) pts.push_back(at(0.2 * i, 1.5, -2.0));
    const auto s = kalman_smooth(pts, cfg, {0.0, 6.0});
    CHECK(s.size() == 61);
    for (const auto& p : s) {
      CHECK(std::abs(p.position.x - 1.5) < 1e-6);
      CHECK(std::abs(p.position.y + 2.0) < 1e-6);
    }
  }
  SUBCASE("linear motion") {
    GlobalTrack pts;
    for (int i = 0; i <= 100; ++i) pts.push_back(at(0.1 * i, 0.1 * i, 0.0));
    const auto s = kalman_smooth(pts, cfg, {0.0, 10.0});
    const auto mid = std::find_if(s.begin(), s.end(), [](const TrackPoint& p) { return std::abs(p.t - 5.0) < 1e-9; });
    REQUIRE(mid != s.end());
    CHECK(std::abs(mid->position.x - 5.0) < 0.1);
    CHECK(std::abs(mid->position.y) < 0.1);
    CHECK(s.back().t == 10.0);
  }
  SUBCASE("single point is held constant") {
    const auto s = kalman_smooth(GlobalTrack{at(3.0, 2.0, 1.0)}, cfg, {0.0, 6.0});
    for (const auto& p : s) {
      CHECK(p.position.x == doctest::Approx(2.0));
      CHECK(p.position.y == doctest::Approx(1.0));
    }
  }
  SUBCASE("vanishing measurement noise interpolates the input") {
    KalmanConfig tight = cfg;
    tight.measurement_noise = 1e-14;
    GlobalTrack pts;
    std::vector<double> times;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 25; ++i) {
      pts.push_back(at(0.37 * i, u(rng), u(rng)));
      times.push_back(0.37 * i);
    }
    const auto s = smooth_at(pts, tight, times);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(std::abs(s[i].position.x - pts[i].position.x) < 1e-6);
      CHECK(std::abs(s[i].position.y - pts[i].position.y) < 1e-6);
    }
  }
  CHECK_THROWS_AS(kalman_smooth({}, cfg, {0.0, 1.0}), EmptyTrackError);
}

TEST_CASE("global map building and serialization") {
  const auto traj = still_camera();
  tracks::TrackBundle b;
  b.sd.start = 2.0;
  b.sd.end = 4.0;
  b.sd.mode = tracks::Mode::kAllocentric;
  b.sd.target.description = "speaker";
  tracks::ObjectEntry table;
  table.is_static = true;
  for (int i = 0; i < 4; ++i) table.keyframes.push_back(EgoObservation::make(i, 45.0 + 0.5 * i, 2.0));
  b.sd.reference = table;
  tracks::ObjectEntry tv;
  tv.is_static = true;  // no SD keyframes: falls back to Seg
  b.sd.facing = tv;
  b.seg[tracks::Role::kFacing].observations = {{1.0, -30.0, 3.0, 0.9}, {2.0, -30.5, 3.0, 0.8}, {3.0, -29.5, 3.1, 0.5}};
  b.seg[tracks::Role::kTarget].observations = {{2.5, 0.0, 1.0, 0.9}, {3.5, 5.0, 1.0, 0.9}};

  const auto map = build_global_map(b, traj);
  REQUIRE(map.reference);
  REQUIRE(map.facing);
  CHECK(map.reference->source == Source::kSd);
  CHECK(map.facing->source == Source::kSeg);
  CHECK(map.facing->support == 2);  // the 0.5-confidence point is filtered
  CHECK(map.reference->position.x == doctest::Approx(2.0 * std::sin(geometry::deg2rad(45.75))).epsilon(1e-3));
  CHECK(map.fused.size() == 2);
  CHECK(map.target.front().t == 2.0);
  CHECK(map.target.back().t == 4.0);

  const auto back = global_map_from_json(to_json(map));
  CHECK(back.target.size() == map.target.size());
  CHECK(back.reference->position == map.reference->position);
  CHECK(back.target_at(3.0) == map.target_at(3.0));

  auto bad = to_json(map);
  bad["version"] = 99;
  CHECK_THROWS_AS(global_map_from_json(bad), ParseError);

  const auto png = std::filesystem::temp_directory_path() / "savvy_map_test.png";
  plot_global_map(map, traj, png.string(), 200);
  CHECK(std::filesystem::file_size(png) > 100);
  std::filesystem::remove(png);

  b.seg.erase(tracks::Role::kFacing);
  CHECK_THROWS_AS(build_global_map(b, traj), ModeError);
}
