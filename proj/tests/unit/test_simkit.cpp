#include <doctest.h>

#include "savvy/doa.hpp"
#include "savvy/errors.hpp"
#include "savvy/range.hpp"
#include "savvy/simkit.hpp"
#include "savvy/tracks.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace savvy;
using namespace savvy::simkit;

namespace {

simkit::PositionFn fixed(double phi_deg, double r, const audio::MicArray& a) {
  const Eigen::Vector3d p = r * a.direction(phi_deg);
  return [p](double) { return p; };
}

double channel_rms(const std::vector<float>& x, std::size_t from) {
  double s = 0.0;
  for (std::size_t i = from; i < x.size(); ++i) s += double(x[i]) * x[i];
  return std::sqrt(s / double(x.size() - from));
}

std::vector<double> as_double(const std::vector<float>& x) { return {x.begin(), x.end()}; }

SignalSpec white(double level = 0.1) {
  SignalSpec s;
  s.kind = SignalKind::kNoise;
  s.low_hz = 100.0;
  s.high_hz = 12000.0;
  s.level = level;
  return s;
}

}  // namespace

TEST_CASE("synthesized signals have the requested level and are reproducible") {
  for (auto kind : {SignalKind::kNoise, SignalKind::kBabble, SignalKind::kTone}) {
    SignalSpec s;
    s.kind = kind;
    s.level = 0.25;
    const auto a = synthesize_signal(s, 48000, 48000, 11);
    const auto b = synthesize_signal(s, 48000, 48000, 11);
    const auto c = synthesize_signal(s, 48000, 48000, 12);
    double e = 0.0;
    for (double v : a) e += v * v;
    CHECK(std::sqrt(e / 48000.0) == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(a == b);
    CHECK(a != c);
  }
  SignalSpec bad;
  bad.high_hz = 30000.0;
  CHECK_THROWS_AS(synthesize_signal(bad, 100, 48000, 1), Error);
  CHECK_THROWS_AS(signal_kind_from_string("speech"), ParseError);
}

TEST_CASE("endfire pair: inter-channel lag matches expected_lag") {
  audio::MicArray a;
  a.positions = {{0.07, 0.0, 0.0}, {-0.07, 0.0, 0.0}};
  const auto clip = simulate_source(a, fixed(-90.0, 3.0, a), white(), 0.5, 48000, {}, 5);
  // A source on the left reaches mic 1 first, so channel 1 leads channel 0.
  const auto r = doa::gcc_phat(as_double(clip.channels[0]), as_double(clip.channels[1]), 40);
  CHECK(r.peak_lag() == doa::expected_lag(0, 1, -90.0, a, 48000.0));
  CHECK(std::abs(r.peak_lag()) == 20);
}

TEST_CASE("forward source gives equal delays on mirrored mic pairs") {
  const auto a = audio::aria_array();
  const auto clip = simulate_source(a, fixed(0.0, 2.0, a), white(), 0.5, 48000, {}, 9);
  const std::pair<int, int> pairs[] = {{0, 2}, {3, 4}, {5, 6}};
  for (const auto& [m, n] : pairs) {
    const auto r = doa::gcc_phat(as_double(clip.channels[std::size_t(m)]), as_double(clip.channels[std::size_t(n)]), 30);
    CHECK(std::abs(r.peak_lag()) <= 1);
  }
}

TEST_CASE("doubling the range halves the direct-path amplitude") {
  audio::MicArray a;
  a.positions = {{0.05, 0.0, 0.0}, {-0.05, 0.0, 0.0}};
  const auto sig = white();
  const auto near = simulate_source(a, fixed(30.0, 1.5, a), sig, 1.0, 48000, {}, 3);
  const auto far = simulate_source(a, fixed(30.0, 3.0, a), sig, 1.0, 48000, {}, 3);
  for (std::size_t m = 0; m < 2; ++m) {
    const Eigen::Vector3d p1 = 1.5 * a.direction(30.0), p2 = 3.0 * a.direction(30.0);
    const double expected = (p2 - a.positions[m]).norm() / (p1 - a.positions[m]).norm();
    // Skip the first 20 ms, where the far copy is still arriving.
    CHECK(channel_rms(near.channels[m], 960) / channel_rms(far.channels[m], 960) == doctest::Approx(expected).epsilon(0.01));
  }
}

TEST_CASE("source inside the array is rejected") {
  const auto a = audio::aria_array();
  CHECK_THROWS_AS(simulate_source(a, fixed(0.0, 0.03, a), white(), 0.1, 48000, {}, 1), Error);
}

TEST_CASE("rendering is bit-reproducible per seed") {
  const auto a = audio::aria_array();
  NoiseSpec n;
  n.diffuse_level = 0.02;
  n.sensor_level = 0.001;
  const auto x = simulate_source(a, fixed(40.0, 2.0, a), white(), 0.3, 48000, n, 21);
  const auto y = simulate_source(a, fixed(40.0, 2.0, a), white(), 0.3, 48000, n, 21);
  const auto z = simulate_source(a, fixed(40.0, 2.0, a), white(), 0.3, 48000, n, 22);
  CHECK(x.channels == y.channels);
  CHECK(x.channels != z.channels);
}

TEST_CASE("diffuse field: unit level and diffuse coherence") {
  const auto a = audio::aria_array();
  const auto d = diffuse_field(a, 96000, 48000, 64, 4);
  for (const auto& ch : d) {
    double e = 0.0;
    for (double v : ch) e += v * v;
    CHECK(std::sqrt(e / double(ch.size())) == doctest::Approx(1.0).epsilon(0.05));
  }
  // The CDR estimator models exactly this field, so it should read near zero;
  // independent channels read about mean |sinc| (~0.45) instead.
  audio::AudioClip clip;
  for (const auto& ch : d) clip.channels.emplace_back(ch.begin(), ch.end());
  const auto f = range::estimate_cdr(clip, {0.0, 2.0}, a);
  CHECK(f.cdr < 0.15);
}

TEST_CASE("SRP-PHAT on a simulated anechoic source at 60 degrees") {
  const auto a = audio::aria_array();
  NoiseSpec n;
  n.sensor_level = 0.1 / 2.0 * 0.1;
  const auto clip = simulate_source(a, fixed(60.0, 2.0, a), white(), 0.5, 48000, n, 31);
  const auto est = doa::srp_phat(clip, {0.1, 0.25}, a);
  REQUIRE(est);
  CHECK(std::abs(est->phi_hat - 60.0) <= 1.0);
}

TEST_CASE("mirror symmetry of the estimator") {
  const auto a = audio::aria_array();
  auto mirrored = a;
  for (auto& p : mirrored.positions) p.x() = -p.x();
  // Lateral mirror images: 0<->2, 3<->4, 5<->6; the nose mic is 5 mm off
  // center and maps to itself.
  const std::vector<std::size_t> swap{2, 1, 0, 4, 3, 6, 5};
  for (double phi : {-150.0, -70.0, 25.0, 110.0}) {
    const auto clip = simulate_source(a, fixed(phi, 2.0, a), white(), 0.4, 48000, {}, 41);
    const auto est = doa::srp_phat(clip, {0.1, 0.25}, a);
    const auto reflected = doa::srp_phat(clip, {0.1, 0.25}, mirrored);
    const auto swapped = doa::srp_phat(clip.select_channels(swap), {0.1, 0.25}, a);
    const auto both = doa::srp_phat(clip.select_channels(swap), {0.1, 0.25}, mirrored);
    REQUIRE(est);
    REQUIRE(reflected);
    REQUIRE(swapped);
    REQUIRE(both);
    CHECK(geometry::angular_distance(reflected->phi_hat, -est->phi_hat) <= 1.0);
    CHECK(geometry::angular_distance(swapped->phi_hat, -est->phi_hat) <= 1.0);
    // Reflection plus swap describes the original recording again.
    CHECK(geometry::angular_distance(both->phi_hat, est->phi_hat) <= 1.0);
  }
}

TEST_CASE("CDR at 1:1 direct to diffuse power") {
  const auto a = audio::aria_array();
  NoiseSpec n;
  // Direct path at 2 m has RMS level / 2; a full-band source gives the same
  // spectrum as the diffuse field, so the ratio holds in every band.
  n.diffuse_level = 0.1 / 2.0;
  auto sig = white();
  sig.low_hz = 0.0;
  sig.high_hz = 24000.0;
  const auto clip = simulate_source(a, fixed(100.0, 2.0, a), sig, 2.0, 48000, n, 51);
  const auto f = range::estimate_cdr(clip, {0.0, 2.0}, a);
  CHECK(f.cdr >= 0.5);
  CHECK(f.cdr <= 2.0);
}

TEST_CASE("static source at 120 degrees, 2 m: audio track clusters at the truth") {
  const auto a = audio::aria_array();
  NoiseSpec n;
  n.diffuse_level = 0.1 / 3.0;
  n.sensor_level = 0.001;
  // Calibrate on separate recordings at known distances.
  std::vector<range::CalibrationSample> samples;
  tracks::AudioTrackConfig cfg;
  for (double d : {1.0, 1.5, 2.5, 3.0}) {
    const auto clip = simulate_source(a, fixed(-40.0 + 20.0 * d, d, a), white(), 3.0, 48000, n, 60 + std::uint64_t(d * 10));
    std::vector<geometry::EgoObservation> visual;
    for (double t = 0.5; t <= 2.5; t += 0.5) visual.push_back(geometry::EgoObservation::make(t, 0.0, d));
    const auto s = tracks::calibration_samples(clip, a, visual, cfg);
    samples.insert(samples.end(), s.begin(), s.end());
  }
  const auto calib = range::calibrate_k(samples);

  const auto clip = simulate_source(a, fixed(120.0, 2.0, a), white(), 4.0, 48000, n, 70);
  const auto track = tracks::build_audio_track(clip, a, calib, cfg);
  REQUIRE(track.size() >= 10);
  for (const auto& o : track) {
    CHECK(geometry::angular_distance(o.theta, 120.0) <= 2.0);
    REQUIRE(o.r);
    CHECK(std::abs(*o.r - 2.0) <= 0.4);
  }
}

TEST_CASE("paths") {
  const std::vector<Waypoint> p{{0, 0, 0, 170}, {2, 2, 4, -170}};
  CHECK(position_at(p, 1.0) == geometry::GlobalPoint{1.0, 2.0});
  CHECK(position_at(p, -1.0) == geometry::GlobalPoint{0.0, 0.0});
  CHECK(heading_at(p, 1.0) == doctest::Approx(-180.0));
  const auto c = circle_path({0, -1}, 2.0, 0.0, 20.0, 10.0, 0.5);
  CHECK(c.size() == 21);
  CHECK(c.back().t == 10.0);
  CHECK(c[10].x == doctest::Approx(2.0));
  CHECK(c[10].y == doctest::Approx(-1.0));
}

namespace {

Scenario still_scene(bool noiseless) {
  Scenario s;
  s.name = "still";
  s.seed = 3;
  s.duration = 2.0;
  s.camera = {{0.0, 1.0, 1.0, 30.0}};
  ScenarioSource src;
  src.name = "radio";
  src.description = "radio";
  src.signal = white();
  // 2 m at world heading 30 + 35 = 65: egocentric 35, front-right.
  const double h = geometry::deg2rad(65.0);
  src.path = {{0.0, 1.0 + 2.0 * std::sin(h), 1.0 + 2.0 * std::cos(h), 0.0}};
  s.sources = {src};
  s.objects = {{"door", "front door", {1.0, 4.0}}, {"window", "window", {4.0, 1.0}}};
  s.fixtures.seg_frames = 16;
  if (noiseless) {
    s.fixtures.seg_theta_sigma = 0.0;
    s.fixtures.seg_r_sigma = 0.0;
    s.fixtures.seg_dropout = 0.0;
    s.fixtures.seg_confidence_low = 1.0;
  }
  ScenarioQuestion q;
  q.id = "a";
  q.kind = qa::Kind::kEgoDirHard;
  q.event = "music";
  q.source = "radio";
  q.span = {0.5, 1.5};
  ScenarioQuestion q2 = q;
  q2.id = "b";
  q2.kind = qa::Kind::kAlloDist;
  q2.reference = "door";
  q2.facing = "window";
  s.questions = {q, q2};
  return s;
}

}  // namespace

TEST_CASE("walkthrough of a still scene") {
  const auto s = still_scene(true);
  const auto w = simulate_walkthrough(s);
  REQUIRE(w.answers.size() == 2);
  const auto truth = true_observation(s, s.sources[0], 1.0);
  CHECK(truth.theta == doctest::Approx(35.0));
  CHECK(*w.answers[0].label == "B");
  CHECK(geometry::to_string(geometry::quantize_quadrant(truth.theta)) == "front-right");
  const double dx = s.sources[0].path[0].x - 1.0, dy = s.sources[0].path[0].y - 4.0;
  CHECK(*w.answers[1].meters == doctest::Approx(std::hypot(dx, dy)));

  // Noise-free segmentation equals the truth at every frame.
  const auto& seg = w.segmentation.at("a").at(tracks::Role::kTarget).observations;
  CHECK(seg.size() == 16);
  for (const auto& o : seg) {
    const auto g = true_observation(s, s.sources[0], o.t);
    CHECK(o.theta == g.theta);
    CHECK(o.r == g.r);
    CHECK(o.confidence == 1.0);
  }

  // Answers agree with resolving the stored ground-truth maps.
  for (std::size_t i = 0; i < w.questions.size(); ++i) {
    const auto again = qa::resolve(w.maps.at(w.questions[i].id), w.questions[i], w.trajectory);
    CHECK(again.label == w.answers[i].label);
    CHECK(again.meters == w.answers[i].meters);
  }
  CHECK(w.descriptors.at("b").mode == tracks::Mode::kAllocentric);
  CHECK(w.descriptors.at("a").reference->is_camera);
}

TEST_CASE("walkthrough files and determinism") {
  const auto s = still_scene(false);
  namespace fs = std::filesystem;
  const auto d1 = fs::temp_directory_path() / "savvy_walk_1";
  const auto d2 = fs::temp_directory_path() / "savvy_walk_2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  const auto f1 = write_walkthrough(simulate_walkthrough(s), s, d1.string());
  const auto f2 = write_walkthrough(simulate_walkthrough(s), s, d2.string());
  REQUIRE(f1.size() == f2.size());
  CHECK(f1.size() == 13);
  for (std::size_t i = 0; i < f1.size(); ++i) {
    std::ifstream a(f1[i], std::ios::binary), b(f2[i], std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK_MESSAGE(sa == sb, f1[i]);
  }
  // Written fixtures read back through the regular parsers.
  const auto sd = tracks::read_snapshot_file((d1 / "sd" / "b.json").string());
  CHECK(sd.reference->name == "door");
  const auto seg = tracks::read_seg_tracks_file((d1 / "seg" / "b.csv").string());
  CHECK(seg.count(tracks::Role::kReference) == 1);
  const auto truth = read_doa_truth((d1 / "gt_doa.csv").string());
  CHECK(truth.size() == 201);
  CHECK(doa_truth_at(truth, 1.005).phi == doctest::Approx(35.0));
  const auto traj = geometry::read_trajectory_file((d1 / "trajectory.csv").string());
  CHECK(traj.poses().size() == 2001);
  CHECK(read_scenario_file((d1 / "scenario.json").string()).questions.size() == 2);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("scenario validation") {
  auto s = still_scene(false);
  s.questions[0].span = {1.5, 0.5};
  CHECK_THROWS_AS(s.validate(), ParseError);
  s = still_scene(false);
  s.questions[1].reference = "sofa";
  CHECK_THROWS_AS(s.validate(), ParseError);
  s = still_scene(false);
  s.camera.push_back({0.0, 0.0, 0.0, 0.0});
  CHECK_THROWS_AS(s.validate(), ParseError);
  s = still_scene(false);
  CHECK(to_json(scenario_from_json(to_json(s))) == to_json(s));
}

TEST_CASE("bundled moving-speaker scenario file matches the built-in") {
  const auto path = std::filesystem::path(SAVVY_SOURCE_DIR) / "data" / "scenarios" / "moving_speaker.json";
  const auto from_file = read_scenario_file(path.string());
  CHECK(to_json(from_file) == to_json(moving_speaker_scenario()));
  // The back-right question sits near 130 degrees at its midpoint.
  const auto& q1 = from_file.questions.front();
  const auto o = true_observation(from_file, from_file.sources.front(), q1.span.midpoint());
  CHECK(std::abs(o.theta - 130.0) < 2.0);
}

TEST_CASE("audio track: forward source and silence give empty tracks") {
  const auto a = audio::aria_array();
  NoiseSpec n;
  n.sensor_level = 0.001;
  const auto ahead = simulate_source(a, fixed(0.0, 2.0, a), white(), 1.0, 48000, n, 81);
  CHECK(tracks::build_audio_track(ahead, a, std::nullopt).empty());
  audio::AudioClip silent;
  silent.channels.assign(7, std::vector<float>(48000, 0.0f));
  CHECK(tracks::build_audio_track(silent, a, std::nullopt).empty());
}

TEST_CASE("speaker on a square path behind the camera follows the waypoints") {
  Scenario s;
  s.duration = 8.0;
  s.camera = {{0.0, 0.0, 0.0, 0.0}};
  ScenarioSource src;
  src.name = "walker";
  src.description = "person";
  src.path = {{0.0, -1.0, -1.0, 0.0}, {2.0, 1.0, -1.0, 0.0}, {4.0, 1.0, -3.0, 0.0},
              {6.0, -1.0, -3.0, 0.0}, {8.0, -1.0, -1.0, 0.0}};
  s.sources = {src};
  ScenarioQuestion q;
  q.id = "w";
  q.kind = qa::Kind::kEgoDirSimple;
  q.event = "steps";
  q.source = "walker";
  q.span = {0.0, 8.0};
  s.questions = {q};
  const auto map = ground_truth_map(s, q);
  REQUIRE(map.target.size() == 81);
  for (const auto& p : map.target) {
    const auto want = position_at(src.path, p.t);
    CHECK(p.position.x == doctest::Approx(want.x).epsilon(1e-12));
    CHECK(p.position.y == doctest::Approx(want.y).epsilon(1e-12));
    CHECK(std::abs(true_observation(s, src, p.t).theta) > 90.0);
  }
  CHECK(map.target_at(3.0).x == doctest::Approx(1.0));
  CHECK(map.target_at(3.0).y == doctest::Approx(-2.0));
}
