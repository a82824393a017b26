#pragma once

// Synthetic scene oracle: multi-channel audio for known source paths,
// camera trajectories, descriptor and segmentation fixtures, ground-truth
// maps and answers.

#include "savvy/audio.hpp"
#include "savvy/fusion.hpp"
#include "savvy/geometry.hpp"
#include "savvy/qa.hpp"
#include "savvy/tracks.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace savvy::simkit {

enum class SignalKind { kNoise, kBabble, kTone };

std::string_view to_string(SignalKind k);
SignalKind signal_kind_from_string(std::string_view s);

struct SignalSpec {
  SignalKind kind = SignalKind::kBabble;
  double low_hz = 150.0;
  double high_hz = 6000.0;
  double tone_hz = 1000.0;
  /// RMS of the emitted waveform, i.e. of the direct path at 1 m.
  double level = 0.1;
};

/// `n` samples of the emitted waveform with RMS `spec.level`.
std::vector<double> synthesize_signal(const SignalSpec& spec, std::size_t n, int sample_rate, std::uint64_t seed);

/// Source position in the array (device) frame at time t.
using PositionFn = std::function<Eigen::Vector3d(double)>;

struct Emitter {
  std::vector<double> signal;
  /// Time of signal[0]; negative values give pre-roll for propagation delay.
  double signal_start = 0.0;
  PositionFn position;
};

struct NoiseSpec {
  /// Per-channel RMS of the spherically isotropic diffuse field.
  double diffuse_level = 0.0;
  int diffuse_directions = 64;
  /// Per-channel RMS of independent sensor noise.
  double sensor_level = 0.0;
};

struct RenderConfig {
  int sample_rate = 48000;
  double duration = 1.0;
  /// Interpolation kernel half-width in samples.
  int kernel_half_width = 16;
  /// Interval at which positions are sampled; delays are interpolated
  /// linearly in between.
  double control_period = 1e-3;
};

/// Direct paths with per-mic fractional delay |p_src - p_m| / c and gain
/// 1 / max(|p_src - p_m|, 0.1), plus noise. Throws Error when a source comes
/// within the array's bounding sphere.
audio::AudioClip render(const audio::MicArray& array, const std::vector<Emitter>& emitters, const NoiseSpec& noise,
                        const RenderConfig& config, std::uint64_t seed);

/// One synthesized source.
audio::AudioClip simulate_source(const audio::MicArray& array, const PositionFn& position, const SignalSpec& signal,
                                 double duration, int sample_rate, const NoiseSpec& noise, std::uint64_t seed);

/// Unit-RMS isotropic diffuse field: uncorrelated white plane waves from
/// quasi-uniform directions on the sphere.
std::vector<std::vector<double>> diffuse_field(const audio::MicArray& array, std::size_t n, int sample_rate,
                                               int directions, std::uint64_t seed);

// --- scenarios ----------------------------------------------------------------

struct Waypoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  /// Camera paths only.
  double heading = 0.0;
};

/// Linear interpolation, clamped at the ends; headings take the short arc.
geometry::GlobalPoint position_at(const std::vector<Waypoint>& path, double t);
double heading_at(const std::vector<Waypoint>& path, double t);

/// `center` + radius * (sin a, cos a) with a = start_deg + 360 t / period,
/// sampled every `step` seconds over [0, duration].
std::vector<Waypoint> circle_path(geometry::GlobalPoint center, double radius, double start_deg, double period,
                                  double duration, double step = 0.5);

struct ScenarioObject {
  std::string name;
  std::string description;
  geometry::GlobalPoint position;
};

struct ScenarioSource {
  std::string name;
  std::string description;
  SignalSpec signal;
  std::vector<Waypoint> path;
  double height = 1.6;
};

struct FixtureSpec {
  double hfov = 90.0;
  double sd_period = 2.0;
  double sd_theta_sigma = 5.0;
  double sd_r_sigma = 0.3;
  double sd_dropout = 0.3;
  int seg_frames = 128;
  double seg_theta_sigma = 2.0;
  double seg_r_sigma = 0.15;
  double seg_dropout = 0.1;
  /// Segmentation confidences are uniform in [seg_confidence_low, 1].
  double seg_confidence_low = 0.3;
};

struct ScenarioQuestion {
  std::string id;
  qa::Kind kind = qa::Kind::kEgoDirSimple;
  std::string event;
  bool speech = false;
  std::string source;
  fusion::Span span;
  std::string reference;
  std::string facing;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  double duration = 10.0;
  int sample_rate = 48000;
  audio::MicArray array = audio::aria_array();
  double camera_height = 1.6;
  std::vector<Waypoint> camera;
  std::vector<ScenarioSource> sources;
  std::vector<ScenarioObject> objects;
  NoiseSpec noise;
  FixtureSpec fixtures;
  std::vector<ScenarioQuestion> questions;

  /// Throws ParseError naming the offending field.
  void validate() const;
  const ScenarioSource& source(const std::string& name) const;
  const ScenarioObject& object(const std::string& name) const;
};

nlohmann::json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);
Scenario read_scenario_file(const std::string& path);

/// Speaker circling behind a slowly turning camera, with a table and a TV
/// as anchors; four direction and two distance questions.
Scenario moving_speaker_scenario();

/// Poses sampled at `rate` Hz over [0, duration].
geometry::CameraTrajectory camera_trajectory(const Scenario& s, double rate = 1000.0);

struct DoaTruth {
  double t = 0.0;
  double phi = 0.0;
  double r = 0.0;
};

struct Walkthrough {
  audio::AudioClip audio;
  geometry::CameraTrajectory trajectory;
  std::vector<qa::Question> questions;
  std::vector<qa::Answer> answers;
  std::map<std::string, tracks::SnapshotDescriptor> descriptors;
  std::map<std::string, tracks::SegTracks> segmentation;
  std::map<std::string, fusion::GlobalMap> maps;
  /// Azimuth and range of the first source in the array frame, at 100 Hz.
  std::vector<DoaTruth> doa;
};

/// Ground-truth egocentric observation of a source at time t.
geometry::EgoObservation true_observation(const Scenario& s, const ScenarioSource& src, double t);

/// Noise-free global map for one question: target sampled every 0.1 s over
/// the span, anchors at the true object positions.
fusion::GlobalMap ground_truth_map(const Scenario& s, const ScenarioQuestion& q);

Walkthrough simulate_walkthrough(const Scenario& s);

/// Directory layout: audio.wav, mic_array.json, trajectory.csv,
/// questions.jsonl, gt.jsonl, gt_doa.csv, scenario.json, sd/<id>.json,
/// seg/<id>.csv, gt_maps/<id>.json. Returns the written paths, sorted.
std::vector<std::string> write_walkthrough(const Walkthrough& w, const Scenario& s, const std::string& dir);

std::vector<DoaTruth> read_doa_truth(const std::string& path);

/// Shortest-arc linear interpolation of the truth table; clamps at the ends.
DoaTruth doa_truth_at(const std::vector<DoaTruth>& truth, double t);

}  // namespace savvy::simkit
