#pragma once

// Stage-1 egocentric tracks: snapshot descriptors from the language model,
// segmentation tracks, and spatial-audio tracks, bundled per question.

#include "savvy/audio.hpp"
#include "savvy/doa.hpp"
#include "savvy/geometry.hpp"
#include "savvy/range.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace savvy::tracks {

enum class Mode { kEgocentric, kAllocentric };
enum class Role { kTarget, kReference, kFacing };

std::string_view to_string(Mode m);
std::string_view to_string(Role r);
Mode mode_from_string(std::string_view s);
Role role_from_string(std::string_view s);

struct ObjectEntry {
  std::string name;
  std::string description;
  bool is_static = false;
  /// Time-sorted.
  std::vector<geometry::EgoObservation> keyframes;
  /// Reference sentinel for egocentric questions: the wearer.
  bool is_camera = false;

  static ObjectEntry camera();
  friend bool operator==(const ObjectEntry&, const ObjectEntry&) = default;
};

struct SnapshotDescriptor {
  std::string event;
  double start = 0.0;
  double end = 0.0;
  Mode mode = Mode::kEgocentric;
  ObjectEntry target;
  std::optional<ObjectEntry> reference;
  std::optional<ObjectEntry> facing;

  /// Throws ParseError on start >= end or missing allocentric objects.
  void validate() const;
};

bool operator==(const SnapshotDescriptor& a, const SnapshotDescriptor& b);

/// "m:ss", "m:ss.s" or a bare number of seconds. Throws ParseError (with
/// `field`) on malformed input or seconds >= 60.
double parse_time(std::string_view text, const std::string& field);
/// Inverse of parse_time: "m:ss[.fff]" when that reads back exactly, else the
/// shortest decimal seconds.
std::string format_time(double seconds);

/// Accepts either prompt schema (stand_by_object / facing_direction without
/// keyframes, or reference_object / facing_object with key_frames), tolerant
/// of code fences, comments and unit suffixes. Unknown fields and keyframe
/// directions outside +/-90 are logged and, when `warnings` is given,
/// appended there.
SnapshotDescriptor parse_snapshot(std::string_view text, std::vector<std::string>* warnings = nullptr);
SnapshotDescriptor read_snapshot_file(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// Keyframed schema; parse_snapshot(serialize_snapshot(d)) == d.
nlohmann::json to_json(const SnapshotDescriptor& sd);
std::string serialize_snapshot(const SnapshotDescriptor& sd);

// --- segmentation tracks ----------------------------------------------------

struct SegObservation {
  double t = 0.0;
  double theta = 0.0;
  double r = 1.0;
  double confidence = 1.0;

  friend bool operator==(const SegObservation&, const SegObservation&) = default;
};

struct SegTrackFile {
  Role role = Role::kTarget;
  std::vector<SegObservation> observations;
  /// Number of uniformly sampled frames the track came from; informational.
  int frame_count = 128;
};

using SegTracks = std::map<Role, SegTrackFile>;

/// Pinhole azimuth of a mask centroid: atan(((cx - W/2) / (W/2)) tan(hfov/2)).
geometry::EgoObservation centroid_to_observation(double cx, double image_width, double hfov_deg,
                                                 double depth, double t);

struct SegThresholds {
  double target = 0.5;
  double static_object = 0.6;
};

/// Keeps observations at or above the role's confidence threshold, in order.
std::vector<SegObservation> filter_seg_confidence(const std::vector<SegObservation>& observations, Role role,
                                                  const SegThresholds& thresholds = {});

/// CSV records `role, t, theta_deg, r_m, confidence`; a header line, blank
/// lines and '#' comments are skipped, and `# frames: N` sets frame_count.
/// Throws ParseError on malformed rows or decreasing timestamps within a role.
SegTracks read_seg_tracks(std::istream& in);
SegTracks read_seg_tracks_file(const std::string& path);
void write_seg_tracks(std::ostream& out, const SegTracks& tracks);

// --- audio tracks -----------------------------------------------------------

struct AudioObservation {
  double t = 0.0;
  double theta = 0.0;
  /// Absent when uncalibrated or when the CDR is undefined for the frame.
  std::optional<double> r;
  double cdr = 0.0;
  double peak_power = 0.0;

  friend bool operator==(const AudioObservation&, const AudioObservation&) = default;
};

struct AudioTrackConfig {
  doa::DoaConfig doa;
  range::CdrConfig cdr;
  /// Hop between DoA segments.
  double hop = 0.25;
  /// CDR window centered on each DoA segment, shifted to stay inside the clip.
  double range_window = 0.25;
  int jobs = 1;
};

/// CDR over a window of `config.range_window` centered at `t`.
range::CdrFrame cdr_at(const audio::AudioClip& clip, const audio::MicArray& array, double t,
                       const AudioTrackConfig& config = {});

/// srp_phat per hop, forward band removed, the CDR around each estimate, and
/// range from the CDR when a calibration is given. Silent segments leave
/// gaps; an undefined CDR is stored as 0.
std::vector<AudioObservation> build_audio_track(const audio::AudioClip& clip, const audio::MicArray& array,
                                                const std::optional<range::RangeCalibration>& calib,
                                                const AudioTrackConfig& config = {});

/// Fills `r` from each observation's stored CDR.
std::vector<AudioObservation> apply_calibration(std::vector<AudioObservation> track,
                                                const range::RangeCalibration& calib);

/// Pairs visual distances with the CDR at the same instants. Observations
/// whose window is silent are skipped.
std::vector<range::CalibrationSample> calibration_samples(const audio::AudioClip& clip,
                                                          const audio::MicArray& array,
                                                          const std::vector<geometry::EgoObservation>& visual,
                                                          const AudioTrackConfig& config = {});

// --- bundle -----------------------------------------------------------------

struct TrackBundle {
  SnapshotDescriptor sd;
  SegTracks seg;
  std::vector<AudioObservation> audio;

  /// Throws ModeError when an egocentric bundle carries reference or facing
  /// segmentation tracks.
  void validate() const;
};

nlohmann::json to_json(const TrackBundle& bundle);
TrackBundle bundle_from_json(const nlohmann::json& j);

nlohmann::json to_json(const std::vector<AudioObservation>& track);
std::vector<AudioObservation> audio_track_from_json(const nlohmann::json& j);

}  // namespace savvy::tracks
