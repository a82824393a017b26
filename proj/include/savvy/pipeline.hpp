#pragma once

// Glue shared by the CLI and the end-to-end tests: configuration file,
// track-source ablations, range calibration from visual tracks, and
// per-question map building and answering.

#include "savvy/fusion.hpp"
#include "savvy/qa.hpp"
#include "savvy/range.hpp"
#include "savvy/tracks.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace savvy::pipeline {

struct PipelineConfig {
  tracks::AudioTrackConfig audio;
  range::KConfig calibration;
  fusion::FusionConfig fusion;
  qa::ResolveConfig qa;

  /// Throws Error on out-of-range values.
  void validate() const;
};

/// Every field with its current value.
nlohmann::json to_json(const PipelineConfig& config);
/// Starts from the defaults and applies the fields present. Unknown keys
/// throw ParseError naming the key path.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig read_config_file(const std::string& path);

/// Which egocentric track sources feed the global map.
struct SourceSet {
  bool seg = true;
  bool sd = true;
  bool audio = true;

  /// Comma-separated subset of seg, sd, audio; "all" for every source.
  static SourceSet parse(std::string_view text);
  std::string to_string() const;
  bool any() const noexcept { return seg || sd || audio; }
};

/// Drops the disabled sources. SD keyframes are cleared for every role while
/// the event span, mode and object identities stay.
tracks::TrackBundle select_sources(tracks::TrackBundle bundle, const SourceSet& sources);

/// Target segmentation observations at or above the target confidence
/// threshold, across all questions, time-sorted.
std::vector<geometry::EgoObservation> visual_target_observations(
    const std::map<std::string, tracks::SegTracks>& segmentation, const tracks::SegThresholds& thresholds = {});

/// Pairs the visual target distances with the recording's CDR and fits K.
range::RangeCalibration calibrate_from_segmentation(const audio::AudioClip& clip, const audio::MicArray& array,
                                                    const std::map<std::string, tracks::SegTracks>& segmentation,
                                                    const PipelineConfig& config = {});

struct QuestionResult {
  qa::Answer answer;
  std::optional<fusion::GlobalMap> map;
  /// Why no answer was produced, when none was.
  std::string failure;
};

/// Builds the question's map from its bundle and reads the answer. Missing
/// targets or anchors, mode mismatches and degenerate geometry leave the
/// answer empty and set `failure`; a batch run keeps going.
QuestionResult answer_question(const qa::Question& question, const tracks::TrackBundle& bundle,
                               const geometry::CameraTrajectory& traj, const PipelineConfig& config = {});

/// The same for an already built map; `map` may be absent.
QuestionResult answer_from_map(const qa::Question& question, std::optional<fusion::GlobalMap> map,
                               const geometry::CameraTrajectory& traj, const PipelineConfig& config = {});

}  // namespace savvy::pipeline
