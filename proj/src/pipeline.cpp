#include "savvy/pipeline.hpp"

#include "savvy/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace savvy::pipeline {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& path) {
  if (!j.is_object()) throw ParseError(path.empty() ? "config" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ParseError(path.empty() ? key : path + "." + key, "unknown config key");
    }
  }
}

template <typename T>
void read(const json& j, std::string_view key, T& out, const std::string& path) {
  const std::string k(key);
  if (!j.contains(k)) return;
  try {
    out = j.at(k).get<T>();
  } catch (const json::exception&) {
    throw ParseError(path.empty() ? k : path + "." + k, "wrong type");
  }
}

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

json window_json(doa::Window w) { return w == doa::Window::kHann ? "hann" : "rectangular"; }

}  // namespace

void PipelineConfig::validate() const {
  audio.doa.grid.validate();
  if (!(audio.doa.segment_seconds > 0.0)) throw Error("config: doa.segment_seconds must be positive");
  if (!(audio.hop > 0.0)) throw Error("config: audio_track.hop must be positive");
  if (!(audio.range_window > 0.0)) throw Error("config: audio_track.range_window must be positive");
  if (!(calibration.eps_fraction > 0.0)) throw Error("config: calibration.eps_fraction must be positive");
  if (calibration.eps && !(*calibration.eps > 0.0)) throw Error("config: calibration.eps must be positive");
  if (calibration.min_pts < 1) throw Error("config: calibration.min_pts must be at least 1");
  fusion.frustum.validate();
  fusion.kalman.validate();
  if (!(fusion.static_eps > 0.0)) throw Error("config: fusion.static_eps must be positive");
  if (!(fusion.default_audio_range > 0.0)) throw Error("config: fusion.default_audio_range must be positive");
  if (fusion.coverage_tolerance < 0.0) throw Error("config: fusion.coverage_tolerance must be non-negative");
}

json to_json(const PipelineConfig& c) {
  const auto& d = c.audio.doa;
  const auto& w = c.audio.cdr.welch;
  const auto& f = c.fusion;
  return {
      {"doa",
       {{"segment_seconds", d.segment_seconds},
        {"grid", {{"start", d.grid.start}, {"stop", d.grid.stop}, {"step", d.grid.step}}},
        {"window", window_json(d.window)},
        {"phat_floor", d.phat_floor},
        {"energy_floor", d.energy_floor},
        {"forward_band", d.forward_band}}},
      {"audio_track", {{"hop", c.audio.hop}, {"range_window", c.audio.range_window}}},
      {"cdr",
       {{"welch",
         {{"segment_length", w.segment_length},
          {"overlap", w.overlap},
          {"band_low", w.band_low},
          {"band_high", w.band_high}}},
        {"max_cdr", c.audio.cdr.max_cdr},
        {"energy_floor", c.audio.cdr.energy_floor}}},
      {"calibration",
       {{"eps_fraction", c.calibration.eps_fraction},
        {"eps", c.calibration.eps ? json(*c.calibration.eps) : json(nullptr)},
        {"min_pts", c.calibration.min_pts}}},
      {"fusion",
       {{"frustum",
         {{"range_margin", f.frustum.range_margin},
          {"angular_span", f.frustum.angular_span},
          {"angular_bins", f.frustum.angular_bins},
          {"range_bins", f.frustum.range_bins},
          {"behind_threshold", f.frustum.behind_threshold}}},
        {"kalman",
         {{"process_noise", f.kalman.process_noise},
          {"measurement_noise", f.kalman.measurement_noise},
          {"output_period", f.kalman.output_period},
          {"initial_velocity_variance", f.kalman.initial_velocity_variance}}},
        {"sd_gate_radius", f.sd_gate_radius},
        {"sd_gate_window", f.sd_gate_window},
        {"coverage_tolerance", f.coverage_tolerance},
        {"default_audio_range", f.default_audio_range},
        {"static_eps", f.static_eps},
        {"static_min_pts", f.static_min_pts},
        {"seg_thresholds", {{"target", f.seg_thresholds.target}, {"static_object", f.seg_thresholds.static_object}}}}},
      {"qa", {{"eval_time", c.qa.eval_time == qa::EvalTime::kStart ? "start" : "midpoint"}}},
  };
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  check_keys(j, {"doa", "audio_track", "cdr", "calibration", "fusion", "qa"}, "");
  if (j.contains("doa")) {
    const auto& d = j.at("doa");
    const std::string p = "doa";
    check_keys(d, {"segment_seconds", "grid", "window", "phat_floor", "energy_floor", "forward_band"}, p);
    read(d, "segment_seconds", c.audio.doa.segment_seconds, p);
    read(d, "phat_floor", c.audio.doa.phat_floor, p);
    read(d, "energy_floor", c.audio.doa.energy_floor, p);
    read(d, "forward_band", c.audio.doa.forward_band, p);
    if (d.contains("grid")) {
      const auto& g = d.at("grid");
      const std::string gp = join(p, "grid");
      check_keys(g, {"start", "stop", "step"}, gp);
      read(g, "start", c.audio.doa.grid.start, gp);
      read(g, "stop", c.audio.doa.grid.stop, gp);
      read(g, "step", c.audio.doa.grid.step, gp);
    }
    if (d.contains("window")) {
      std::string w;
      read(d, "window", w, p);
      if (w == "hann") {
        c.audio.doa.window = doa::Window::kHann;
      } else if (w == "rectangular") {
        c.audio.doa.window = doa::Window::kRectangular;
      } else {
        throw ParseError("doa.window", "expected \"rectangular\" or \"hann\"");
      }
    }
  }
  if (j.contains("audio_track")) {
    const auto& a = j.at("audio_track");
    check_keys(a, {"hop", "range_window"}, "audio_track");
    read(a, "hop", c.audio.hop, "audio_track");
    read(a, "range_window", c.audio.range_window, "audio_track");
  }
  if (j.contains("cdr")) {
    const auto& r = j.at("cdr");
    check_keys(r, {"welch", "max_cdr", "energy_floor"}, "cdr");
    read(r, "max_cdr", c.audio.cdr.max_cdr, "cdr");
    read(r, "energy_floor", c.audio.cdr.energy_floor, "cdr");
    if (r.contains("welch")) {
      const auto& w = r.at("welch");
      check_keys(w, {"segment_length", "overlap", "band_low", "band_high"}, "cdr.welch");
      read(w, "segment_length", c.audio.cdr.welch.segment_length, "cdr.welch");
      read(w, "overlap", c.audio.cdr.welch.overlap, "cdr.welch");
      read(w, "band_low", c.audio.cdr.welch.band_low, "cdr.welch");
      read(w, "band_high", c.audio.cdr.welch.band_high, "cdr.welch");
    }
  }
  if (j.contains("calibration")) {
    const auto& k = j.at("calibration");
    check_keys(k, {"eps_fraction", "eps", "min_pts"}, "calibration");
    read(k, "eps_fraction", c.calibration.eps_fraction, "calibration");
    read(k, "min_pts", c.calibration.min_pts, "calibration");
    if (k.contains("eps") && !k.at("eps").is_null()) {
      double eps = 0.0;
      read(k, "eps", eps, "calibration");
      c.calibration.eps = eps;
    }
  }
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    const std::string p = "fusion";
    check_keys(f, {"frustum", "kalman", "sd_gate_radius", "sd_gate_window", "coverage_tolerance", "default_audio_range",
                   "static_eps", "static_min_pts", "seg_thresholds"},
               p);
    read(f, "sd_gate_radius", c.fusion.sd_gate_radius, p);
    read(f, "sd_gate_window", c.fusion.sd_gate_window, p);
    read(f, "coverage_tolerance", c.fusion.coverage_tolerance, p);
    read(f, "default_audio_range", c.fusion.default_audio_range, p);
    read(f, "static_eps", c.fusion.static_eps, p);
    read(f, "static_min_pts", c.fusion.static_min_pts, p);
    if (f.contains("frustum")) {
      const auto& fr = f.at("frustum");
      const std::string fp = "fusion.frustum";
      check_keys(fr, {"range_margin", "angular_span", "angular_bins", "range_bins", "behind_threshold"}, fp);
      read(fr, "range_margin", c.fusion.frustum.range_margin, fp);
      read(fr, "angular_span", c.fusion.frustum.angular_span, fp);
      read(fr, "angular_bins", c.fusion.frustum.angular_bins, fp);
      read(fr, "range_bins", c.fusion.frustum.range_bins, fp);
      read(fr, "behind_threshold", c.fusion.frustum.behind_threshold, fp);
    }
    if (f.contains("kalman")) {
      const auto& kf = f.at("kalman");
      const std::string kp = "fusion.kalman";
      check_keys(kf, {"process_noise", "measurement_noise", "output_period", "initial_velocity_variance"}, kp);
      read(kf, "process_noise", c.fusion.kalman.process_noise, kp);
      read(kf, "measurement_noise", c.fusion.kalman.measurement_noise, kp);
      read(kf, "output_period", c.fusion.kalman.output_period, kp);
      read(kf, "initial_velocity_variance", c.fusion.kalman.initial_velocity_variance, kp);
    }
    if (f.contains("seg_thresholds")) {
      const auto& s = f.at("seg_thresholds");
      check_keys(s, {"target", "static_object"}, "fusion.seg_thresholds");
      read(s, "target", c.fusion.seg_thresholds.target, "fusion.seg_thresholds");
      read(s, "static_object", c.fusion.seg_thresholds.static_object, "fusion.seg_thresholds");
    }
  }
  if (j.contains("qa")) {
    const auto& q = j.at("qa");
    check_keys(q, {"eval_time"}, "qa");
    if (q.contains("eval_time")) {
      std::string e;
      read(q, "eval_time", e, "qa");
      if (e == "midpoint") {
        c.qa.eval_time = qa::EvalTime::kMidpoint;
      } else if (e == "start") {
        c.qa.eval_time = qa::EvalTime::kStart;
      } else {
        throw ParseError("qa.eval_time", "expected \"midpoint\" or \"start\"");
      }
    }
  }
  c.validate();
  return c;
}

PipelineConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ParseError(path, e.what());
  }
  return config_from_json(j);
}

SourceSet SourceSet::parse(std::string_view text) {
  SourceSet s{false, false, false};
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char ch) { return std::isspace(ch); }), item.end());
    if (item == "all") {
      s = {};
    } else if (item == "seg") {
      s.seg = true;
    } else if (item == "sd") {
      s.sd = true;
    } else if (item == "audio") {
      s.audio = true;
    } else {
      throw ParseError("sources", "unknown track source \"" + item + "\" (expected seg, sd, audio or all)");
    }
  }
  if (!s.any()) throw ParseError("sources", "no track source selected");
  return s;
}

std::string SourceSet::to_string() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(seg, "seg");
  add(sd, "sd");
  add(audio, "audio");
  return out;
}

tracks::TrackBundle select_sources(tracks::TrackBundle bundle, const SourceSet& sources) {
  if (!sources.sd) {
    bundle.sd.target.keyframes.clear();
    if (bundle.sd.reference) bundle.sd.reference->keyframes.clear();
    if (bundle.sd.facing) bundle.sd.facing->keyframes.clear();
  }
  if (!sources.seg) bundle.seg.clear();
  if (!sources.audio) bundle.audio.clear();
  return bundle;
}

std::vector<geometry::EgoObservation> visual_target_observations(
    const std::map<std::string, tracks::SegTracks>& segmentation, const tracks::SegThresholds& thresholds) {
  std::vector<geometry::EgoObservation> out;
  std::set<double> seen;
  for (const auto& [id, seg] : segmentation) {
    const auto it = seg.find(tracks::Role::kTarget);
    if (it == seg.end()) continue;
    for (const auto& o : tracks::filter_seg_confidence(it->second.observations, tracks::Role::kTarget, thresholds)) {
      // Overlapping questions can share frames.
      if (seen.insert(o.t).second) out.push_back(geometry::EgoObservation::make(o.t, o.theta, o.r));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

range::RangeCalibration calibrate_from_segmentation(const audio::AudioClip& clip, const audio::MicArray& array,
                                                    const std::map<std::string, tracks::SegTracks>& segmentation,
                                                    const PipelineConfig& config) {
  const auto visual = visual_target_observations(segmentation, config.fusion.seg_thresholds);
  const auto samples = tracks::calibration_samples(clip, array, visual, config.audio);
  return range::calibrate_k(samples, config.calibration);
}

namespace {

QuestionResult finish(QuestionResult out, const qa::Question& question) {
  if (!out.failure.empty()) {
    spdlog::warn("question {}: no answer ({})", question.id, out.failure);
    out.answer = {};
    out.answer.id = question.id;
    if (out.map) out.answer.span = out.map->span;
  }
  return out;
}

template <typename Fn>
void capture_failure(QuestionResult& out, Fn&& fn) {
  try {
    fn();
  } catch (const EmptyTrackError& e) {
    out.failure = e.what();
  } catch (const UnanswerableError& e) {
    out.failure = e.what();
  } catch (const ClusterError& e) {
    out.failure = e.what();
  } catch (const ModeError& e) {
    out.failure = e.what();
  } catch (const GeometryError& e) {
    out.failure = e.what();
  }
}

}  // namespace

QuestionResult answer_question(const qa::Question& question, const tracks::TrackBundle& bundle,
                               const geometry::CameraTrajectory& traj, const PipelineConfig& config) {
  QuestionResult out;
  out.answer.id = question.id;
  capture_failure(out, [&] {
    out.map = fusion::build_global_map(bundle, traj, config.fusion);
    out.answer = qa::resolve(*out.map, question, traj, config.qa);
  });
  return finish(std::move(out), question);
}

QuestionResult answer_from_map(const qa::Question& question, std::optional<fusion::GlobalMap> map,
                               const geometry::CameraTrajectory& traj, const PipelineConfig& config) {
  QuestionResult out;
  out.answer.id = question.id;
  out.map = std::move(map);
  if (!out.map) {
    out.failure = "no map";
  } else {
    capture_failure(out, [&] { out.answer = qa::resolve(*out.map, question, traj, config.qa); });
  }
  return finish(std::move(out), question);
}

}  // namespace savvy::pipeline
