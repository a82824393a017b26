#include "savvy/tracks.hpp"

#include "savvy/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace savvy::tracks {

using geometry::EgoObservation;
using nlohmann::json;

std::string_view to_string(Mode m) { return m == Mode::kEgocentric ? "egocentric" : "allocentric"; }

std::string_view to_string(Role r) {
  switch (r) {
    case Role::kTarget: return "target";
    case Role::kReference: return "reference";
    case Role::kFacing: return "facing";
  }
  return "target";
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void warn(std::vector<std::string>* sink, const std::string& msg) {
  spdlog::warn("snapshot descriptor: {}", msg);
  if (sink) sink->push_back(msg);
}

// Leading number of strings like "3.2 m", "-30°", "about 2 meters".
double number_in(const json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) throw ParseError(field, "expected a number");
  const auto s = v.get<std::string>();
  const auto pos = s.find_first_of("+-.0123456789");
  if (pos == std::string::npos) throw ParseError(field, "no number in \"" + s + "\"");
  const char* begin = s.c_str() + pos;
  char* end = nullptr;
  const double x = std::strtod(begin, &end);
  if (end == begin || !std::isfinite(x)) throw ParseError(field, "no number in \"" + s + "\"");
  return x;
}

bool bool_in(const json& v, const std::string& field) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = lower(trim(v.get<std::string>()));
    if (s == "true" || s == "yes") return true;
    if (s == "false" || s == "no") return false;
  }
  throw ParseError(field, "expected true or false");
}

std::string string_in(const json& obj, const char* key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return {};
  const auto& v = obj.at(key);
  return v.is_string() ? v.get<std::string>() : v.dump();
}

double time_in(const json& v, const std::string& field) {
  if (v.is_number()) {
    const double t = v.get<double>();
    if (!(t >= 0.0) || !std::isfinite(t)) throw ParseError(field, "time must be non-negative");
    return t;
  }
  if (!v.is_string()) throw ParseError(field, "expected \"minutes:seconds\"");
  return parse_time(v.get<std::string>(), field);
}

// Model output often wraps JSON in prose or ``` fences.
std::string_view json_body(std::string_view text) {
  const auto open = text.find('{');
  const auto close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw ParseError("snapshot", "no JSON object found");
  }
  return text.substr(open, close - open + 1);
}

bool is_camera_name(const std::string& name) {
  const auto n = lower(trim(name));
  return n == "camera" || n == "the camera" || n == "camera wearer";
}

const std::set<std::string> kTopKeys = {"event",          "start_time",      "end_time",       "mode",
                                        "sounding_object", "reference_object", "stand_by_object",
                                        "facing_object",   "facing_direction"};
const std::set<std::string> kObjectKeys = {"object_name", "description", "is_static", "key_frames"};

std::vector<EgoObservation> keyframes_in(const json& kf, const std::string& field,
                                         std::vector<std::string>* warnings) {
  std::vector<EgoObservation> out;
  auto add = [&](double t, const json& rec, const std::string& path) {
    if (!rec.is_object()) throw ParseError(path, "expected {\"distance\", \"direction\"}");
    if (!rec.contains("distance")) throw ParseError(path + ".distance", "missing");
    if (!rec.contains("direction")) throw ParseError(path + ".direction", "missing");
    const double r = number_in(rec.at("distance"), path + ".distance");
    const double theta = number_in(rec.at("direction"), path + ".direction");
    if (!(r > 0.0)) throw ParseError(path + ".distance", "must be positive");
    if (std::abs(theta) > 90.0) warn(warnings, path + ".direction " + std::to_string(theta) + " outside [-90, 90]");
    out.push_back(EgoObservation::make(t, theta, r));
  };
  if (kf.is_null()) return out;
  if (kf.is_object()) {
    for (const auto& [key, rec] : kf.items()) {
      const std::string path = field + "." + key;
      add(parse_time(key, path), rec, path);
    }
  } else if (kf.is_array()) {
    for (std::size_t i = 0; i < kf.size(); ++i) {
      const std::string path = field + "." + std::to_string(i);
      const auto& rec = kf[i];
      if (!rec.is_object() || !rec.contains("time")) throw ParseError(path, "expected an object with \"time\"");
      add(time_in(rec.at("time"), path + ".time"), rec, path);
    }
  } else {
    throw ParseError(field, "expected an object keyed by \"minutes:seconds\"");
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

ObjectEntry object_in(const json& obj, const std::string& field, bool default_static,
                      std::vector<std::string>* warnings) {
  if (!obj.is_object()) throw ParseError(field, "expected an object");
  for (const auto& [key, v] : obj.items()) {
    if (!kObjectKeys.count(key)) warn(warnings, "ignoring " + field + "." + key);
  }
  ObjectEntry e;
  e.name = string_in(obj, "object_name");
  e.description = string_in(obj, "description");
  e.is_static = obj.contains("is_static") ? bool_in(obj.at("is_static"), field + ".is_static") : default_static;
  if (obj.contains("key_frames")) e.keyframes = keyframes_in(obj.at("key_frames"), field + ".key_frames", warnings);
  return e;
}

bool is_empty_object(const json& obj) {
  if (obj.is_null()) return true;
  if (!obj.is_object()) return false;
  return string_in(obj, "object_name").empty() && string_in(obj, "description").empty() &&
         (!obj.contains("key_frames") || obj.at("key_frames").empty());
}

SnapshotDescriptor snapshot_from_json(const json& j, std::vector<std::string>* warnings) {
  if (!j.is_object()) throw ParseError("snapshot", "expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (!kTopKeys.count(key)) warn(warnings, "ignoring field " + key);
  }
  SnapshotDescriptor sd;
  sd.event = string_in(j, "event");
  if (!j.contains("start_time")) throw ParseError("start_time", "missing");
  if (!j.contains("end_time")) throw ParseError("end_time", "missing");
  sd.start = time_in(j.at("start_time"), "start_time");
  sd.end = time_in(j.at("end_time"), "end_time");
  if (!j.contains("mode") || !j.at("mode").is_string()) throw ParseError("mode", "missing");
  try {
    sd.mode = mode_from_string(j.at("mode").get<std::string>());
  } catch (const ParseError& e) {
    throw ParseError("mode", e.what());
  }
  if (!j.contains("sounding_object")) throw ParseError("sounding_object", "missing");
  sd.target = object_in(j.at("sounding_object"), "sounding_object", false, warnings);

  const char* ref_key = j.contains("reference_object") ? "reference_object" : "stand_by_object";
  const char* face_key = j.contains("facing_object") ? "facing_object" : "facing_direction";
  if (j.contains(ref_key) && !is_empty_object(j.at(ref_key))) {
    const auto& r = j.at(ref_key);
    if (r.is_object() && is_camera_name(string_in(r, "object_name"))) {
      sd.reference = ObjectEntry::camera();
    } else {
      sd.reference = object_in(r, ref_key, true, warnings);
    }
  }
  if (j.contains(face_key) && !is_empty_object(j.at(face_key))) {
    const auto& f = j.at(face_key);
    if (!(f.is_object() && is_camera_name(string_in(f, "object_name")))) {
      sd.facing = object_in(f, face_key, true, warnings);
    }
  }
  if (sd.mode == Mode::kEgocentric && !sd.reference) sd.reference = ObjectEntry::camera();
  if (sd.mode == Mode::kAllocentric && sd.reference && sd.reference->is_camera) {
    throw ParseError(ref_key, "allocentric mode needs a reference object other than the camera");
  }
  sd.validate();
  return sd;
}

json object_json(const ObjectEntry& e) {
  json o;
  if (!e.name.empty() || e.is_camera) o["object_name"] = e.is_camera ? "camera" : e.name;
  o["description"] = e.description;
  o["is_static"] = e.is_static;
  json kf = json::object();
  for (const auto& k : e.keyframes) kf[format_time(k.t)] = {{"distance", k.r}, {"direction", k.theta}};
  o["key_frames"] = kf;
  return o;
}

}  // namespace

Mode mode_from_string(std::string_view s) {
  const auto m = lower(trim(s));
  if (m == "egocentric") return Mode::kEgocentric;
  if (m == "allocentric") return Mode::kAllocentric;
  throw ParseError("unknown mode \"" + std::string(s) + "\"");
}

Role role_from_string(std::string_view s) {
  const auto r = lower(trim(s));
  if (r == "target") return Role::kTarget;
  if (r == "reference") return Role::kReference;
  if (r == "facing") return Role::kFacing;
  throw ParseError("unknown role \"" + std::string(s) + "\"");
}

ObjectEntry ObjectEntry::camera() {
  ObjectEntry e;
  e.name = "camera";
  e.is_static = false;
  e.is_camera = true;
  return e;
}

void SnapshotDescriptor::validate() const {
  if (!(start < end)) throw ParseError("start_time", "start must precede end");
  if (mode == Mode::kAllocentric) {
    if (!reference) throw ParseError("reference_object", "allocentric mode needs a reference object");
    if (!facing) throw ParseError("facing_object", "allocentric mode needs a facing object");
  }
}

bool operator==(const SnapshotDescriptor& a, const SnapshotDescriptor& b) {
  return a.event == b.event && a.start == b.start && a.end == b.end && a.mode == b.mode && a.target == b.target &&
         a.reference == b.reference && a.facing == b.facing;
}

double parse_time(std::string_view text, const std::string& field) {
  const auto s = trim(text);
  auto decimal = [&](const std::string& part) {
    if (part.empty() || part.find_first_not_of("0123456789.") != std::string::npos ||
        std::count(part.begin(), part.end(), '.') > 1 || part == ".") {
      throw ParseError(field, "malformed time \"" + s + "\"");
    }
    return std::strtod(part.c_str(), nullptr);
  };
  const auto colon = s.find(':');
  if (colon == std::string::npos) return decimal(s);
  const auto minutes = trim(s.substr(0, colon));
  const auto seconds = trim(s.substr(colon + 1));
  if (minutes.empty() || minutes.find_first_not_of("0123456789") != std::string::npos) {
    throw ParseError(field, "malformed minutes in \"" + s + "\"");
  }
  const double sec = decimal(seconds);
  if (sec >= 60.0) throw ParseError(field, "seconds must be below 60 in \"" + s + "\"");
  return std::strtod(minutes.c_str(), nullptr) * 60.0 + sec;
}

std::string format_time(double seconds) {
  char buf[64];
  if (seconds >= 0.0 && seconds < 1e7) {
    const double minutes = std::floor(seconds / 60.0);
    const double rem = seconds - minutes * 60.0;
    for (int prec = 0; prec <= 17; ++prec) {
      std::snprintf(buf, sizeof buf, "%.0f:%0*.*f", minutes, prec == 0 ? 2 : prec + 3, prec, rem);
      try {
        if (parse_time(buf, "") == seconds) return buf;
      } catch (const ParseError&) {
        // e.g. rem rounds up to 60 at low precision
      }
    }
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, seconds);
    if (std::strtod(buf, nullptr) == seconds) break;
  }
  return buf;
}

SnapshotDescriptor parse_snapshot(std::string_view text, std::vector<std::string>* warnings) {
  json j;
  try {
    j = json::parse(json_body(text), nullptr, true, true);
  } catch (const json::exception& e) {
    throw ParseError("snapshot", e.what());
  }
  try {
    return snapshot_from_json(j, warnings);
  } catch (const GeometryError& e) {
    throw ParseError("key_frames", e.what());
  }
}

SnapshotDescriptor read_snapshot_file(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open snapshot descriptor: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_snapshot(ss.str(), warnings);
}

json to_json(const SnapshotDescriptor& sd) {
  json j;
  j["event"] = sd.event;
  j["start_time"] = format_time(sd.start);
  j["end_time"] = format_time(sd.end);
  j["mode"] = std::string(to_string(sd.mode));
  j["sounding_object"] = object_json(sd.target);
  if (sd.reference) j["reference_object"] = object_json(*sd.reference);
  if (sd.facing) j["facing_object"] = object_json(*sd.facing);
  return j;
}

std::string serialize_snapshot(const SnapshotDescriptor& sd) { return to_json(sd).dump(2); }

// --- segmentation -------------------------------------------------------------

EgoObservation centroid_to_observation(double cx, double image_width, double hfov_deg, double depth, double t) {
  if (!(image_width > 0.0) || cx < 0.0 || cx > image_width) throw Error("centroid outside the image");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0)) throw Error("horizontal field of view must be in (0, 180)");
  const double half = 0.5 * image_width;
  const double theta = std::atan((cx - half) / half * std::tan(geometry::deg2rad(0.5 * hfov_deg)));
  return EgoObservation::make(t, geometry::rad2deg(theta), depth);
}

std::vector<SegObservation> filter_seg_confidence(const std::vector<SegObservation>& observations, Role role,
                                                  const SegThresholds& thresholds) {
  const double thr = role == Role::kTarget ? thresholds.target : thresholds.static_object;
  std::vector<SegObservation> out;
  std::copy_if(observations.begin(), observations.end(), std::back_inserter(out),
               [&](const SegObservation& o) { return o.confidence >= thr; });
  return out;
}

SegTracks read_seg_tracks(std::istream& in) {
  SegTracks tracks;
  int frames = 128;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto s = trim(line);
    if (s.empty()) continue;
    if (s[0] == '#') {
      const auto body = lower(trim(s.substr(1)));
      if (body.rfind("frames:", 0) == 0) frames = std::atoi(body.c_str() + 7);
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(trim(cell));
    const std::string where = "seg line " + std::to_string(lineno);
    if (!f.empty() && lower(f[0]) == "role") continue;
    if (f.size() != 5) throw ParseError(where, "expected role, t, theta_deg, r_m, confidence");
    Role role;
    try {
      role = role_from_string(f[0]);
    } catch (const ParseError& e) {
      throw ParseError(where, e.what());
    }
    double v[4];
    for (int k = 0; k < 4; ++k) {
      char* end = nullptr;
      v[k] = std::strtod(f[k + 1].c_str(), &end);
      if (end == f[k + 1].c_str() || *end != '\0' || !std::isfinite(v[k])) {
        throw ParseError(where, "bad number \"" + f[k + 1] + "\"");
      }
    }
    if (!(v[2] > 0.0)) throw ParseError(where, "range must be positive");
    if (v[3] < 0.0 || v[3] > 1.0) throw ParseError(where, "confidence must be in [0, 1]");
    auto& track = tracks[role];
    track.role = role;
    if (!track.observations.empty() && v[0] < track.observations.back().t) {
      throw ParseError(where, "timestamps must not decrease");
    }
    track.observations.push_back({v[0], geometry::normalize_deg(v[1]), v[2], v[3]});
  }
  for (auto& [role, t] : tracks) t.frame_count = frames;
  return tracks;
}

SegTracks read_seg_tracks_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open segmentation track file: " + path);
  try {
    return read_seg_tracks(in);
  } catch (const ParseError& e) {
    throw ParseError(path, e.what());
  }
}

void write_seg_tracks(std::ostream& out, const SegTracks& tracks) {
  out.precision(std::numeric_limits<double>::max_digits10);
  if (!tracks.empty()) out << "# frames: " << tracks.begin()->second.frame_count << '\n';
  out << "role, t, theta_deg, r_m, confidence\n";
  for (const auto& [role, track] : tracks) {
    for (const auto& o : track.observations) {
      out << to_string(role) << ", " << o.t << ", " << o.theta << ", " << o.r << ", " << o.confidence << '\n';
    }
  }
}

// --- audio --------------------------------------------------------------------

range::CdrFrame cdr_at(const audio::AudioClip& clip, const audio::MicArray& array, double t,
                       const AudioTrackConfig& config) {
  const double total = clip.duration();
  const double w = std::min(config.range_window, total);
  const double start = std::clamp(t - 0.5 * w, 0.0, total - w);
  auto f = range::estimate_cdr(clip, {start, w}, array, config.cdr);
  f.t = t;
  return f;
}

std::vector<AudioObservation> build_audio_track(const audio::AudioClip& clip, const audio::MicArray& array,
                                                const std::optional<range::RangeCalibration>& calib,
                                                const AudioTrackConfig& config) {
  clip.validate();
  auto doa = doa::discard_forward(doa::srp_phat_track(clip, array, config.doa, config.hop, config.jobs),
                                  config.doa.forward_band);
  std::vector<AudioObservation> out;
  out.reserve(doa.size());
  for (const auto& e : doa) {
    AudioObservation o;
    o.t = e.t;
    o.theta = e.phi_hat;
    o.peak_power = e.peak_power;
    try {
      o.cdr = cdr_at(clip, array, e.t, config).cdr;
      if (calib) o.r = range::distance_from_cdr(o.cdr, *calib);
    } catch (const UndefinedCdrError&) {
      o.cdr = 0.0;
    }
    out.push_back(o);
  }
  return out;
}

std::vector<AudioObservation> apply_calibration(std::vector<AudioObservation> track,
                                                const range::RangeCalibration& calib) {
  for (auto& o : track) o.r = range::distance_from_cdr(o.cdr, calib);
  return track;
}

std::vector<range::CalibrationSample> calibration_samples(const audio::AudioClip& clip,
                                                          const audio::MicArray& array,
                                                          const std::vector<EgoObservation>& visual,
                                                          const AudioTrackConfig& config) {
  std::vector<range::CalibrationSample> out;
  for (const auto& v : visual) {
    if (v.t < 0.0 || v.t > clip.duration()) continue;
    try {
      out.push_back({v.r, cdr_at(clip, array, v.t, config).cdr});
    } catch (const UndefinedCdrError&) {
    }
  }
  return out;
}

// --- bundle -------------------------------------------------------------------

void TrackBundle::validate() const {
  sd.validate();
  if (sd.mode == Mode::kEgocentric) {
    for (const auto& [role, t] : seg) {
      if (role != Role::kTarget && !t.observations.empty()) {
        throw ModeError("egocentric bundle carries a " + std::string(to_string(role)) + " segmentation track");
      }
    }
  }
}

json to_json(const std::vector<AudioObservation>& track) {
  json a = json::array();
  for (const auto& o : track) {
    json e{{"t", o.t}, {"theta", o.theta}, {"cdr", o.cdr}, {"peak_power", o.peak_power}};
    e["r"] = o.r ? json(*o.r) : json(nullptr);
    a.push_back(e);
  }
  return a;
}

std::vector<AudioObservation> audio_track_from_json(const json& j) {
  std::vector<AudioObservation> out;
  try {
    for (const auto& e : j) {
      AudioObservation o;
      o.t = e.at("t").get<double>();
      o.theta = e.at("theta").get<double>();
      if (e.contains("r") && !e.at("r").is_null()) o.r = e.at("r").get<double>();
      o.cdr = e.value("cdr", 0.0);
      o.peak_power = e.value("peak_power", 0.0);
      out.push_back(o);
    }
  } catch (const json::exception& e) {
    throw ParseError("audio", e.what());
  }
  return out;
}

json to_json(const TrackBundle& bundle) {
  json j;
  j["sd"] = to_json(bundle.sd);
  json seg = json::object();
  for (const auto& [role, t] : bundle.seg) {
    json obs = json::array();
    for (const auto& o : t.observations) obs.push_back({o.t, o.theta, o.r, o.confidence});
    seg[std::string(to_string(role))] = {{"frame_count", t.frame_count}, {"observations", obs}};
  }
  j["seg"] = seg;
  j["audio"] = to_json(bundle.audio);
  return j;
}

TrackBundle bundle_from_json(const json& j) {
  TrackBundle b;
  try {
    b.sd = snapshot_from_json(j.at("sd"), nullptr);
    const json seg = j.value("seg", json::object());
    for (const auto& [key, v] : seg.items()) {
      SegTrackFile t;
      t.role = role_from_string(key);
      t.frame_count = v.value("frame_count", 128);
      for (const auto& o : v.at("observations")) {
        t.observations.push_back({o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>(),
                                  o.at(3).get<double>()});
      }
      b.seg[t.role] = std::move(t);
    }
    b.audio = audio_track_from_json(j.value("audio", json::array()));
  } catch (const json::exception& e) {
    throw ParseError("bundle", e.what());
  }
  b.validate();
  return b;
}

}  // namespace savvy::tracks
