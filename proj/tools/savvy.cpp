// savvy: batch front end for the spatial-audio QA pipeline.

#include "savvy/audio.hpp"
#include "savvy/digest.hpp"
#include "savvy/doa.hpp"
#include "savvy/errors.hpp"
#include "savvy/fusion.hpp"
#include "savvy/metrics.hpp"
#include "savvy/parallel.hpp"
#include "savvy/pipeline.hpp"
#include "savvy/providers.hpp"
#include "savvy/qa.hpp"
#include "savvy/simkit.hpp"
#include "savvy/tracks.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace savvy;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  int verbosity = 0;
  int jobs = 1;
};

// Collects what a run read and wrote; serialized as manifest.<command>.json.
class Run {
 public:
  Run(std::string command, const Globals& g) : command_(std::move(command)), g_(g) {
    if (!g.config_path.empty()) {
      config_ = pipeline::read_config_file(g.config_path);
      input(g.config_path);
    }
    config_.audio.jobs = g.jobs;
    fs::create_directories(g.out);
  }

  const pipeline::PipelineConfig& config() const { return config_; }
  const fs::path out() const { return fs::path(g_.out); }
  json& options() { return options_; }
  json& extra() { return extra_; }

  void input(const std::string& path) {
    if (fs::is_directory(path)) {
      for (const auto& e : fs::recursive_directory_iterator(path)) {
        if (e.is_regular_file()) inputs_[e.path().lexically_normal().generic_string()] = sha256_file(e.path().string());
      }
    } else {
      inputs_[fs::path(path).lexically_normal().generic_string()] = sha256_file(path);
    }
  }

  fs::path output_path(const fs::path& rel) {
    const fs::path p = out() / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    outputs_.insert(rel.generic_string());
    return p;
  }

  void write_text(const fs::path& rel, const std::string& text) {
    std::ofstream f(output_path(rel), std::ios::binary);
    f << text;
    if (!f) throw Error("cannot write " + (out() / rel).string());
  }

  void write_json(const fs::path& rel, const json& j) { write_text(rel, j.dump(2) + "\n"); }

  void note_output(const std::string& absolute) {
    outputs_.insert(fs::relative(absolute, out()).generic_string());
  }

  void finish(std::optional<std::uint64_t> seed) {
    json m;
    m["tool"] = std::string("savvy ") + kVersion;
    m["command"] = command_;
    m["seed"] = seed ? json(*seed) : json(nullptr);
    m["options"] = options_;
    m["config"] = pipeline::to_json(config_);
    json in = json::array();
    for (const auto& [p, d] : inputs_) in.push_back({{"path", p}, {"sha256", d}});
    m["inputs"] = in;
    json outj = json::array();
    for (const auto& p : outputs_) outj.push_back({{"path", p}, {"sha256", sha256_file((out() / p).string())}});
    m["outputs"] = outj;
    if (!extra_.is_null()) m["notes"] = extra_;
    std::ofstream f(out() / ("manifest." + command_ + ".json"), std::ios::binary);
    f << m.dump(2) << "\n";
    if (!f) throw Error("cannot write manifest");
  }

 private:
  std::string command_;
  Globals g_;
  pipeline::PipelineConfig config_;
  json options_ = json::object();
  json extra_;
  std::map<std::string, std::string> inputs_;
  std::set<std::string> outputs_;
};

std::string generic(const std::string& p) { return fs::path(p).lexically_normal().generic_string(); }

std::vector<std::size_t> parse_indices(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ParseError("mics", "expected comma-separated mic indices, got \"" + text + "\"");
    }
  }
  if (out.empty()) throw ParseError("mics", "no mic indices given");
  return out;
}

audio::MicArray load_array(Run& run, const std::string& path) {
  if (path.empty()) return audio::aria_array();
  run.input(path);
  return audio::read_mic_array_file(path);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path, e.what());
  }
}

// Files with `ext` directly under `dir`, sorted.
std::vector<fs::path> files_in(const std::string& dir, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// --- commands ----------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
};

void cmd_simulate(const Globals& g, const SimulateArgs& a) {
  Run run("simulate", g);
  simkit::Scenario s;
  if (a.scenario.empty()) {
    s = simkit::moving_speaker_scenario();
  } else {
    run.input(a.scenario);
    s = simkit::read_scenario_file(a.scenario);
  }
  if (g.seed) s.seed = *g.seed;
  run.options() = {{"scenario", a.scenario.empty() ? "builtin:moving_speaker" : generic(a.scenario)}};
  spdlog::info("simulating {} ({} s, seed {})", s.name, s.duration, s.seed);
  const auto w = simkit::simulate_walkthrough(s);
  for (const auto& p : simkit::write_walkthrough(w, s, run.out().string())) run.note_output(p);
  run.finish(s.seed);
}

struct DoaArgs {
  std::string audio;
  std::string mic_array;
  std::string mics;
  std::string calibration;
  std::string plot;
  double plot_time = 0.0;
  std::string truth;
};

void cmd_doa(const Globals& g, const DoaArgs& a) {
  Run run("doa", g);
  run.input(a.audio);
  auto clip = audio::read_wav(a.audio);
  auto array = load_array(run, a.mic_array);
  if (!a.mics.empty()) {
    const auto idx = parse_indices(a.mics);
    for (auto i : idx) {
      if (i >= array.size() || i >= clip.num_channels()) throw Error("mic index " + std::to_string(i) + " out of range");
    }
    clip = clip.select_channels(idx);
    array = array.subset(idx);
  }
  std::optional<range::RangeCalibration> calib;
  if (!a.calibration.empty()) {
    run.input(a.calibration);
    calib = range::calibration_from_json(read_json_file(a.calibration));
  }
  run.options() = {{"audio", generic(a.audio)},
                   {"mic_array", a.mic_array.empty() ? "builtin:aria" : generic(a.mic_array)},
                   {"mics", a.mics},
                   {"calibration", a.calibration.empty() ? json(nullptr) : json(generic(a.calibration))}};
  const auto track = tracks::build_audio_track(clip, array, calib, run.config().audio);
  spdlog::info("doa: {} observations", track.size());
  run.write_json("audio_track.json", tracks::to_json(track));

  if (!a.plot.empty()) {
    const auto& dc = run.config().audio.doa;
    const double start = std::clamp(a.plot_time - 0.5 * dc.segment_seconds, 0.0, clip.duration() - dc.segment_seconds);
    const auto est = doa::srp_phat(clip, {start, dc.segment_seconds}, array, dc);
    if (!est) throw Error("doa: segment at " + std::to_string(a.plot_time) + " s is silent, nothing to plot");
    std::optional<double> truth;
    if (!a.truth.empty()) {
      run.input(a.truth);
      truth = simkit::doa_truth_at(simkit::read_doa_truth(a.truth), est->t).phi;
    }
    doa::plot_power_curve(*est, dc.grid, run.output_path(a.plot).string(), truth);
    run.options()["plot"] = {{"file", generic(a.plot)}, {"time", a.plot_time}};
  }
  run.finish(g.seed);
}

struct CalibrateArgs {
  std::string audio;
  std::string mic_array;
  std::vector<std::string> seg;
};

void cmd_range_calibrate(const Globals& g, const CalibrateArgs& a) {
  Run run("range-calibrate", g);
  run.input(a.audio);
  const auto clip = audio::read_wav(a.audio);
  const auto array = load_array(run, a.mic_array);
  std::map<std::string, tracks::SegTracks> seg;
  json seg_opts = json::array();
  for (const auto& p : a.seg) {
    run.input(p);
    seg_opts.push_back(generic(p));
    const auto files = fs::is_directory(p) ? files_in(p, ".csv") : std::vector<fs::path>{fs::path(p)};
    for (const auto& f : files) seg[f.generic_string()] = tracks::read_seg_tracks_file(f.string());
  }
  run.options() = {{"audio", generic(a.audio)},
                   {"mic_array", a.mic_array.empty() ? "builtin:aria" : generic(a.mic_array)},
                   {"seg", seg_opts}};
  const auto calib = pipeline::calibrate_from_segmentation(clip, array, seg, run.config());
  spdlog::info("range: K = {} from {}/{} samples", calib.k, calib.inlier_count, calib.sample_count);
  run.write_json("calibration.json", range::to_json(calib));
  run.finish(g.seed);
}

struct ApplyArgs {
  std::string audio_track;
  std::string calibration;
};

void cmd_range_apply(const Globals& g, const ApplyArgs& a) {
  Run run("range-apply", g);
  run.input(a.audio_track);
  run.input(a.calibration);
  run.options() = {{"audio_track", generic(a.audio_track)}, {"calibration", generic(a.calibration)}};
  const auto track = tracks::audio_track_from_json(read_json_file(a.audio_track));
  const auto calib = range::calibration_from_json(read_json_file(a.calibration));
  run.write_json("audio_track_ranged.json", tracks::to_json(tracks::apply_calibration(track, calib)));
  run.finish(g.seed);
}

struct TrackArgs {
  std::string questions;
  std::string sd_dir;
  std::string seg_dir;
  std::string audio_track;
  std::string sources = "all";
  std::string provider = "replay";
  std::string endpoint;
  std::string prompt = "proprietary";
  std::string media;
  double media_duration = 0.0;
  std::string token_env;
  std::string cache_dir;
  int retries = 2;
  double timeout = 60.0;
};

void cmd_track(const Globals& g, const TrackArgs& a) {
  Run run("track", g);
  run.input(a.questions);
  const auto questions = qa::read_questions(a.questions);
  const auto sources = pipeline::SourceSet::parse(a.sources);

  providers::ProviderConfig pc;
  pc.mode = providers::mode_from_string(a.provider);
  pc.fixture_dir = a.sd_dir;
  pc.endpoint = a.endpoint;
  pc.prompt = providers::prompt_variant_from_string(a.prompt);
  pc.cache_dir = a.cache_dir;
  pc.retries = a.retries;
  pc.timeout = a.timeout;
  if (!a.token_env.empty()) {
    const char* token = std::getenv(a.token_env.c_str());
    if (!token) throw Error("environment variable " + a.token_env + " is not set");
    pc.bearer_token = token;
  }
  pc.validate();
  if (pc.mode == providers::Mode::kReplay) run.input(a.sd_dir);

  std::vector<tracks::AudioObservation> audio_track;
  if (!a.audio_track.empty()) {
    run.input(a.audio_track);
    audio_track = tracks::audio_track_from_json(read_json_file(a.audio_track));
  }
  if (!a.seg_dir.empty()) run.input(a.seg_dir);

  run.options() = {{"questions", generic(a.questions)},
                   {"sources", sources.to_string()},
                   {"provider", a.provider},
                   {"sd_dir", a.sd_dir.empty() ? json(nullptr) : json(generic(a.sd_dir))},
                   {"seg_dir", a.seg_dir.empty() ? json(nullptr) : json(generic(a.seg_dir))},
                   {"audio_track", a.audio_track.empty() ? json(nullptr) : json(generic(a.audio_track))}};
  if (pc.mode == providers::Mode::kHttp) {
    run.options()["endpoint"] = a.endpoint;
    run.options()["prompt"] = a.prompt;
    run.options()["media"] = a.media;
    run.options()["media_duration"] = a.media_duration;
  }

  const auto descriptors = providers::fetch_descriptors(questions, {a.media, a.media_duration}, pc, g.jobs);
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const auto& q = questions[i];
    tracks::TrackBundle b;
    b.sd = descriptors[i];
    if (!a.seg_dir.empty()) {
      const fs::path seg = fs::path(a.seg_dir) / (q.id + ".csv");
      if (fs::exists(seg)) {
        b.seg = tracks::read_seg_tracks_file(seg.string());
      } else {
        spdlog::warn("track: no segmentation track for {} ({})", q.id, seg.string());
      }
    }
    b.audio = audio_track;
    b = pipeline::select_sources(std::move(b), sources);
    b.validate();
    run.write_json(fs::path("bundles") / (q.id + ".json"), tracks::to_json(b));
  }
  run.finish(g.seed);
}

struct MapArgs {
  std::vector<std::string> bundles;
  std::string trajectory;
  bool plot = false;
  int plot_size = 640;
};

void cmd_map(const Globals& g, const MapArgs& a) {
  Run run("map", g);
  run.input(a.trajectory);
  const auto traj = geometry::read_trajectory_file(a.trajectory);
  std::vector<fs::path> files;
  json bundle_opts = json::array();
  for (const auto& b : a.bundles) {
    run.input(b);
    bundle_opts.push_back(generic(b));
    const auto found = fs::is_directory(b) ? files_in(b, ".json") : std::vector<fs::path>{fs::path(b)};
    files.insert(files.end(), found.begin(), found.end());
  }
  run.options() = {{"bundles", bundle_opts}, {"trajectory", generic(a.trajectory)}, {"plot", a.plot}};
  if (a.plot) run.options()["plot_size"] = a.plot_size;

  std::vector<std::optional<fusion::GlobalMap>> maps(files.size());
  std::vector<std::string> failures(files.size());
  parallel_for(files.size(), g.jobs, [&](std::size_t i) {
    const auto bundle = tracks::bundle_from_json(read_json_file(files[i].string()));
    try {
      maps[i] = fusion::build_global_map(bundle, traj, run.config().fusion);
    } catch (const EmptyTrackError& e) {
      failures[i] = e.what();
    } catch (const ModeError& e) {
      failures[i] = e.what();
    } catch (const ClusterError& e) {
      failures[i] = e.what();
    }
  });
  json failed = json::object();
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string id = files[i].stem().string();
    if (!maps[i]) {
      spdlog::warn("map {}: {}", id, failures[i]);
      failed[id] = failures[i];
      continue;
    }
    run.write_json(fs::path("maps") / (id + ".json"), fusion::to_json(*maps[i]));
    if (a.plot) {
      fusion::plot_global_map(*maps[i], traj, run.output_path(fs::path("maps") / (id + ".png")).string(), a.plot_size);
    }
  }
  if (files.size() == 1 && !maps[0]) throw Error("map: " + failures[0]);
  if (!failed.empty()) run.extra() = {{"failed", failed}};
  run.finish(g.seed);
}

struct AnswerArgs {
  std::string questions;
  std::string maps;
  std::string trajectory;
};

void cmd_answer(const Globals& g, const AnswerArgs& a) {
  Run run("answer", g);
  run.input(a.questions);
  run.input(a.maps);
  run.input(a.trajectory);
  run.options() = {{"questions", generic(a.questions)}, {"maps", generic(a.maps)}, {"trajectory", generic(a.trajectory)}};
  const auto questions = qa::read_questions(a.questions);
  const auto traj = geometry::read_trajectory_file(a.trajectory);
  std::vector<qa::Answer> answers(questions.size());
  std::vector<std::string> failures(questions.size());
  parallel_for(questions.size(), g.jobs, [&](std::size_t i) {
    const fs::path p = fs::path(a.maps) / (questions[i].id + ".json");
    std::optional<fusion::GlobalMap> map;
    if (fs::exists(p)) map = fusion::global_map_from_json(read_json_file(p.string()));
    auto r = pipeline::answer_from_map(questions[i], std::move(map), traj, run.config());
    answers[i] = std::move(r.answer);
    failures[i] = std::move(r.failure);
  });
  json failed = json::object();
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (!failures[i].empty()) failed[questions[i].id] = failures[i];
  }
  if (!failed.empty()) run.extra() = {{"unanswered", failed}};
  qa::write_answers(run.output_path("answers.jsonl").string(), answers);
  run.finish(g.seed);
}

struct EvalArgs {
  std::string questions;
  std::string answers;
  std::string gt;
  std::string method = "savvy";
  std::string doa_track;
  std::string gt_doa;
};

std::string doa_report_text(const metrics::DoaReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "DoA estimates: " << r.count << "\n"
     << "median error (deg): " << r.median_error << "\n"
     << "p95 error (deg): " << r.p95_error << "\n"
     << "mean error (deg): " << r.mean_error << "\n"
     << "l/r accuracy (%): " << 100.0 * r.lr_accuracy << "\n"
     << "f/b accuracy (%): " << 100.0 * r.fb_accuracy << "\n";
  return os.str();
}

void cmd_eval(const Globals& g, const EvalArgs& a) {
  const bool qa_eval = !a.answers.empty() || !a.gt.empty() || !a.questions.empty();
  const bool doa_eval = !a.doa_track.empty() || !a.gt_doa.empty();
  if (qa_eval && (a.answers.empty() || a.gt.empty() || a.questions.empty())) {
    throw CLI::ValidationError("eval", "--questions, --answers and --gt go together");
  }
  if (doa_eval && (a.doa_track.empty() || a.gt_doa.empty())) {
    throw CLI::ValidationError("eval", "--doa-track and --gt-doa go together");
  }
  if (!qa_eval && !doa_eval) throw CLI::ValidationError("eval", "nothing to evaluate: give QA files and/or DoA files");

  Run run("eval", g);
  metrics::MetricsConfig mc;
  if (qa_eval) {
    run.input(a.questions);
    run.input(a.answers);
    run.input(a.gt);
    run.options()["questions"] = generic(a.questions);
    run.options()["answers"] = generic(a.answers);
    run.options()["gt"] = generic(a.gt);
    run.options()["method"] = a.method;
    const auto questions = qa::read_questions(a.questions);
    const auto preds = qa::read_answers(a.answers);
    const auto gts = qa::read_answers(a.gt);
    const auto report = metrics::evaluate_run(questions, preds, gts, mc);
    auto j = metrics::to_json(report);

    std::map<std::string, fusion::Span> gt_spans;
    for (const auto& gt : gts) {
      if (gt.span) gt_spans[gt.id] = *gt.span;
    }
    std::vector<fusion::Span> ps, gs;
    for (const auto& p : preds) {
      const auto it = gt_spans.find(p.id);
      if (p.span && it != gt_spans.end() && p.span->start < p.span->end) {
        ps.push_back(*p.span);
        gs.push_back(it->second);
      }
    }
    if (!ps.empty()) {
      const auto tr = metrics::t_miou(ps, gs, mc);
      j["temporal"] = {{"count", ps.size()}, {"thresholds", tr.thresholds}, {"recall", tr.recall}, {"t_miou", tr.t_miou}};
    }
    run.write_text("report.txt", metrics::format_report(report, a.method));
    run.write_json("report.json", j);
    std::ostringstream items;
    for (const auto& item : metrics::item_log(report)) items << item.dump() << "\n";
    run.write_text("items.jsonl", items.str());
  }
  if (doa_eval) {
    run.input(a.doa_track);
    run.input(a.gt_doa);
    run.options()["doa_track"] = generic(a.doa_track);
    run.options()["gt_doa"] = generic(a.gt_doa);
    const auto track = tracks::audio_track_from_json(read_json_file(a.doa_track));
    const auto truth = simkit::read_doa_truth(a.gt_doa);
    std::vector<metrics::DoaSample> samples;
    for (const auto& o : track) samples.push_back({o.t, o.theta, simkit::doa_truth_at(truth, o.t).phi});
    const auto r = metrics::evaluate_doa(samples);
    run.write_json("doa_report.json", metrics::to_json(r));
    run.write_text("doa_report.txt", doa_report_text(r));
  }
  run.finish(g.seed);
}

void set_verbosity(int v) {
  auto logger = spdlog::stderr_logger_mt("savvy");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(v >= 2 ? spdlog::level::debug : v == 1 ? spdlog::level::info : spdlog::level::warn);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial audio-visual QA pipeline: DoA, ranging, track fusion, answering and scoring."};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "Pipeline config JSON (defaults for every missing field)")
      ->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_value, "Random seed (simulate: overrides the scenario seed)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("-v,--verbose", g.verbosity, "More log output (repeatable)");
  app.add_option("--jobs", g.jobs, "Worker threads; results do not depend on it")->check(CLI::PositiveNumber)->capture_default_str();
  app.fallthrough();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Render a scenario into audio, trajectory, fixtures and ground truth");
  simulate->add_option("--scenario", sim.scenario, "Scenario JSON (default: built-in moving speaker)")->check(CLI::ExistingFile);

  DoaArgs doa_args;
  auto* doa = app.add_subcommand("doa", "Audio to an azimuth track with per-estimate CDR");
  doa->add_option("--audio", doa_args.audio, "Multi-channel WAV")->required()->check(CLI::ExistingFile);
  doa->add_option("--mic-array", doa_args.mic_array, "Mic geometry JSON (default: seven-mic glasses)")->check(CLI::ExistingFile);
  doa->add_option("--mics", doa_args.mics, "Comma-separated mic subset, e.g. 3,4,5,6");
  doa->add_option("--calibration", doa_args.calibration, "Range calibration JSON; adds distances")->check(CLI::ExistingFile);
  doa->add_option("--plot", doa_args.plot, "Write the power curve of one segment to this PNG (relative to --out)");
  doa->add_option("--plot-time", doa_args.plot_time, "Center time of the plotted segment, seconds");
  doa->add_option("--truth", doa_args.truth, "DoA truth CSV; draws the true azimuth on the plot")->check(CLI::ExistingFile);

  auto* range_cmd = app.add_subcommand("range", "Distance from the coherent-to-diffuse ratio");
  range_cmd->require_subcommand(1);
  CalibrateArgs cal;
  auto* calibrate = range_cmd->add_subcommand("calibrate", "Fit K from visual target distances and the recording's CDR");
  calibrate->add_option("--audio", cal.audio, "Multi-channel WAV")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--mic-array", cal.mic_array, "Mic geometry JSON")->check(CLI::ExistingFile);
  calibrate->add_option("--seg", cal.seg, "Segmentation track CSV files or directories")->required()->check(CLI::ExistingPath);
  ApplyArgs apply_args;
  auto* apply = range_cmd->add_subcommand("apply", "Fill distances of an audio track from its CDR");
  apply->add_option("--audio-track", apply_args.audio_track, "Audio track JSON")->required()->check(CLI::ExistingFile);
  apply->add_option("--calibration", apply_args.calibration, "Calibration JSON")->required()->check(CLI::ExistingFile);

  TrackArgs tr;
  auto* track = app.add_subcommand("track", "Assemble per-question track bundles");
  track->add_option("--questions", tr.questions, "Questions JSONL")->required()->check(CLI::ExistingFile);
  track->add_option("--sd-dir", tr.sd_dir, "Replay fixtures: <question id>.json descriptors")->check(CLI::ExistingDirectory);
  track->add_option("--seg-dir", tr.seg_dir, "Segmentation tracks: <question id>.csv")->check(CLI::ExistingDirectory);
  track->add_option("--audio-track", tr.audio_track, "Audio track JSON")->check(CLI::ExistingFile);
  track->add_option("--sources", tr.sources, "Track sources to keep: seg,sd,audio or all")->capture_default_str();
  track->add_option("--provider", tr.provider, "Descriptor provider")->check(CLI::IsMember({"replay", "http"}))->capture_default_str();
  track->add_option("--endpoint", tr.endpoint, "HTTP provider URL");
  track->add_option("--prompt", tr.prompt, "Prompt variant")->check(CLI::IsMember({"open_model", "proprietary"}))->capture_default_str();
  track->add_option("--media", tr.media, "Media reference passed to the provider");
  track->add_option("--media-duration", tr.media_duration, "Recording length in seconds, for the prompt");
  track->add_option("--token-env", tr.token_env, "Environment variable holding a bearer token");
  track->add_option("--cache-dir", tr.cache_dir, "Cache directory for provider responses");
  track->add_option("--retries", tr.retries, "Provider retries on transient failures")->check(CLI::NonNegativeNumber)->capture_default_str();
  track->add_option("--timeout", tr.timeout, "Provider timeout, seconds")->check(CLI::PositiveNumber)->capture_default_str();

  MapArgs map_args;
  auto* map = app.add_subcommand("map", "Build global maps from bundles");
  map->add_option("--bundle,--bundles", map_args.bundles, "Bundle JSON files or directories")->required()->check(CLI::ExistingPath);
  map->add_option("--trajectory", map_args.trajectory, "Camera trajectory CSV")->required()->check(CLI::ExistingFile);
  map->add_flag("--plot", map_args.plot, "Also write a top-down PNG per map");
  map->add_option("--plot-size", map_args.plot_size, "PNG edge length in pixels")->check(CLI::Range(64, 4096));

  AnswerArgs ans;
  auto* answer = app.add_subcommand("answer", "Read answers off global maps");
  answer->add_option("--questions", ans.questions, "Questions JSONL")->required()->check(CLI::ExistingFile);
  answer->add_option("--maps", ans.maps, "Directory of <question id>.json maps")->required()->check(CLI::ExistingDirectory);
  answer->add_option("--trajectory", ans.trajectory, "Camera trajectory CSV")->required()->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score answers and/or a DoA track");
  eval->add_option("--questions", ev.questions, "Questions JSONL")->check(CLI::ExistingFile);
  eval->add_option("--answers", ev.answers, "Predicted answers JSONL")->check(CLI::ExistingFile);
  eval->add_option("--gt", ev.gt, "Ground-truth answers JSONL")->check(CLI::ExistingFile);
  eval->add_option("--method", ev.method, "Row label in the text report")->capture_default_str();
  eval->add_option("--doa-track", ev.doa_track, "Audio track JSON")->check(CLI::ExistingFile);
  eval->add_option("--gt-doa", ev.gt_doa, "DoA truth CSV")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;
  set_verbosity(g.verbosity);

  try {
    if (*simulate) cmd_simulate(g, sim);
    if (*doa) cmd_doa(g, doa_args);
    if (*calibrate) cmd_range_calibrate(g, cal);
    if (*apply) cmd_range_apply(g, apply_args);
    if (*track) cmd_track(g, tr);
    if (*map) cmd_map(g, map_args);
    if (*answer) cmd_answer(g, ans);
    if (*eval) cmd_eval(g, ev);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const savvy::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
