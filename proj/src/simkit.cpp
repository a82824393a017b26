#include "savvy/simkit.hpp"

#include "fft.hpp"
#include "savvy/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace savvy::simkit {

using geometry::GlobalPoint;
using nlohmann::json;

namespace {

// Independent, reproducible streams for each consumer of randomness.
enum Stream : std::uint64_t {
  kSignalStream = 100,
  kDiffuseStream = 200,
  kSensorStream = 300,
  kSdStream = 400,
  kSegStream = 500,
};

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

// Windowed-sinc fractional delay table: row r holds taps for a fractional
// offset r / resolution, taps k = -H+1 .. H.
class DelayKernel {
 public:
  explicit DelayKernel(int half_width, int resolution = 512) : h_(half_width), res_(resolution) {
    if (half_width < 2) throw Error("interpolation kernel half-width must be at least 2");
    table_.resize(static_cast<std::size_t>((res_ + 1) * 2 * h_));
    for (int r = 0; r <= res_; ++r) {
      const double frac = static_cast<double>(r) / res_;
      for (int k = -h_ + 1; k <= h_; ++k) {
        const double x = static_cast<double>(k) - frac;
        const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(geometry::kPi * x) / (geometry::kPi * x);
        const double a = geometry::kPi * x / h_;
        const double w = std::abs(x) >= h_ ? 0.0 : 0.42 + 0.5 * std::cos(a) + 0.08 * std::cos(2.0 * a);
        table_[static_cast<std::size_t>(r * 2 * h_ + (k + h_ - 1))] = sinc * w;
      }
    }
  }

  // Band-limited value of `s` at fractional index u.
  double at(const std::vector<double>& s, double u) const {
    auto i = static_cast<long>(std::floor(u));
    int r = static_cast<int>(std::lround((u - static_cast<double>(i)) * res_));
    if (r == res_) {
      r = 0;
      ++i;
    }
    const double* taps = &table_[static_cast<std::size_t>(r * 2 * h_)];
    const long n = static_cast<long>(s.size());
    const long lo = std::max(i - h_ + 1, 0L), hi = std::min(i + h_, n - 1);
    double acc = 0.0;
    for (long j = lo; j <= hi; ++j) acc += s[static_cast<std::size_t>(j)] * taps[j - i + h_ - 1];
    return acc;
  }

  int half_width() const { return h_; }

 private:
  int h_;
  int res_;
  std::vector<double> table_;
};

void check_outside(const audio::MicArray& array, const Eigen::Vector3d& p, double t) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& m : array.positions) centroid += m;
  centroid /= static_cast<double>(array.size());
  double radius = 0.0;
  for (const auto& m : array.positions) radius = std::max(radius, (m - centroid).norm());
  if ((p - centroid).norm() <= radius) {
    std::ostringstream os;
    os << "source inside the microphone array at t = " << t << " s";
    throw Error(os.str());
  }
}

std::vector<double> band_limited_noise(std::size_t n, int fs, double lo, double hi, bool tilt, std::mt19937_64& rng) {
  const std::size_t len = detail::next_pow2(std::max<std::size_t>(n, 2));
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(len);
  for (auto& v : x) v = g(rng);
  const auto& fft = detail::real_fft(len);
  std::vector<std::complex<double>> spec;
  fft.forward(x, spec);
  for (std::size_t b = 0; b < spec.size(); ++b) {
    const double f = static_cast<double>(b) * fs / static_cast<double>(len);
    if (f < lo || f > hi) {
      spec[b] = 0.0;
    } else if (tilt && f > 500.0) {
      spec[b] *= std::sqrt(500.0 / f);
    }
  }
  fft.inverse(spec, x);
  x.resize(n);
  return x;
}

}  // namespace

std::string_view to_string(SignalKind k) {
  switch (k) {
    case SignalKind::kNoise: return "noise";
    case SignalKind::kBabble: return "babble";
    case SignalKind::kTone: return "tone";
  }
  return "noise";
}

SignalKind signal_kind_from_string(std::string_view s) {
  if (s == "noise") return SignalKind::kNoise;
  if (s == "babble") return SignalKind::kBabble;
  if (s == "tone") return SignalKind::kTone;
  throw ParseError("signal.kind", "unknown signal kind \"" + std::string(s) + "\"");
}

std::vector<double> synthesize_signal(const SignalSpec& spec, std::size_t n, int sample_rate, std::uint64_t seed) {
  if (sample_rate <= 0) throw Error("sample rate must be positive");
  if (!(spec.level >= 0.0)) throw Error("signal level must be non-negative");
  auto rng = make_rng(seed, kSignalStream);
  std::vector<double> x;
  const double nyquist = 0.5 * sample_rate;
  switch (spec.kind) {
    case SignalKind::kTone: {
      if (!(spec.tone_hz > 0.0 && spec.tone_hz < nyquist)) throw Error("tone frequency outside (0, Nyquist)");
      std::uniform_real_distribution<double> ph(0.0, 2.0 * geometry::kPi);
      const double phase = ph(rng);
      x.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::sin(2.0 * geometry::kPi * spec.tone_hz * static_cast<double>(i) / sample_rate + phase);
      }
      break;
    }
    case SignalKind::kNoise:
    case SignalKind::kBabble: {
      if (!(spec.low_hz >= 0.0 && spec.high_hz > spec.low_hz && spec.high_hz <= nyquist)) {
        throw Error("signal band must satisfy 0 <= low < high <= Nyquist");
      }
      const bool babble = spec.kind == SignalKind::kBabble;
      x = band_limited_noise(n, sample_rate, spec.low_hz, spec.high_hz, babble, rng);
      if (babble) {
        // Syllable-rate amplitude modulation that never falls silent.
        std::uniform_real_distribution<double> rate(2.5, 6.0), ph(0.0, 2.0 * geometry::kPi);
        double f[3], p[3];
        for (int k = 0; k < 3; ++k) {
          f[k] = rate(rng);
          p[k] = ph(rng);
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double t = static_cast<double>(i) / sample_rate;
          double m = 0.0;
          for (int k = 0; k < 3; ++k) m += std::sin(2.0 * geometry::kPi * f[k] * t + p[k]);
          x[i] *= 0.65 + 0.35 * (m / 3.0);
        }
      }
      break;
    }
  }
  const double r = rms(x);
  if (r > 0.0) {
    for (auto& v : x) v *= spec.level / r;
  }
  return x;
}

std::vector<std::vector<double>> diffuse_field(const audio::MicArray& array, std::size_t n, int sample_rate,
                                               int directions, std::uint64_t seed) {
  array.validate();
  if (directions < 1) throw Error("diffuse field needs at least one direction");
  std::vector<std::vector<double>> out(array.size(), std::vector<double>(n, 0.0));
  if (n == 0) return out;

  // Fibonacci lattice on the unit sphere.
  const double golden = geometry::kPi * (3.0 - std::sqrt(5.0));
  std::vector<Eigen::Vector3d> dirs;
  for (int i = 0; i < directions; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / directions;
    const double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
    dirs.emplace_back(rr * std::cos(golden * i), rr * std::sin(golden * i), z);
  }

  constexpr std::size_t kMargin = 64;
  const std::size_t nfft = detail::next_pow2(std::min<std::size_t>(n, 65536 - 2 * kMargin) + 2 * kMargin);
  const std::size_t block = nfft - 2 * kMargin;
  const auto& fft = detail::real_fft(nfft);
  const std::size_t bins = fft.bins();
  const double scale = 1.0 / (std::sqrt(static_cast<double>(directions)) * static_cast<double>(nfft));

  std::vector<std::mt19937_64> rngs;
  for (int k = 0; k < directions; ++k) rngs.push_back(make_rng(seed, kDiffuseStream, static_cast<std::uint64_t>(k)));
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> bufs(static_cast<std::size_t>(directions), std::vector<double>(nfft));
  // Per-bin phase step for each (mic, direction): exp(-j 2 pi f tau).
  std::vector<std::complex<double>> step(array.size() * dirs.size());
  for (std::size_t m = 0; m < array.size(); ++m) {
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      const double tau = -array.positions[m].dot(dirs[k]) / array.c;
      step[m * dirs.size() + k] = std::polar(1.0, -2.0 * geometry::kPi * tau * sample_rate / static_cast<double>(nfft));
    }
  }

  std::vector<std::vector<std::complex<double>>> acc(array.size(), std::vector<std::complex<double>>(bins));
  std::vector<std::complex<double>> spec;
  std::vector<double> y;
  for (std::size_t start = 0; start < n; start += block) {
    for (auto& a : acc) std::fill(a.begin(), a.end(), std::complex<double>(0.0));
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      auto& buf = bufs[k];
      // buf[j] holds sample start - margin + j.
      if (start == 0) {
        for (auto& v : buf) v = g(rngs[k]);
      } else {
        std::copy(buf.begin() + static_cast<long>(block), buf.end(), buf.begin());
        for (std::size_t j = 2 * kMargin; j < nfft; ++j) buf[j] = g(rngs[k]);
      }
      fft.forward(buf, spec);
      for (std::size_t m = 0; m < array.size(); ++m) {
        const auto w = step[m * dirs.size() + k];
        std::complex<double> rot(1.0, 0.0);
        auto& a = acc[m];
        for (std::size_t b = 0; b < bins; ++b) {
          a[b] += spec[b] * rot;
          rot *= w;
        }
      }
    }
    for (std::size_t m = 0; m < array.size(); ++m) {
      fft.inverse(acc[m], y);
      for (std::size_t i = 0; i < block && start + i < n; ++i) out[m][start + i] = y[kMargin + i] * scale;
    }
  }
  return out;
}

audio::AudioClip render(const audio::MicArray& array, const std::vector<Emitter>& emitters, const NoiseSpec& noise,
                        const RenderConfig& config, std::uint64_t seed) {
  array.validate();
  if (config.sample_rate <= 0) throw Error("sample rate must be positive");
  if (!(config.duration > 0.0)) throw Error("duration must be positive");
  if (!(config.control_period > 0.0)) throw Error("control period must be positive");
  if (!(noise.diffuse_level >= 0.0) || !(noise.sensor_level >= 0.0)) throw Error("noise levels must be >= 0");
  const int fs = config.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(config.duration * fs));
  const std::size_t mics = array.size();
  std::vector<std::vector<double>> out(mics, std::vector<double>(n, 0.0));
  const DelayKernel kernel(config.kernel_half_width);

  const auto ctrl = static_cast<std::size_t>(std::max(1L, std::lround(config.control_period * fs)));
  const std::size_t points = n / ctrl + 2;
  std::vector<double> delay(points), gain(points);
  for (const auto& e : emitters) {
    if (!e.position) throw Error("emitter without a position function");
    for (std::size_t m = 0; m < mics; ++m) {
      for (std::size_t c = 0; c < points; ++c) {
        const double t = static_cast<double>(c * ctrl) / fs;
        const Eigen::Vector3d p = e.position(t);
        if (m == 0) check_outside(array, p, t);
        const double r = (p - array.positions[m]).norm();
        delay[c] = r / array.c;
        gain[c] = 1.0 / std::max(r, 0.1);
      }
      auto& ch = out[m];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i / ctrl;
        const double a = static_cast<double>(i - c * ctrl) / static_cast<double>(ctrl);
        const double tau = delay[c] + a * (delay[c + 1] - delay[c]);
        const double g = gain[c] + a * (gain[c + 1] - gain[c]);
        const double t = static_cast<double>(i) / fs;
        ch[i] += g * kernel.at(e.signal, (t - tau - e.signal_start) * fs);
      }
    }
  }

  if (noise.diffuse_level > 0.0) {
    const auto d = diffuse_field(array, n, fs, noise.diffuse_directions, seed);
    for (std::size_t m = 0; m < mics; ++m) {
      for (std::size_t i = 0; i < n; ++i) out[m][i] += noise.diffuse_level * d[m][i];
    }
  }
  if (noise.sensor_level > 0.0) {
    for (std::size_t m = 0; m < mics; ++m) {
      auto rng = make_rng(seed, kSensorStream, m);
      std::normal_distribution<double> g(0.0, noise.sensor_level);
      for (auto& v : out[m]) v += g(rng);
    }
  }

  audio::AudioClip clip;
  clip.sample_rate = fs;
  for (auto& ch : out) clip.channels.emplace_back(ch.begin(), ch.end());
  return clip;
}

audio::AudioClip simulate_source(const audio::MicArray& array, const PositionFn& position, const SignalSpec& signal,
                                 double duration, int sample_rate, const NoiseSpec& noise, std::uint64_t seed) {
  constexpr double kPreroll = 0.1;
  Emitter e;
  e.signal_start = -kPreroll;
  e.signal = synthesize_signal(signal, static_cast<std::size_t>(std::llround((duration + kPreroll) * sample_rate)),
                               sample_rate, seed);
  e.position = position;
  RenderConfig cfg;
  cfg.sample_rate = sample_rate;
  cfg.duration = duration;
  return render(array, {e}, noise, cfg, seed);
}

// --- paths --------------------------------------------------------------------

namespace {

std::size_t segment_index(const std::vector<Waypoint>& path, double t) {
  const auto it = std::upper_bound(path.begin(), path.end(), t, [](double v, const Waypoint& w) { return v < w.t; });
  return static_cast<std::size_t>(std::max<long>(0, (it - path.begin()) - 1));
}

}  // namespace

GlobalPoint position_at(const std::vector<Waypoint>& path, double t) {
  if (path.empty()) throw Error("empty path");
  if (t <= path.front().t) return {path.front().x, path.front().y};
  if (t >= path.back().t) return {path.back().x, path.back().y};
  const std::size_t i = segment_index(path, t);
  const auto& a = path[i];
  const auto& b = path[i + 1];
  const double u = (t - a.t) / (b.t - a.t);
  return {a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)};
}

double heading_at(const std::vector<Waypoint>& path, double t) {
  if (path.empty()) throw Error("empty path");
  if (t <= path.front().t) return geometry::normalize_deg(path.front().heading);
  if (t >= path.back().t) return geometry::normalize_deg(path.back().heading);
  const std::size_t i = segment_index(path, t);
  const auto& a = path[i];
  const auto& b = path[i + 1];
  const double u = (t - a.t) / (b.t - a.t);
  return geometry::normalize_deg(a.heading + u * geometry::normalize_deg(b.heading - a.heading));
}

std::vector<Waypoint> circle_path(GlobalPoint center, double radius, double start_deg, double period,
                                  double duration, double step) {
  if (!(radius > 0.0) || period == 0.0 || !(duration > 0.0) || !(step > 0.0)) {
    throw Error("circle_path: radius, duration and step must be positive and period non-zero");
  }
  std::vector<Waypoint> out;
  const auto count = static_cast<long>(std::ceil(duration / step - 1e-9));
  for (long k = 0; k <= count; ++k) {
    const double t = std::min(duration, static_cast<double>(k) * step);
    const double a = geometry::deg2rad(start_deg + 360.0 * t / period);
    out.push_back({t, center.x + radius * std::sin(a), center.y + radius * std::cos(a), 0.0});
  }
  return out;
}

// --- scenario -----------------------------------------------------------------

namespace {

void check_path(const std::vector<Waypoint>& path, const std::string& field) {
  if (path.empty()) throw ParseError(field, "needs at least one waypoint");
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!(path[i].t > path[i - 1].t)) throw ParseError(field, "waypoint times must strictly increase");
  }
}

json path_json(const std::vector<Waypoint>& path, bool with_heading) {
  json a = json::array();
  for (const auto& w : path) {
    json j{{"t", w.t}, {"x", w.x}, {"y", w.y}};
    if (with_heading) j["heading"] = w.heading;
    a.push_back(j);
  }
  return a;
}

std::vector<Waypoint> path_from(const json& j, const std::string& field) {
  std::vector<Waypoint> out;
  if (j.is_object() && j.contains("circle")) {
    const auto& c = j.at("circle");
    return circle_path({c.at("center").at(0).get<double>(), c.at("center").at(1).get<double>()},
                       c.at("radius").get<double>(), c.value("start_deg", 0.0), c.at("period").get<double>(),
                       c.at("duration").get<double>(), c.value("step", 0.5));
  }
  if (!j.is_array()) throw ParseError(field, "expected a waypoint list or a circle");
  for (const auto& w : j) out.push_back({w.at("t").get<double>(), w.at("x").get<double>(), w.at("y").get<double>(),
                                         w.value("heading", 0.0)});
  return out;
}

}  // namespace

void Scenario::validate() const {
  if (!(duration > 0.0)) throw ParseError("duration", "must be positive");
  if (sample_rate <= 0) throw ParseError("sample_rate", "must be positive");
  array.validate();
  check_path(camera, "camera");
  if (sources.empty()) throw ParseError("sources", "at least one source is required");
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto field = "sources[" + std::to_string(i) + "]";
    if (sources[i].name.empty()) throw ParseError(field + ".name", "missing");
    check_path(sources[i].path, field + ".path");
  }
  if (!(noise.diffuse_level >= 0.0) || !(noise.sensor_level >= 0.0) || noise.diffuse_directions < 1) {
    throw ParseError("noise", "levels must be >= 0 and directions >= 1");
  }
  const auto& f = fixtures;
  if (!(f.hfov > 0.0 && f.hfov < 180.0)) throw ParseError("fixtures.hfov", "must lie in (0, 180)");
  if (!(f.sd_period > 0.0)) throw ParseError("fixtures.sd_period", "must be positive");
  if (f.seg_frames < 1) throw ParseError("fixtures.seg_frames", "must be positive");
  for (double p : {f.sd_dropout, f.seg_dropout, f.seg_confidence_low}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParseError("fixtures", "probabilities must lie in [0, 1]");
  }
  for (const auto& q : questions) {
    const auto field = "questions." + q.id;
    if (q.id.empty()) throw ParseError("questions", "question without id");
    source(q.source);
    if (!(q.span.start < q.span.end) || q.span.start < 0.0 || q.span.end > duration) {
      throw ParseError(field + ".span", "must satisfy 0 <= start < end <= duration");
    }
    if (qa::is_allocentric(q.kind)) {
      if (q.reference.empty() || q.facing.empty()) throw ParseError(field, "allocentric questions need reference and facing");
      object(q.reference);
      object(q.facing);
    }
  }
}

const ScenarioSource& Scenario::source(const std::string& n) const {
  for (const auto& s : sources) {
    if (s.name == n) return s;
  }
  throw ParseError("source", "unknown source \"" + n + "\"");
}

const ScenarioObject& Scenario::object(const std::string& n) const {
  for (const auto& o : objects) {
    if (o.name == n) return o;
  }
  throw ParseError("object", "unknown object \"" + n + "\"");
}

json to_json(const Scenario& s) {
  json sources = json::array();
  for (const auto& src : s.sources) {
    sources.push_back({{"name", src.name},
                       {"description", src.description},
                       {"height", src.height},
                       {"signal",
                        {{"kind", to_string(src.signal.kind)},
                         {"low_hz", src.signal.low_hz},
                         {"high_hz", src.signal.high_hz},
                         {"tone_hz", src.signal.tone_hz},
                         {"level", src.signal.level}}},
                       {"path", path_json(src.path, false)}});
  }
  json objects = json::array();
  for (const auto& o : s.objects) {
    objects.push_back({{"name", o.name}, {"description", o.description}, {"position", {o.position.x, o.position.y}}});
  }
  json questions = json::array();
  for (const auto& q : s.questions) {
    json j{{"id", q.id},         {"kind", qa::to_string(q.kind)}, {"event", q.event},
           {"speech", q.speech}, {"source", q.source},            {"span", {q.span.start, q.span.end}}};
    if (!q.reference.empty()) j["reference"] = q.reference;
    if (!q.facing.empty()) j["facing"] = q.facing;
    questions.push_back(j);
  }
  const auto& f = s.fixtures;
  return {{"name", s.name},
          {"seed", s.seed},
          {"duration", s.duration},
          {"sample_rate", s.sample_rate},
          {"array", audio::to_json(s.array)},
          {"camera", {{"height", s.camera_height}, {"path", path_json(s.camera, true)}}},
          {"sources", sources},
          {"objects", objects},
          {"noise",
           {{"diffuse_level", s.noise.diffuse_level},
            {"diffuse_directions", s.noise.diffuse_directions},
            {"sensor_level", s.noise.sensor_level}}},
          {"fixtures",
           {{"hfov", f.hfov},
            {"sd_period", f.sd_period},
            {"sd_theta_sigma", f.sd_theta_sigma},
            {"sd_r_sigma", f.sd_r_sigma},
            {"sd_dropout", f.sd_dropout},
            {"seg_frames", f.seg_frames},
            {"seg_theta_sigma", f.seg_theta_sigma},
            {"seg_r_sigma", f.seg_r_sigma},
            {"seg_dropout", f.seg_dropout},
            {"seg_confidence_low", f.seg_confidence_low}}},
          {"questions", questions}};
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  try {
    s.name = j.value("name", s.name);
    s.seed = j.value("seed", s.seed);
    s.duration = j.at("duration").get<double>();
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    if (j.contains("array")) {
      const auto& a = j.at("array");
      s.array = a.is_string() && a.get<std::string>() == "aria" ? audio::aria_array() : audio::mic_array_from_json(a);
    }
    const auto& cam = j.at("camera");
    s.camera_height = cam.value("height", s.camera_height);
    s.camera = path_from(cam.at("path"), "camera.path");
    for (const auto& src : j.at("sources")) {
      ScenarioSource out;
      out.name = src.at("name").get<std::string>();
      out.description = src.value("description", out.name);
      out.height = src.value("height", out.height);
      if (src.contains("signal")) {
        const auto& sg = src.at("signal");
        out.signal.kind = signal_kind_from_string(sg.value("kind", std::string("babble")));
        out.signal.low_hz = sg.value("low_hz", out.signal.low_hz);
        out.signal.high_hz = sg.value("high_hz", out.signal.high_hz);
        out.signal.tone_hz = sg.value("tone_hz", out.signal.tone_hz);
        out.signal.level = sg.value("level", out.signal.level);
      }
      out.path = path_from(src.at("path"), "sources." + out.name + ".path");
      s.sources.push_back(std::move(out));
    }
    for (const auto& o : j.value("objects", json::array())) {
      const auto name = o.at("name").get<std::string>();
      s.objects.push_back(
          {name, o.value("description", name), {o.at("position").at(0).get<double>(), o.at("position").at(1).get<double>()}});
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      s.noise.diffuse_level = n.value("diffuse_level", s.noise.diffuse_level);
      s.noise.diffuse_directions = n.value("diffuse_directions", s.noise.diffuse_directions);
      s.noise.sensor_level = n.value("sensor_level", s.noise.sensor_level);
    }
    if (j.contains("fixtures")) {
      const auto& f = j.at("fixtures");
      auto& o = s.fixtures;
      o.hfov = f.value("hfov", o.hfov);
      o.sd_period = f.value("sd_period", o.sd_period);
      o.sd_theta_sigma = f.value("sd_theta_sigma", o.sd_theta_sigma);
      o.sd_r_sigma = f.value("sd_r_sigma", o.sd_r_sigma);
      o.sd_dropout = f.value("sd_dropout", o.sd_dropout);
      o.seg_frames = f.value("seg_frames", o.seg_frames);
      o.seg_theta_sigma = f.value("seg_theta_sigma", o.seg_theta_sigma);
      o.seg_r_sigma = f.value("seg_r_sigma", o.seg_r_sigma);
      o.seg_dropout = f.value("seg_dropout", o.seg_dropout);
      o.seg_confidence_low = f.value("seg_confidence_low", o.seg_confidence_low);
    }
    for (const auto& q : j.value("questions", json::array())) {
      ScenarioQuestion out;
      out.id = q.at("id").get<std::string>();
      out.kind = qa::kind_from_string(q.at("kind").get<std::string>());
      out.event = q.at("event").get<std::string>();
      out.speech = q.value("speech", false);
      out.source = q.at("source").get<std::string>();
      out.span = {q.at("span").at(0).get<double>(), q.at("span").at(1).get<double>()};
      out.reference = q.value("reference", std::string());
      out.facing = q.value("facing", std::string());
      s.questions.push_back(std::move(out));
    }
  } catch (const json::exception& e) {
    throw ParseError("scenario", e.what());
  }
  s.validate();
  return s;
}

Scenario read_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ParseError(path, e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const ParseError& e) {
    throw ParseError(path, e.what());
  }
}

Scenario moving_speaker_scenario() {
  Scenario s;
  s.name = "moving_speaker";
  s.seed = 7;
  s.duration = 40.0;
  s.sample_rate = 48000;
  s.array = audio::aria_array();
  s.camera_height = 1.6;
  s.camera = {{0.0, 0.0, 0.0, 0.0}, {10.0, 0.0, 0.0, 15.0}, {20.0, 0.0, 0.0, 0.0}, {30.0, 0.0, 0.0, -15.0},
              {40.0, 0.0, 0.0, 0.0}};
  ScenarioSource speaker;
  speaker.name = "speaker";
  speaker.description = "person in the grey sweater";
  speaker.signal.kind = SignalKind::kBabble;
  speaker.signal.level = 0.1;
  speaker.path = circle_path({0.0, -1.0}, 2.0, 0.0, 20.0, 40.0, 0.25);
  s.sources = {speaker};
  s.objects = {{"table", "wooden dining table", {1.5, 2.0}}, {"tv", "wall-mounted TV", {-1.0, 3.5}}};
  // Direct and diffuse power are equal 3 m from the speaker.
  s.noise.diffuse_level = 0.1 / 3.0;
  s.noise.diffuse_directions = 64;
  s.noise.sensor_level = 0.001;
  auto q = [](std::string id, qa::Kind k, std::string event, double a, double b, std::string ref = {},
              std::string facing = {}) {
    ScenarioQuestion out;
    out.id = std::move(id);
    out.kind = k;
    out.event = std::move(event);
    out.speech = true;
    out.source = "speaker";
    out.span = {a, b};
    out.reference = std::move(ref);
    out.facing = std::move(facing);
    return out;
  };
  s.questions = {
      q("q1", qa::Kind::kEgoDirHard, "the weekend hiking trip", 6.25, 7.25),
      q("q2", qa::Kind::kEgoDirSimple, "the broken dishwasher", 29.5, 30.5),
      q("q3", qa::Kind::kEgoDirHard, "the birthday dinner", 18.5, 19.5),
      q("q4", qa::Kind::kAlloDirSimple, "the train schedule", 11.5, 12.5, "table", "tv"),
      q("q5", qa::Kind::kEgoDist, "the new bicycle", 24.5, 25.5),
      q("q6", qa::Kind::kAlloDist, "the garden project", 36.0, 37.0, "table", "tv"),
  };
  s.validate();
  return s;
}

geometry::CameraTrajectory camera_trajectory(const Scenario& s, double rate) {
  if (!(rate > 0.0)) throw Error("trajectory rate must be positive");
  const geometry::FrameConfig frame{s.array.forward, s.array.right};
  std::vector<geometry::CameraPose> poses;
  const auto count = static_cast<long>(std::llround(s.duration * rate));
  poses.reserve(static_cast<std::size_t>(count + 1));
  for (long k = 0; k <= count; ++k) {
    const double t = static_cast<double>(k) / rate;
    geometry::CameraPose p;
    p.t = t;
    const auto xy = position_at(s.camera, t);
    p.position = {xy.x, xy.y, s.camera_height};
    p.orientation = geometry::level_orientation(heading_at(s.camera, t), frame);
    poses.push_back(p);
  }
  return geometry::CameraTrajectory(std::move(poses), frame);
}

geometry::EgoObservation true_observation(const Scenario& s, const ScenarioSource& src, double t) {
  const geometry::PlanarPose pose{position_at(s.camera, t), heading_at(s.camera, t)};
  return geometry::global_to_ego(position_at(src.path, t), pose, t);
}

namespace {

geometry::EgoObservation object_observation(const Scenario& s, GlobalPoint p, double t) {
  const geometry::PlanarPose pose{position_at(s.camera, t), heading_at(s.camera, t)};
  return geometry::global_to_ego(p, pose, t);
}

// Array-frame position of a source: world offset rotated into the device.
Eigen::Vector3d device_position(const Scenario& s, const ScenarioSource& src, double t) {
  const geometry::FrameConfig frame{s.array.forward, s.array.right};
  const auto q = geometry::level_orientation(heading_at(s.camera, t), frame);
  const auto cam = position_at(s.camera, t);
  const auto p = position_at(src.path, t);
  const Eigen::Vector3d offset(p.x - cam.x, p.y - cam.y, src.height - s.camera_height);
  return q.conjugate() * offset;
}

// Keyframe times for snapshot descriptors, offset per question so that
// different questions do not sample identical instants.
std::vector<double> sd_times(const Scenario& s, std::size_t qindex) {
  std::vector<double> out;
  const double offset = std::fmod(0.37 * static_cast<double>(qindex + 1), s.fixtures.sd_period);
  for (double t = offset; t <= s.duration; t += s.fixtures.sd_period) out.push_back(t);
  return out;
}

std::vector<geometry::EgoObservation> sd_keyframes(const Scenario& s, std::size_t qindex,
                                                    const std::function<geometry::EgoObservation(double)>& truth,
                                                    std::mt19937_64& rng) {
  const auto& f = s.fixtures;
  std::normal_distribution<double> dt(0.0, f.sd_theta_sigma > 0.0 ? f.sd_theta_sigma : 1.0);
  std::normal_distribution<double> dr(0.0, f.sd_r_sigma > 0.0 ? f.sd_r_sigma : 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<geometry::EgoObservation> out;
  for (double t : sd_times(s, qindex)) {
    const auto o = truth(t);
    // Draw every variate so dropout does not shift later samples.
    const double drop = u(rng), nt = dt(rng), nr = dr(rng);
    if (std::abs(o.theta) > 0.5 * f.hfov || drop < f.sd_dropout) continue;
    const double theta = std::clamp(o.theta + (f.sd_theta_sigma > 0.0 ? nt : 0.0), -90.0, 90.0);
    const double r = std::max(0.1, o.r + (f.sd_r_sigma > 0.0 ? nr : 0.0));
    // Descriptor times carry millisecond precision.
    out.push_back(geometry::EgoObservation::make(std::round(t * 1000.0) / 1000.0, theta, r));
  }
  return out;
}

std::vector<tracks::SegObservation> seg_observations(const Scenario& s,
                                                     const std::function<geometry::EgoObservation(double)>& truth,
                                                     std::mt19937_64& rng) {
  const auto& f = s.fixtures;
  std::normal_distribution<double> dt(0.0, f.seg_theta_sigma > 0.0 ? f.seg_theta_sigma : 1.0);
  std::normal_distribution<double> dr(0.0, f.seg_r_sigma > 0.0 ? f.seg_r_sigma : 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<tracks::SegObservation> out;
  for (int k = 0; k < f.seg_frames; ++k) {
    const double t = (k + 0.5) * s.duration / f.seg_frames;
    const auto o = truth(t);
    const double drop = u(rng), nt = dt(rng), nr = dr(rng), c = u(rng);
    if (std::abs(o.theta) > 0.5 * f.hfov || drop < f.seg_dropout) continue;
    tracks::SegObservation obs;
    obs.t = t;
    obs.theta = geometry::normalize_deg(o.theta + (f.seg_theta_sigma > 0.0 ? nt : 0.0));
    obs.r = std::max(0.1, o.r + (f.seg_r_sigma > 0.0 ? nr : 0.0));
    obs.confidence = f.seg_confidence_low + (1.0 - f.seg_confidence_low) * c;
    out.push_back(obs);
  }
  return out;
}

}  // namespace

fusion::GlobalMap ground_truth_map(const Scenario& s, const ScenarioQuestion& q) {
  const auto& src = s.source(q.source);
  fusion::GlobalMap m;
  m.mode = qa::is_allocentric(q.kind) ? tracks::Mode::kAllocentric : tracks::Mode::kEgocentric;
  m.span = q.span;
  const auto steps = static_cast<long>(std::ceil((q.span.end - q.span.start) / 0.1 - 1e-9));
  for (long k = 0; k <= steps; ++k) {
    fusion::TrackPoint p;
    p.t = std::min(q.span.end, q.span.start + 0.1 * static_cast<double>(k));
    p.position = position_at(src.path, p.t);
    p.source = fusion::Source::kSmoothed;
    m.target.push_back(p);
  }
  if (m.mode == tracks::Mode::kAllocentric) {
    m.reference = fusion::StaticAnchor{s.object(q.reference).position, 0, fusion::Source::kSd};
    m.facing = fusion::StaticAnchor{s.object(q.facing).position, 0, fusion::Source::kSd};
  }
  return m;
}

Walkthrough simulate_walkthrough(const Scenario& s) {
  s.validate();
  Walkthrough w;
  w.trajectory = camera_trajectory(s);

  constexpr double kPreroll = 0.1;
  std::vector<Emitter> emitters;
  for (std::size_t i = 0; i < s.sources.size(); ++i) {
    const auto& src = s.sources[i];
    Emitter e;
    e.signal_start = -kPreroll;
    e.signal = synthesize_signal(src.signal,
                                 static_cast<std::size_t>(std::llround((s.duration + kPreroll) * s.sample_rate)),
                                 s.sample_rate, s.seed + 1000003ULL * (i + 1));
    e.position = [&s, &src](double t) { return device_position(s, src, t); };
    emitters.push_back(std::move(e));
  }
  RenderConfig rc;
  rc.sample_rate = s.sample_rate;
  rc.duration = s.duration;
  w.audio = render(s.array, emitters, s.noise, rc, s.seed);

  const auto& primary = s.sources.front();
  for (long k = 0; k <= static_cast<long>(std::llround(s.duration * 100.0)); ++k) {
    const double t = static_cast<double>(k) / 100.0;
    const Eigen::Vector3d p = device_position(s, primary, t);
    const double phi = geometry::rad2deg(std::atan2(p.dot(s.array.right), p.dot(s.array.forward)));
    w.doa.push_back({t, geometry::normalize_deg(phi), p.norm()});
  }

  for (std::size_t qi = 0; qi < s.questions.size(); ++qi) {
    const auto& sq = s.questions[qi];
    const auto& src = s.source(sq.source);
    auto sd_rng = make_rng(s.seed, kSdStream, qi);
    auto seg_rng = make_rng(s.seed, kSegStream, qi);

    qa::Question q;
    q.id = sq.id;
    q.kind = sq.kind;
    q.event = sq.event;
    q.speech = sq.speech;
    q.reference = sq.reference.empty() ? "" : s.object(sq.reference).description;
    q.facing = sq.facing.empty() ? "" : s.object(sq.facing).description;
    q.options = qa::default_options(sq.kind);

    const auto target_truth = [&](double t) { return true_observation(s, src, t); };
    tracks::SnapshotDescriptor sd;
    sd.event = sq.event;
    sd.start = sq.span.start;
    sd.end = sq.span.end;
    sd.mode = qa::is_allocentric(sq.kind) ? tracks::Mode::kAllocentric : tracks::Mode::kEgocentric;
    sd.target.name = src.name;
    sd.target.description = src.description;
    sd.target.keyframes = sd_keyframes(s, qi, target_truth, sd_rng);

    tracks::SegTracks seg;
    seg[tracks::Role::kTarget] = {tracks::Role::kTarget, seg_observations(s, target_truth, seg_rng), s.fixtures.seg_frames};
    if (sd.mode == tracks::Mode::kAllocentric) {
      const std::pair<tracks::Role, const ScenarioObject*> anchors[] = {{tracks::Role::kReference, &s.object(sq.reference)},
                                                                      {tracks::Role::kFacing, &s.object(sq.facing)}};
      for (const auto& [role, obj] : anchors) {
        const auto truth = [&, obj = obj](double t) { return object_observation(s, obj->position, t); };
        tracks::ObjectEntry e;
        e.name = obj->name;
        e.description = obj->description;
        e.is_static = true;
        e.keyframes = sd_keyframes(s, qi, truth, sd_rng);
        (role == tracks::Role::kReference ? sd.reference : sd.facing) = e;
        seg[role] = {role, seg_observations(s, truth, seg_rng), s.fixtures.seg_frames};
      }
    } else {
      sd.reference = tracks::ObjectEntry::camera();
    }
    // Store the descriptor exactly as a reader of the written file sees it.
    sd = tracks::parse_snapshot(tracks::serialize_snapshot(sd));

    const auto gt_map = ground_truth_map(s, sq);
    auto answer = qa::resolve(gt_map, q, w.trajectory);
    w.questions.push_back(q);
    w.answers.push_back(answer);
    w.descriptors[q.id] = sd;
    w.segmentation[q.id] = seg;
    w.maps[q.id] = gt_map;
  }
  return w;
}

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

}  // namespace

std::vector<std::string> write_walkthrough(const Walkthrough& w, const Scenario& s, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root / "sd");
  fs::create_directories(root / "seg");
  fs::create_directories(root / "gt_maps");
  std::vector<std::string> written;
  auto note = [&](const fs::path& p) { written.push_back(p.string()); };

  audio::write_wav((root / "audio.wav").string(), w.audio);
  note(root / "audio.wav");
  write_text(root / "mic_array.json", audio::to_json(s.array).dump(2) + "\n");
  note(root / "mic_array.json");
  write_text(root / "scenario.json", to_json(s).dump(2) + "\n");
  note(root / "scenario.json");
  {
    std::ofstream out(root / "trajectory.csv", std::ios::binary);
    geometry::write_trajectory(out, w.trajectory);
    if (!out) throw Error("cannot write trajectory");
  }
  note(root / "trajectory.csv");

  std::vector<json> qs;
  for (const auto& q : w.questions) qs.push_back(qa::to_json(q));
  qa::write_jsonl((root / "questions.jsonl").string(), qs);
  note(root / "questions.jsonl");
  qa::write_answers((root / "gt.jsonl").string(), w.answers);
  note(root / "gt.jsonl");

  {
    std::ostringstream os;
    os << "t, phi_deg, r_m\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& d : w.doa) os << d.t << ", " << d.phi << ", " << d.r << '\n';
    write_text(root / "gt_doa.csv", os.str());
    note(root / "gt_doa.csv");
  }

  for (const auto& [id, sd] : w.descriptors) {
    write_text(root / "sd" / (id + ".json"), tracks::serialize_snapshot(sd) + "\n");
    note(root / "sd" / (id + ".json"));
  }
  for (const auto& [id, seg] : w.segmentation) {
    std::ofstream out(root / "seg" / (id + ".csv"), std::ios::binary);
    tracks::write_seg_tracks(out, seg);
    if (!out) throw Error("cannot write segmentation track for " + id);
    note(root / "seg" / (id + ".csv"));
  }
  for (const auto& [id, m] : w.maps) {
    write_text(root / "gt_maps" / (id + ".json"), fusion::to_json(m).dump(2) + "\n");
    note(root / "gt_maps" / (id + ".json"));
  }
  std::sort(written.begin(), written.end());
  return written;
}

std::vector<DoaTruth> read_doa_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open DoA truth file: " + path);
  std::vector<DoaTruth> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line[0] == 't') continue;
    DoaTruth d;
    char c1 = 0, c2 = 0;
    std::istringstream ss(line);
    if (!(ss >> d.t >> c1 >> d.phi >> c2 >> d.r) || c1 != ',' || c2 != ',') {
      throw ParseError(path + ":" + std::to_string(lineno), "expected t, phi_deg, r_m");
    }
    if (!out.empty() && !(d.t > out.back().t)) throw ParseError(path + ":" + std::to_string(lineno), "times must increase");
    out.push_back(d);
  }
  if (out.empty()) throw ParseError(path, "no rows");
  return out;
}

DoaTruth doa_truth_at(const std::vector<DoaTruth>& truth, double t) {
  if (truth.empty()) throw Error("empty DoA truth table");
  if (t <= truth.front().t) return truth.front();
  if (t >= truth.back().t) return truth.back();
  const auto it = std::upper_bound(truth.begin(), truth.end(), t, [](double v, const DoaTruth& d) { return v < d.t; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double u = (t - a.t) / (b.t - a.t);
  return {t, geometry::normalize_deg(a.phi + u * geometry::normalize_deg(b.phi - a.phi)), a.r + u * (b.r - a.r)};
}

}  // namespace savvy::simkit
