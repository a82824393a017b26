#include "savvy/range.hpp"

#include "fft.hpp"
#include "savvy/dbscan.hpp"
#include "savvy/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace savvy::range {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxCoherence = 1.0 - 1e-10;

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

void WelchConfig::validate(int sample_rate) const {
  if (segment_length < 2) throw Error("welch: segment length must be at least 2 samples");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw Error("welch: overlap must be in [0, 1)");
  if (!(band_low >= 0.0 && band_low < band_high && band_high <= 0.5 * sample_rate)) {
    throw Error("welch: band must satisfy 0 <= low < high <= Nyquist");
  }
}

double diffuse_coherence(double freq_hz, double d, double c) {
  const double x = 2.0 * kPi * freq_hz * d / c;
  return std::abs(x) < 1e-12 ? 1.0 : std::sin(x) / x;
}

double cdr_from_coherence(std::complex<double> gamma_x, double gamma_n) {
  const double mag = std::abs(gamma_x);
  if (mag > kMaxCoherence) gamma_x *= kMaxCoherence / mag;
  const double a = std::norm(gamma_x);
  const double re = gamma_x.real();
  const double g2 = gamma_n * gamma_n;
  const double arg = a + g2 * re * re - g2 * a - 2.0 * gamma_n * re + g2;
  return (-std::sqrt(std::max(arg, 0.0)) - a + gamma_n * re) / (a - 1.0);
}

CdrFrame estimate_cdr(const audio::AudioClip& clip, const audio::Segment& segment,
                      const audio::MicArray& array, const CdrConfig& config) {
  const auto& w = config.welch;
  w.validate(clip.sample_rate);
  if (clip.num_channels() != array.size()) {
    throw Error("estimate_cdr: clip has " + std::to_string(clip.num_channels()) + " channels, array has " +
                std::to_string(array.size()) + " mics");
  }
  const auto samples = clip.extract(segment);
  const auto len = static_cast<std::size_t>(w.segment_length);
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(len * (1.0 - w.overlap))));
  const std::size_t n = samples.front().size();
  if (n < len + hop) throw Error("estimate_cdr: segment shorter than two Welch windows");
  const std::size_t windows = (n - len) / hop + 1;

  double energy = 0.0;
  for (const auto& ch : samples) energy += rms(ch) * rms(ch);
  if (std::sqrt(energy / static_cast<double>(samples.size())) < config.energy_floor) {
    throw UndefinedCdrError("estimate_cdr: silent segment");
  }

  // Periodic Hann; scaling cancels in the coherence.
  std::vector<double> hann(len);
  for (std::size_t i = 0; i < len; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(len));
  }
  const double fs = static_cast<double>(clip.sample_rate);
  std::vector<std::size_t> bins;
  for (std::size_t k = 0; k <= len / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(len);
    if (f >= w.band_low && f <= w.band_high) bins.push_back(k);
  }
  if (bins.empty()) throw Error("estimate_cdr: no frequency bins inside the band");

  const std::size_t mics = samples.size();
  const auto& fft = detail::real_fft(len);
  // spec[m][w][b]: band bins of window w for mic m.
  std::vector<std::vector<std::vector<std::complex<double>>>> spec(
      mics, std::vector<std::vector<std::complex<double>>>(windows));
  std::vector<double> frame(len);
  std::vector<std::complex<double>> full;
  for (std::size_t m = 0; m < mics; ++m) {
    for (std::size_t wi = 0; wi < windows; ++wi) {
      const double* x = samples[m].data() + wi * hop;
      const double mean = std::accumulate(x, x + len, 0.0) / static_cast<double>(len);
      for (std::size_t i = 0; i < len; ++i) frame[i] = (x[i] - mean) * hann[i];
      fft.forward(frame, full);
      auto& out = spec[m][wi];
      out.reserve(bins.size());
      for (auto k : bins) out.push_back(full[k]);
    }
  }

  std::vector<std::vector<double>> auto_psd(mics, std::vector<double>(bins.size(), 0.0));
  for (std::size_t m = 0; m < mics; ++m) {
    for (std::size_t wi = 0; wi < windows; ++wi) {
      for (std::size_t b = 0; b < bins.size(); ++b) auto_psd[m][b] += std::norm(spec[m][wi][b]);
    }
  }

  double pair_sum = 0.0;
  std::size_t pair_count = 0;
  for (std::size_t m = 0; m < mics; ++m) {
    for (std::size_t q = m + 1; q < mics; ++q) {
      const double d = (array.positions[m] - array.positions[q]).norm();
      if (d < 1e-12) continue;
      double band_sum = 0.0;
      bool defined = true;
      for (std::size_t b = 0; b < bins.size(); ++b) {
        std::complex<double> cross{0.0, 0.0};
        for (std::size_t wi = 0; wi < windows; ++wi) cross += std::conj(spec[m][wi][b]) * spec[q][wi][b];
        const double denom = std::sqrt(auto_psd[m][b] * auto_psd[q][b]);
        if (!(denom > 0.0)) {
          defined = false;
          break;
        }
        const double f = static_cast<double>(bins[b]) * fs / static_cast<double>(len);
        const double cdr = cdr_from_coherence(cross / denom, diffuse_coherence(f, d, array.c));
        band_sum += std::clamp(cdr, 0.0, config.max_cdr);
      }
      if (!defined) continue;
      pair_sum += band_sum / static_cast<double>(bins.size());
      ++pair_count;
    }
  }
  if (pair_count == 0) throw UndefinedCdrError("estimate_cdr: no microphone pair carries signal");
  return {segment.center(), std::min(pair_sum / static_cast<double>(pair_count), config.max_cdr)};
}

RangeCalibration calibrate_k(std::span<const CalibrationSample> samples, const KConfig& config) {
  std::vector<double> products;
  for (const auto& s : samples) {
    if (s.cdr > 0.0 && std::isfinite(s.cdr) && std::isfinite(s.distance)) {
      products.push_back(s.distance * s.distance * s.cdr);
    }
  }
  if (products.size() < 3) {
    throw CalibrationError("calibration needs at least 3 samples with cdr > 0, got " +
                           std::to_string(products.size()));
  }
  // Sorting first makes the result independent of input order and lets ties
  // between equally large clusters resolve toward the smaller products.
  std::sort(products.begin(), products.end());
  const std::size_t n = products.size();
  const double median = n % 2 == 1 ? products[n / 2] : 0.5 * (products[n / 2 - 1] + products[n / 2]);
  const double eps = config.eps.value_or(config.eps_fraction * median);
  if (!(eps > 0.0)) throw CalibrationError("calibration: DBSCAN radius must be positive");

  const auto labels = dbscan(n, config.min_pts, [&](std::size_t i, std::size_t j) {
    return std::abs(products[i] - products[j]) <= eps;
  });
  const auto clusters = cluster_members(labels);
  if (clusters.empty()) throw CalibrationError("calibration: no inlier cluster");
  const auto* best = &clusters.front();
  for (const auto& c : clusters) {
    if (c.size() > best->size()) best = &c;
  }
  double sum = 0.0;
  for (auto i : *best) sum += products[i];
  RangeCalibration out;
  out.k = sum / static_cast<double>(best->size());
  out.inlier_count = best->size();
  out.sample_count = n;
  if (!(out.k > 0.0)) throw CalibrationError("calibration: non-positive K");
  return out;
}

std::optional<double> distance_from_cdr(double cdr, const RangeCalibration& calib) {
  if (!(cdr > 0.0) || !(calib.k > 0.0)) return std::nullopt;
  return std::sqrt(calib.k / cdr);
}

nlohmann::json to_json(const RangeCalibration& calib) {
  return {{"k", calib.k}, {"inlier_count", calib.inlier_count}, {"sample_count", calib.sample_count}};
}

RangeCalibration calibration_from_json(const nlohmann::json& j) {
  RangeCalibration c;
  try {
    c.k = j.at("k").get<double>();
    c.inlier_count = j.value("inlier_count", std::size_t{0});
    c.sample_count = j.value("sample_count", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("calibration", e.what());
  }
  if (!(c.k > 0.0)) throw ParseError("k", "must be positive");
  return c;
}

}  // namespace savvy::range
