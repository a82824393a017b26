#include "savvy/doa.hpp"

#include "fft.hpp"
#include "savvy/parallel.hpp"
#include "savvy/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace savvy::doa {

using Spectrum = std::vector<std::complex<double>>;

void DoaGrid::validate() const {
  if (!(step > 0.0)) throw Error("doa grid: step must be positive");
  const double n = (stop - start) / step;
  if (n < 1.0 || std::abs(n - std::round(n)) > 1e-9) {
    throw Error("doa grid: step must divide the angle range");
  }
}

std::vector<double> DoaGrid::angles() const {
  validate();
  const auto n = static_cast<std::size_t>(std::llround((stop - start) / step));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = start + static_cast<double>(i) * step;
  return out;
}

int GccResult::peak_lag() const {
  const auto it = std::max_element(corr.begin(), corr.end());
  return static_cast<int>(it - corr.begin()) - max_lag;
}

double GccResult::peak() const { return *std::max_element(corr.begin(), corr.end()); }

namespace {

constexpr double kPi = 3.14159265358979323846;

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

std::vector<double> windowed(std::span<const double> x, Window w) {
  std::vector<double> out(x.begin(), x.end());
  if (w == Window::kHann && out.size() > 1) {
    const double n = static_cast<double>(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] *= 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / n);
    }
  }
  return out;
}

// conj(X) Y / |conj(X) Y| back to the lag domain, cropped to [-L, L].
std::vector<double> phat_correlation(const Spectrum& x, const Spectrum& y, int max_lag,
                                     const detail::RealFft& fft, double floor_fraction) {
  Spectrum g(x.size());
  double peak = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    g[k] = std::conj(x[k]) * y[k];
    peak = std::max(peak, std::abs(g[k]));
  }
  const double floor = std::max(floor_fraction * peak, std::numeric_limits<double>::min());
  for (auto& v : g) v /= std::max(std::abs(v), floor);

  std::vector<double> r;
  fft.inverse(g, r);
  const auto n = static_cast<long>(fft.size());
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<double> out(static_cast<std::size_t>(2 * max_lag + 1));
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    const long idx = ((lag % n) + n) % n;
    out[static_cast<std::size_t>(lag + max_lag)] = r[static_cast<std::size_t>(idx)] * scale;
  }
  return out;
}

}  // namespace

GccResult gcc_phat(std::span<const double> x, std::span<const double> y, int max_lag,
                   const DoaConfig& config) {
  if (x.size() != y.size() || x.empty()) throw Error("gcc_phat: inputs must be non-empty and equal length");
  if (max_lag < 0) throw Error("gcc_phat: max_lag must be non-negative");
  GccResult res;
  res.max_lag = max_lag;
  res.corr.assign(static_cast<std::size_t>(2 * max_lag + 1), 0.0);
  if (rms(x) <= config.energy_floor || rms(y) <= config.energy_floor) {
    res.low_energy = true;
    return res;
  }
  const auto& fft = detail::real_fft(detail::next_pow2(x.size() + static_cast<std::size_t>(max_lag)));
  Spectrum fx, fy;
  fft.forward(windowed(x, config.window), fx);
  fft.forward(windowed(y, config.window), fy);
  res.corr = phat_correlation(fx, fy, max_lag, fft, config.phat_floor);
  return res;
}

int expected_lag(std::size_t m, std::size_t n, double phi_deg, const audio::MicArray& array,
                 double sample_rate) {
  if (m >= array.size() || n >= array.size()) throw Error("expected_lag: mic index out of range");
  const double tau = (array.positions[m] - array.positions[n]).dot(array.direction(phi_deg)) / array.c;
  return static_cast<int>(std::lround(tau * sample_rate));
}

std::optional<DoaEstimate> srp_phat(const audio::AudioClip& clip, const audio::Segment& segment,
                                    const audio::MicArray& array, const DoaConfig& config) {
  array.validate();
  if (clip.num_channels() != array.size()) {
    throw Error("srp_phat: clip has " + std::to_string(clip.num_channels()) + " channels, array has " +
                std::to_string(array.size()) + " mics");
  }
  const auto angles = config.grid.angles();
  const auto samples = clip.extract(segment);
  const std::size_t mics = samples.size();
  const std::size_t len = samples.front().size();

  double energy = 0.0;
  for (const auto& ch : samples) energy += rms(ch) * rms(ch);
  if (std::sqrt(energy / static_cast<double>(mics)) < config.energy_floor) return std::nullopt;

  double max_dist = 0.0;
  for (std::size_t m = 0; m < mics; ++m) {
    for (std::size_t n = m + 1; n < mics; ++n) {
      max_dist = std::max(max_dist, (array.positions[m] - array.positions[n]).norm());
    }
  }
  const double fs = static_cast<double>(clip.sample_rate);
  const int max_lag = static_cast<int>(std::ceil(max_dist / array.c * fs)) + 1;

  const auto& fft = detail::real_fft(detail::next_pow2(len + static_cast<std::size_t>(max_lag)));
  std::vector<Spectrum> spectra(mics);
  std::vector<bool> live(mics);
  for (std::size_t m = 0; m < mics; ++m) {
    live[m] = rms(samples[m]) > config.energy_floor;
    if (live[m]) fft.forward(windowed(samples[m], config.window), spectra[m]);
  }

  DoaEstimate est;
  est.t = segment.center();
  est.power.assign(angles.size(), 0.0);
  bool any_pair = false;
  for (std::size_t m = 0; m < mics; ++m) {
    for (std::size_t n = m + 1; n < mics; ++n) {
      if (!live[m] || !live[n]) continue;
      any_pair = true;
      // R_mn peaks where n lags m by (p_m - p_n).u / c.
      const auto corr = phat_correlation(spectra[m], spectra[n], max_lag, fft, config.phat_floor);
      for (std::size_t a = 0; a < angles.size(); ++a) {
        const int lag = expected_lag(m, n, angles[a], array, fs);
        est.power[a] += corr[static_cast<std::size_t>(lag + max_lag)];
      }
    }
  }
  if (!any_pair) return std::nullopt;

  std::size_t best = 0;
  for (std::size_t a = 1; a < angles.size(); ++a) {
    if (est.power[a] > est.power[best]) best = a;
  }
  est.phi_hat = angles[best];
  est.peak_power = est.power[best];
  return est;
}

std::vector<DoaEstimate> discard_forward(std::vector<DoaEstimate> estimates, double half_width) {
  std::erase_if(estimates, [&](const DoaEstimate& e) { return std::abs(e.phi_hat) <= half_width; });
  return estimates;
}

std::vector<DoaEstimate> srp_phat_track(const audio::AudioClip& clip, const audio::MicArray& array,
                                        const DoaConfig& config, double hop_seconds, int jobs) {
  if (!(config.segment_seconds > 0.0)) throw Error("doa: segment length must be positive");
  const double hop = hop_seconds > 0.0 ? hop_seconds : config.segment_seconds;
  std::vector<audio::Segment> segments;
  const double total = clip.duration();
  for (std::size_t i = 0;; ++i) {
    const double start = static_cast<double>(i) * hop;
    if (start + config.segment_seconds > total + 1e-9) break;
    segments.push_back({start, config.segment_seconds});
  }

  std::vector<std::optional<DoaEstimate>> slots(segments.size());
  parallel_for(segments.size(), jobs, [&](std::size_t i) { slots[i] = srp_phat(clip, segments[i], array, config); });

  std::vector<DoaEstimate> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

}  // namespace savvy::doa
