#pragma once

// Direction of arrival: GCC-PHAT pair correlations summed along the lags a
// candidate azimuth implies (SRP-PHAT), argmax over a 1-degree grid.

#include "savvy/audio.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <span>
#include <vector>

namespace savvy::doa {

enum class Window { kRectangular, kHann };

struct DoaGrid {
  double start = -180.0;
  double stop = 180.0;
  double step = 1.0;

  /// Throws Error unless step > 0 divides (stop - start).
  void validate() const;
  std::vector<double> angles() const;
};

struct DoaConfig {
  double segment_seconds = 0.25;
  DoaGrid grid;
  Window window = Window::kRectangular;
  /// Cross-spectrum magnitudes are floored at this fraction of their maximum.
  double phat_floor = 1e-12;
  /// Segments whose RMS (over all channels) is below this produce no estimate.
  double energy_floor = 1e-6;
  /// Half width of the forward band removed by discard_forward.
  double forward_band = 5.0;
};

/// Correlation by lag; index `lag + max_lag`. Positive lag: y lags x.
struct GccResult {
  std::vector<double> corr;
  int max_lag = 0;
  bool low_energy = false;

  double at(int lag) const { return corr[static_cast<std::size_t>(lag + max_lag)]; }
  /// Lag of the largest value (smallest lag on ties).
  int peak_lag() const;
  double peak() const;
};

GccResult gcc_phat(std::span<const double> x, std::span<const double> y, int max_lag,
                   const DoaConfig& config = {});

/// round(((p_m - p_n) . u(phi) / c) * fs): how many samples channel n lags
/// channel m for a far-field source at azimuth phi.
int expected_lag(std::size_t m, std::size_t n, double phi_deg, const audio::MicArray& array,
                 double sample_rate);

struct DoaEstimate {
  double t = 0.0;
  double phi_hat = 0.0;
  /// Steered response power over DoaGrid::angles().
  std::vector<double> power;
  double peak_power = 0.0;
};

/// Steered response power over the grid for one segment; nullopt when the
/// segment is below the energy gate or every pair is silent.
std::optional<DoaEstimate> srp_phat(const audio::AudioClip& clip, const audio::Segment& segment,
                                    const audio::MicArray& array, const DoaConfig& config = {});

/// Removes estimates with |phi_hat| <= half_width (inclusive band).
std::vector<DoaEstimate> discard_forward(std::vector<DoaEstimate> estimates, double half_width = 5.0);

/// Consecutive non-overlapping segments of `config.segment_seconds` with hop
/// `hop_seconds` (<= 0 means hop = segment). Silent segments are skipped.
/// `jobs` > 1 runs segments concurrently; output order is by time either way.
std::vector<DoaEstimate> srp_phat_track(const audio::AudioClip& clip, const audio::MicArray& array,
                                        const DoaConfig& config = {}, double hop_seconds = 0.0,
                                        int jobs = 1);

/// PNG line plot of one estimate's steered power over the grid, with the
/// peak marked and an optional true azimuth as a vertical line.
void plot_power_curve(const DoaEstimate& estimate, const DoaGrid& grid, const std::string& path,
                      std::optional<double> truth = std::nullopt, int size = 480);

}  // namespace savvy::doa
