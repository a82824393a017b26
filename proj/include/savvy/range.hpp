#pragma once

// Source range from the coherent-to-diffuse power ratio (CDR). The direct
// path falls off as 1/d^2 while the diffuse field does not, so D^2 * CDR is
// roughly a room constant K and d = sqrt(K / CDR).

#include "savvy/audio.hpp"

#include <complex>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace savvy::range {

struct WelchConfig {
  int segment_length = 1536;
  double overlap = 0.5;
  double band_low = 500.0;
  double band_high = 2000.0;

  /// Throws Error on a bad overlap, band or segment length.
  void validate(int sample_rate) const;
};

struct CdrConfig {
  WelchConfig welch;
  double max_cdr = 1e6;
  /// Segment RMS below this is treated as silence.
  double energy_floor = 1e-6;
};

struct CdrFrame {
  double t = 0.0;
  double cdr = 0.0;
};

/// Coherence of an ideal spherically isotropic field for spacing `d` meters.
double diffuse_coherence(double freq_hz, double d, double c);

/// DoA-independent CDR from measured coherence `gamma_x` and the diffuse
/// model `gamma_n` (Schwarz & Kellermann). Not clipped.
double cdr_from_coherence(std::complex<double> gamma_x, double gamma_n);

/// Band- then pair-averaged CDR of one segment. Throws UndefinedCdrError for a
/// silent segment and Error when the segment holds fewer than two Welch windows.
CdrFrame estimate_cdr(const audio::AudioClip& clip, const audio::Segment& segment,
                      const audio::MicArray& array, const CdrConfig& config = {});

struct CalibrationSample {
  double distance = 0.0;
  double cdr = 0.0;
};

struct KConfig {
  /// DBSCAN radius as a fraction of the median product; ignored when
  /// `eps` is set.
  double eps_fraction = 0.25;
  std::optional<double> eps;
  std::size_t min_pts = 3;
};

struct RangeCalibration {
  double k = 0.0;
  std::size_t inlier_count = 0;
  std::size_t sample_count = 0;
};

/// K = mean of the dominant DBSCAN cluster of D^2 * cdr. Samples with
/// cdr <= 0 are ignored. Throws CalibrationError with fewer than three usable
/// samples or no cluster.
RangeCalibration calibrate_k(std::span<const CalibrationSample> samples, const KConfig& config = {});

/// sqrt(K / cdr); nullopt when cdr <= 0.
std::optional<double> distance_from_cdr(double cdr, const RangeCalibration& calib);

nlohmann::json to_json(const RangeCalibration& calib);
RangeCalibration calibration_from_json(const nlohmann::json& j);

}  // namespace savvy::range
