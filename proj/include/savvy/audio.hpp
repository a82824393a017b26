#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace savvy::audio {

/// Microphone positions in the device frame plus the two device axes that span
/// the azimuth plane. Azimuth 0 is `forward`, +90 is `right`.
struct MicArray {
  std::vector<Eigen::Vector3d> positions;
  Eigen::Vector3d forward{0.0, 0.0, 1.0};
  Eigen::Vector3d right{1.0, 0.0, 0.0};
  double c = 343.0;

  std::size_t size() const noexcept { return positions.size(); }

  /// Throws Error when fewer than two mics, duplicate positions, c <= 0, or
  /// non-orthogonal axes.
  void validate() const;

  /// Unit vector at azimuth `phi_deg` in the device frame.
  Eigen::Vector3d direction(double phi_deg) const;

  /// Keeps the listed mic indices, in the given order.
  MicArray subset(const std::vector<std::size_t>& indices) const;
};

/// The seven-microphone glasses geometry (meters, device frame).
MicArray aria_array();

nlohmann::json to_json(const MicArray& array);
MicArray mic_array_from_json(const nlohmann::json& j);
MicArray read_mic_array_file(const std::string& path);

/// Analysis window inside a clip, in seconds.
struct Segment {
  double start = 0.0;
  double duration = 0.25;

  double center() const noexcept { return start + 0.5 * duration; }
};

/// Synchronized multi-channel samples.
struct AudioClip {
  int sample_rate = 48000;
  std::vector<std::vector<float>> channels;

  std::size_t num_channels() const noexcept { return channels.size(); }
  std::size_t num_samples() const noexcept { return channels.empty() ? 0 : channels.front().size(); }
  double duration() const noexcept {
    return static_cast<double>(num_samples()) / static_cast<double>(sample_rate);
  }

  /// Throws Error unless every channel has the same length and the rate is
  /// positive.
  void validate() const;

  AudioClip select_channels(const std::vector<std::size_t>& indices) const;

  /// Copies one segment of every channel as double samples. Throws Error when
  /// the segment falls outside the clip.
  std::vector<std::vector<double>> extract(const Segment& segment) const;
};

/// Reads 16/24/32-bit PCM or 32/64-bit float WAV (plain or extensible).
AudioClip read_wav(const std::string& path);

/// Writes 32-bit IEEE float WAV.
void write_wav(const std::string& path, const AudioClip& clip);

}  // namespace savvy::audio
