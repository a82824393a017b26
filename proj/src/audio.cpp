#include "savvy/audio.hpp"

#include "savvy/errors.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace savvy::audio {

void MicArray::validate() const {
  if (positions.size() < 2) throw Error("mic array needs at least two microphones");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      if ((positions[i] - positions[j]).norm() < 1e-12) {
        throw Error("mic array: microphones " + std::to_string(i) + " and " + std::to_string(j) +
                    " share a position");
      }
    }
  }
  if (!(c > 0.0)) throw Error("mic array: speed of sound must be positive");
  if (forward.norm() < 1e-12 || right.norm() < 1e-12) throw Error("mic array: zero axis");
  if (std::abs(forward.normalized().dot(right.normalized())) > 1e-9) {
    throw Error("mic array: forward and right axes must be orthogonal");
  }
}

Eigen::Vector3d MicArray::direction(double phi_deg) const {
  const double phi = phi_deg * 3.14159265358979323846 / 180.0;
  return std::cos(phi) * forward.normalized() + std::sin(phi) * right.normalized();
}

MicArray MicArray::subset(const std::vector<std::size_t>& indices) const {
  MicArray out = *this;
  out.positions.clear();
  for (auto i : indices) {
    if (i >= positions.size()) throw Error("mic index " + std::to_string(i) + " out of range");
    out.positions.push_back(positions[i]);
  }
  return out;
}

MicArray aria_array() {
  MicArray a;
  a.positions = {
      {0.05, -0.04, 0.00},    // 0 right-front-bottom
      {-0.005, 0.00, 0.00},   // 1 nose bridge
      {-0.05, -0.04, 0.00},   // 2 left-front-bottom
      {-0.07, 0.00, 0.00},    // 3 far-left-up
      {0.07, 0.00, 0.00},     // 4 far-right-up
      {-0.07, 0.00, -0.10},   // 5 rear left
      {0.07, 0.00, -0.10},    // 6 rear right
  };
  return a;
}

nlohmann::json to_json(const MicArray& array) {
  nlohmann::json j;
  j["speed_of_sound"] = array.c;
  j["forward_axis"] = {array.forward.x(), array.forward.y(), array.forward.z()};
  j["right_axis"] = {array.right.x(), array.right.y(), array.right.z()};
  auto& mics = j["positions"] = nlohmann::json::array();
  for (const auto& p : array.positions) mics.push_back({p.x(), p.y(), p.z()});
  return j;
}

namespace {

Eigen::Vector3d vec3(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.size() != 3) throw ParseError(field, "expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

MicArray mic_array_from_json(const nlohmann::json& j) {
  MicArray a;
  try {
    if (j.contains("speed_of_sound")) a.c = j.at("speed_of_sound").get<double>();
    if (j.contains("forward_axis")) a.forward = vec3(j.at("forward_axis"), "forward_axis");
    if (j.contains("right_axis")) a.right = vec3(j.at("right_axis"), "right_axis");
    for (const auto& p : j.at("positions")) a.positions.push_back(vec3(p, "positions"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("mic array", e.what());
  }
  a.validate();
  return a;
}

MicArray read_mic_array_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mic array file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, e.what());
  }
  return mic_array_from_json(j);
}

void AudioClip::validate() const {
  if (sample_rate <= 0) throw Error("audio clip: sample rate must be positive");
  for (const auto& ch : channels) {
    if (ch.size() != num_samples()) throw Error("audio clip: channels differ in length");
  }
}

AudioClip AudioClip::select_channels(const std::vector<std::size_t>& indices) const {
  AudioClip out;
  out.sample_rate = sample_rate;
  for (auto i : indices) {
    if (i >= channels.size()) throw Error("channel index " + std::to_string(i) + " out of range");
    out.channels.push_back(channels[i]);
  }
  return out;
}

std::vector<std::vector<double>> AudioClip::extract(const Segment& segment) const {
  const auto first = static_cast<long long>(std::llround(segment.start * sample_rate));
  const auto count = static_cast<long long>(std::llround(segment.duration * sample_rate));
  if (first < 0 || count <= 0 || first + count > static_cast<long long>(num_samples())) {
    throw Error("segment [" + std::to_string(segment.start) + ", +" + std::to_string(segment.duration) +
                ") s lies outside the clip");
  }
  std::vector<std::vector<double>> out;
  out.reserve(channels.size());
  for (const auto& ch : channels) out.emplace_back(ch.begin() + first, ch.begin() + first + count);
  return out;
}

// --- WAV ---------------------------------------------------------------------

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::uint8_t* p) {
  T v{};
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open wav file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ParseError(path, "not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const auto size = read_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw ParseError(path, "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw ParseError(path, "short fmt chunk");
      format = read_le<std::uint16_t>(chunk + 8);
      channels = read_le<std::uint16_t>(chunk + 10);
      rate = read_le<std::uint32_t>(chunk + 12);
      bits = read_le<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible && size >= 40) {
        format = read_le<std::uint16_t>(chunk + 32);  // first two bytes of the sub-format GUID
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || rate == 0 || data == nullptr) throw ParseError(path, "missing fmt or data chunk");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame = bytes_per_sample * channels;
  if (frame == 0) throw ParseError(path, "zero-sized sample frame");
  const std::size_t n = data_size / frame;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.channels.assign(channels, std::vector<float>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* s = data + i * frame + c * bytes_per_sample;
      float v = 0.0f;
      if (format == kFormatFloat && bits == 32) {
        v = read_le<float>(s);
      } else if (format == kFormatFloat && bits == 64) {
        v = static_cast<float>(read_le<double>(s));
      } else if (format == kFormatPcm && bits == 16) {
        v = static_cast<float>(read_le<std::int16_t>(s)) / 32768.0f;
      } else if (format == kFormatPcm && bits == 24) {
        std::int32_t x = s[0] | (s[1] << 8) | (s[2] << 16);
        if (x & 0x800000) x |= ~0xFFFFFF;
        v = static_cast<float>(x) / 8388608.0f;
      } else if (format == kFormatPcm && bits == 32) {
        v = static_cast<float>(static_cast<double>(read_le<std::int32_t>(s)) / 2147483648.0);
      } else {
        throw ParseError(path, "unsupported sample format (" + std::to_string(format) + ", " +
                                   std::to_string(bits) + " bits)");
      }
      clip.channels[c][i] = v;
    }
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  clip.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write wav file: " + path);
  const auto channels = static_cast<std::uint16_t>(clip.num_channels());
  const auto n = static_cast<std::uint32_t>(clip.num_samples());
  const std::uint32_t data_size = n * channels * 4u;

  out.write("RIFF", 4);
  put_le<std::uint32_t>(out, 4 + (8 + 18) + (8 + data_size));
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_le<std::uint32_t>(out, 18);
  put_le<std::uint16_t>(out, kFormatFloat);
  put_le<std::uint16_t>(out, channels);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * channels * 4u);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(channels * 4u));
  put_le<std::uint16_t>(out, 32);
  put_le<std::uint16_t>(out, 0);
  out.write("data", 4);
  put_le<std::uint32_t>(out, data_size);

  std::vector<float> interleaved(static_cast<std::size_t>(n) * channels);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) interleaved[i * channels + c] = clip.channels[c][i];
  }
  out.write(reinterpret_cast<const char*>(interleaved.data()),
            static_cast<std::streamsize>(interleaved.size() * sizeof(float)));
  if (!out) throw Error("failed writing wav file: " + path);
}

}  // namespace savvy::audio
