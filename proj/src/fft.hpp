#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace savvy::detail {

/// Real-input FFT of a fixed length backed by FFTW. Plans are created once per
/// length and shared; execution is thread-safe.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  /// `in` is zero-padded (or truncated) to size(); `out` receives bins() values.
  void forward(std::span<const double> in, std::vector<std::complex<double>>& out) const;

  /// Unnormalized inverse: forward followed by inverse scales by size().
  void inverse(const std::vector<std::complex<double>>& in, std::vector<double>& out) const;

 private:
  std::size_t n_;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

/// Process-wide cached transform for length `n`.
const RealFft& real_fft(std::size_t n);

std::size_t next_pow2(std::size_t n);

}  // namespace savvy::detail
