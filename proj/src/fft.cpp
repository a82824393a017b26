#include "fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>

namespace savvy::detail {

namespace {

// fftw's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  std::vector<double> real(n);
  std::vector<std::complex<double>> spec(n / 2 + 1);
  auto* cplx = reinterpret_cast<fftw_complex*>(spec.data());
  const int size = static_cast<int>(n);
  std::lock_guard lock(planner_mutex());
  forward_plan_ = fftw_plan_dft_r2c_1d(size, real.data(), cplx, FFTW_ESTIMATE | FFTW_UNALIGNED);
  inverse_plan_ = fftw_plan_dft_c2r_1d(size, cplx, real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

void RealFft::forward(std::span<const double> in, std::vector<std::complex<double>>& out) const {
  std::vector<double> buf(n_, 0.0);
  std::copy_n(in.begin(), std::min(in.size(), n_), buf.begin());
  out.assign(bins(), {});
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), buf.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(const std::vector<std::complex<double>>& in, std::vector<double>& out) const {
  // c2r overwrites its input.
  std::vector<std::complex<double>> scratch(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(bins()));
  out.assign(n_, 0.0);
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_),
                       reinterpret_cast<fftw_complex*>(scratch.data()), out.data());
}

const RealFft& real_fft(std::size_t n) {
  static std::mutex cache_mutex;
  static std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  std::lock_guard lock(cache_mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace savvy::detail
