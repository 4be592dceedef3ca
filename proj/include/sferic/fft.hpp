#pragma once

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace sferic::detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Real-to-complex / complex-to-real transform pair of a fixed size.
///
/// Buffers come from fftw_malloc so the chosen codelets (and therefore the
/// rounding) do not depend on caller allocation alignment.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    real_ = static_cast<double*>(fftw_malloc(sizeof(double) * n_));
    spec_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n_ / 2 + 1)));
    std::lock_guard lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec_, real_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(spec_);
  }

  std::size_t size() const noexcept { return n_; }

  // Zero-pads `x` to size() and returns bins 0..n/2.
  std::vector<std::complex<double>> forward(std::span<const double> x) {
    std::fill(real_, real_ + n_, 0.0);
    std::copy_n(x.begin(), std::min(x.size(), n_), real_);
    fftw_execute(fwd_);
    std::vector<std::complex<double>> out(n_ / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = {spec_[k][0], spec_[k][1]};
    return out;
  }

  // Inverse of forward(), including the 1/n normalization.
  std::vector<double> inverse(std::span<const std::complex<double>> bins) {
    for (std::size_t k = 0; k < n_ / 2 + 1; ++k) {
      spec_[k][0] = bins[k].real();
      spec_[k][1] = bins[k].imag();
    }
    fftw_execute(inv_);
    std::vector<double> out(real_, real_ + n_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& v : out) v *= scale;
    return out;
  }

 private:
  std::size_t n_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace sferic::detail
