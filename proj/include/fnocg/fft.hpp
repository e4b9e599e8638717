#pragma once

#include "fnocg/common.hpp"

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

namespace fnocg {

/// Real <-> half-complex transforms of `channels` interleaved signals of
/// length n. Real data is laid out channel-fastest (element (c, i) at
/// c + i * channels), matching a column-major channels x n Eigen block, and
/// spectra use the same layout with n/2+1 columns.
///
/// Plans are created with FFTW_UNALIGNED so they may run on any buffers.
class BatchedRealFft {
 public:
  BatchedRealFft(int n, int channels) : n_(n), channels_(channels) {
    require(n >= 2 && channels >= 1, "BatchedRealFft: bad dimensions");
    // The FFTW planner is not reentrant.
    static std::mutex planner_mutex;
    const std::lock_guard<std::mutex> lock(planner_mutex);
    std::vector<double> real(static_cast<std::size_t>(n) * channels);
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(n / 2 + 1) * channels);
    auto* cbuf = reinterpret_cast<fftw_complex*>(spec.data());
    const int dims[1] = {n};
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_.reset(fftw_plan_many_dft_r2c(1, dims, channels, real.data(), nullptr, channels, 1, cbuf,
                                          nullptr, channels, 1, flags));
    inverse_.reset(fftw_plan_many_dft_c2r(1, dims, channels, cbuf, nullptr, channels, 1, real.data(),
                                          nullptr, channels, 1, flags | FFTW_DESTROY_INPUT));
    if (!forward_ || !inverse_) throw NumericalError("BatchedRealFft: FFTW planning failed");
  }

  int size() const { return n_; }
  int channels() const { return channels_; }
  int spectrum_length() const { return n_ / 2 + 1; }

  /// Unnormalized forward transform; `in` is preserved.
  void forward(const double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(forward_.get(), const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
  }

  /// Unnormalized inverse (no 1/n); overwrites `in`.
  void inverse(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(inverse_.get(), reinterpret_cast<fftw_complex*>(in), out);
  }

 private:
  struct PlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
  };
  int n_;
  int channels_;
  std::unique_ptr<fftw_plan_s, PlanDeleter> forward_;
  std::unique_ptr<fftw_plan_s, PlanDeleter> inverse_;
};

/// Per-thread plan cache keyed by (n, channels).
inline const BatchedRealFft& cached_fft(int n, int channels) {
  thread_local std::map<std::pair<int, int>, std::unique_ptr<BatchedRealFft>> cache;
  auto& slot = cache[{n, channels}];
  if (!slot) slot = std::make_unique<BatchedRealFft>(n, channels);
  return *slot;
}

}  // namespace fnocg
