#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace vt {

// Real-to-complex FFT of a fixed size, backed by FFTW. Plans are created with
// FFTW_ESTIMATE so results do not depend on run-time measurements. One
// instance must not be used from several threads at once; use fft_for().
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }

  // `in` has size() samples (shorter input is zero-padded); `out` receives
  // size()/2 + 1 bins.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);

  // Inverse of forward(), unnormalized (result is scaled by size()).
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_;
  void* spectrum_;
  void* forward_plan_;
  void* inverse_plan_;
};

// Per-thread cached transform of size n.
RealFft& fft_for(std::size_t n);

}  // namespace vt
