#pragma once

// Thin RAII wrapper over FFTW for 2-D complex transforms of small planes.
// Plans are cached per (height, width, direction) behind a mutex; execution
// uses the new-array interface and is safe from concurrent threads.

#include <complex>
#include <cstddef>
#include <memory>

namespace branchgan::detail {

struct FftwDeleter {
  void operator()(std::complex<double>* p) const;
};

using FftBuffer = std::unique_ptr<std::complex<double>[], FftwDeleter>;

FftBuffer fft_alloc(std::size_t count);

/// In-place 2-D DFT of a row-major height x width plane. The inverse is
/// unnormalized (caller divides by height * width).
void fft2d(std::complex<double>* data, int height, int width, bool inverse);

}  // namespace branchgan::detail
