#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace branchgan::detail {

void FftwDeleter::operator()(std::complex<double>* p) const { fftw_free(p); }

FftBuffer fft_alloc(std::size_t count) {
  auto* p = static_cast<std::complex<double>*>(fftw_malloc(sizeof(std::complex<double>) * count));
  if (!p) throw std::bad_alloc();
  return FftBuffer(p);
}

namespace {

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

fftw_plan plan_for(int height, int width, bool inverse) {
  static std::map<std::tuple<int, int, bool>, fftw_plan> plans;
  std::lock_guard lock(plan_mutex());
  const auto key = std::make_tuple(height, width, inverse);
  if (auto it = plans.find(key); it != plans.end()) return it->second;
  FftBuffer scratch = fft_alloc(static_cast<std::size_t>(height) * width);
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.get());
  fftw_plan p = fftw_plan_dft_2d(height, width, buf, buf, inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
  plans.emplace(key, p);
  return p;
}

}  // namespace

void fft2d(std::complex<double>* data, int height, int width, bool inverse) {
  fftw_plan p = plan_for(height, width, inverse);
  auto* buf = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(p, buf, buf);
}

}  // namespace branchgan::detail
