// OpenMP kernels against the serial reference on shapes from the paper-scale
// generator (batch 20, 5x5 stride-2 convolutions).

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "branchgan/kernels.hpp"

namespace {

using namespace branchgan;

std::vector<float> filled(std::size_t n, unsigned seed) {
  std::mt19937 eng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(eng);
  return v;
}

template <bool Omp>
void BM_LinearForward(benchmark::State& state) {
  const int batch = 20, in = 150, out = static_cast<int>(state.range(0));
  const auto x = filled(static_cast<std::size_t>(batch) * in, 1);
  const auto w = filled(static_cast<std::size_t>(out) * in, 2);
  const auto b = filled(out, 3);
  std::vector<float> y(static_cast<std::size_t>(batch) * out);
  for (auto _ : state) {
    if constexpr (Omp) {
      kernels::linear_forward(x, w, b, y, batch, in, out);
    } else {
      kernels::reference::linear_forward(x, w, b, y, batch, in, out);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

// Transposed convolution cin -> cout channels from an (s/2)^2 to an s^2 map,
// run as the data adjoint of the strided convolution.
template <bool Omp>
void BM_DeconvForward(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0)), cin = static_cast<int>(state.range(1));
  const int cout = cin / 2, batch = 4;
  const ConvGeometry g = same_conv_geometry(s, s);
  const auto dy = filled(static_cast<std::size_t>(batch) * cin * g.out_h * g.out_w, 4);
  const auto w = filled(static_cast<std::size_t>(cin) * cout * 25, 5);
  std::vector<float> dx(static_cast<std::size_t>(batch) * cout * s * s);
  for (auto _ : state) {
    if constexpr (Omp) {
      kernels::conv2d_backward_data(dy, w, dx, batch, cout, cin, g);
    } else {
      kernels::reference::conv2d_backward_data(dy, w, dx, batch, cout, cin, g);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Omp>
void BM_ConvWeightGrad(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0)), cin = static_cast<int>(state.range(1));
  const int cout = cin * 2, batch = 4;
  const ConvGeometry g = same_conv_geometry(s, s);
  const auto x = filled(static_cast<std::size_t>(batch) * cin * s * s, 6);
  const auto dy = filled(static_cast<std::size_t>(batch) * cout * g.out_h * g.out_w, 7);
  std::vector<float> dw(static_cast<std::size_t>(cout) * cin * 25), db(cout);
  for (auto _ : state) {
    if constexpr (Omp) {
      kernels::conv2d_backward_weight(x, dy, dw, db, batch, cin, cout, g);
    } else {
      kernels::reference::conv2d_backward_weight(x, dy, dw, db, batch, cin, cout, g);
    }
    benchmark::DoNotOptimize(dw.data());
  }
}

template <bool Omp>
void BM_InstanceNorm(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0)), plane = static_cast<int>(state.range(1)), batch = 20;
  const std::size_t n = static_cast<std::size_t>(batch) * channels * plane;
  const auto x = filled(n, 8);
  const std::vector<float> scale(channels, 1.0f), offset(channels, 0.0f);
  std::vector<float> y(n), x_hat(n), inv_std(static_cast<std::size_t>(batch) * channels);
  for (auto _ : state) {
    if constexpr (Omp) {
      kernels::instance_norm_forward(x, scale, offset, y, x_hat, inv_std, batch, channels, plane, 1e-5f);
    } else {
      kernels::reference::instance_norm_forward(x, scale, offset, y, x_hat, inv_std, batch, channels, plane, 1e-5f);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_LinearForward<false>)->Name("linear_forward/reference")->Arg(8192)->Arg(32768);
BENCHMARK(BM_LinearForward<true>)->Name("linear_forward/omp")->Arg(8192)->Arg(32768);
BENCHMARK(BM_DeconvForward<false>)->Name("deconv_forward/reference")->Args({32, 256})->Args({64, 128});
BENCHMARK(BM_DeconvForward<true>)->Name("deconv_forward/omp")->Args({32, 256})->Args({64, 128});
BENCHMARK(BM_ConvWeightGrad<false>)->Name("conv_weight_grad/reference")->Args({32, 64})->Args({64, 32});
BENCHMARK(BM_ConvWeightGrad<true>)->Name("conv_weight_grad/omp")->Args({32, 64})->Args({64, 32});
BENCHMARK(BM_InstanceNorm<false>)->Name("instance_norm/reference")->Args({256, 256})->Args({64, 4096});
BENCHMARK(BM_InstanceNorm<true>)->Name("instance_norm/omp")->Args({256, 256})->Args({64, 4096});

BENCHMARK_MAIN();
