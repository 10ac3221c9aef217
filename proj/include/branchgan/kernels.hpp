#pragma once

// Compute kernels used by the networks. Everything in `branchgan::kernels`
// is OpenMP-parallel; `branchgan::kernels::reference` holds plain serial
// loop nests with identical signatures that the tests and the benchmark
// compare against.
//
// Layouts: activations NCHW, convolution weights [out][in][k][k], linear
// weights [out][in]. A transposed convolution is expressed as the adjoint of
// a strided convolution, so one geometry describes both directions.

#include <span>

namespace branchgan {

/// Geometry of a strided convolution mapping a (in_h, in_w) map to (out_h, out_w).
struct ConvGeometry {
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  int kernel = 5;
  int stride = 2;
  int pad_top = 0, pad_left = 0;

  bool operator==(const ConvGeometry&) const = default;
};

/// "SAME"-padded strided convolution geometry: out = ceil(in / stride).
ConvGeometry same_conv_geometry(int in_h, int in_w, int kernel = 5, int stride = 2);

namespace kernels {

// y[n][o] = b[o] + sum_i w[o][i] x[n][i]. `b` may be empty.
void linear_forward(std::span<const float> x, std::span<const float> w, std::span<const float> b,
                    std::span<float> y, int batch, int in, int out);
// dx[n][i] = sum_o w[o][i] dy[n][o]
void linear_backward_data(std::span<const float> dy, std::span<const float> w, std::span<float> dx,
                          int batch, int in, int out);
// dw[o][i] += sum_n dy[n][o] x[n][i]; db[o] += sum_n dy[n][o]. `db` may be empty.
// Accumulation over n starts from the existing value, so an all-zero input
// column leaves its gradient at +0 exactly.
void linear_backward_weight(std::span<const float> x, std::span<const float> dy, std::span<float> dw,
                            std::span<float> db, int batch, int in, int out);

void conv2d_forward(std::span<const float> x, std::span<const float> w, std::span<const float> b,
                    std::span<float> y, int batch, int cin, int cout, const ConvGeometry& g);
// Overwrites dx (adjoint of conv2d_forward without bias).
void conv2d_backward_data(std::span<const float> dy, std::span<const float> w, std::span<float> dx,
                          int batch, int cin, int cout, const ConvGeometry& g);
// Accumulates into dw / db. `db` may be empty.
void conv2d_backward_weight(std::span<const float> x, std::span<const float> dy, std::span<float> dw,
                            std::span<float> db, int batch, int cin, int cout, const ConvGeometry& g);

// Per (sample, channel) normalization over the spatial plane.
// Writes y, and the normalized values / inverse std needed by the backward pass.
void instance_norm_forward(std::span<const float> x, std::span<const float> scale,
                           std::span<const float> offset, std::span<float> y,
                           std::span<float> x_hat, std::span<float> inv_std, int batch,
                           int channels, int plane, float eps);
// Overwrites dx; accumulates into dscale / doffset when non-empty.
void instance_norm_backward(std::span<const float> dy, std::span<const float> x_hat,
                            std::span<const float> inv_std, std::span<const float> scale,
                            std::span<float> dx, std::span<float> dscale, std::span<float> doffset,
                            int batch, int channels, int plane);

namespace reference {

void linear_forward(std::span<const float> x, std::span<const float> w, std::span<const float> b,
                    std::span<float> y, int batch, int in, int out);
void linear_backward_data(std::span<const float> dy, std::span<const float> w, std::span<float> dx,
                          int batch, int in, int out);
void linear_backward_weight(std::span<const float> x, std::span<const float> dy, std::span<float> dw,
                            std::span<float> db, int batch, int in, int out);
void conv2d_forward(std::span<const float> x, std::span<const float> w, std::span<const float> b,
                    std::span<float> y, int batch, int cin, int cout, const ConvGeometry& g);
void conv2d_backward_data(std::span<const float> dy, std::span<const float> w, std::span<float> dx,
                          int batch, int cin, int cout, const ConvGeometry& g);
void conv2d_backward_weight(std::span<const float> x, std::span<const float> dy, std::span<float> dw,
                            std::span<float> db, int batch, int cin, int cout, const ConvGeometry& g);
void instance_norm_forward(std::span<const float> x, std::span<const float> scale,
                           std::span<const float> offset, std::span<float> y,
                           std::span<float> x_hat, std::span<float> inv_std, int batch,
                           int channels, int plane, float eps);
void instance_norm_backward(std::span<const float> dy, std::span<const float> x_hat,
                            std::span<const float> inv_std, std::span<const float> scale,
                            std::span<float> dx, std::span<float> dscale, std::span<float> doffset,
                            int batch, int channels, int plane);

}  // namespace reference
}  // namespace kernels
}  // namespace branchgan
