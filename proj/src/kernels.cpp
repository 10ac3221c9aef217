#include "branchgan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace branchgan {

ConvGeometry same_conv_geometry(int in_h, int in_w, int kernel, int stride) {
  ConvGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.kernel = kernel;
  g.stride = stride;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const int pad_h = std::max((g.out_h - 1) * stride + kernel - in_h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + kernel - in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

namespace kernels {
namespace {

// Fixed-order dot product with four partial sums.
inline float dot(const float* a, const float* b, int n) {
  float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(float a, const float* x, float* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

// cols[(ci*K + kh)*K + kw][oh*Wo + ow]
void im2col(const float* x, float* cols, int cin, const ConvGeometry& g) {
  const int k = g.kernel;
  const int plane_out = g.out_h * g.out_w;
  for (int ci = 0; ci < cin; ++ci) {
    const float* xc = x + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        float* row = cols + (static_cast<std::size_t>(ci * k + kh) * k + kw) * plane_out;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride + kh - g.pad_top;
          float* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.in_h) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = xc + static_cast<std::size_t>(ih) * g.in_w;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride + kw - g.pad_left;
            dst[ow] = (iw >= 0 && iw < g.in_w) ? src[iw] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, float* x, int cin, const ConvGeometry& g) {
  const int k = g.kernel;
  const int plane_out = g.out_h * g.out_w;
  for (int ci = 0; ci < cin; ++ci) {
    float* xc = x + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const float* row = cols + (static_cast<std::size_t>(ci * k + kh) * k + kw) * plane_out;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride + kh - g.pad_top;
          if (ih < 0 || ih >= g.in_h) continue;
          float* dst = xc + static_cast<std::size_t>(ih) * g.in_w;
          const float* src = row + oh * g.out_w;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride + kw - g.pad_left;
            if (iw >= 0 && iw < g.in_w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

void linear_forward(std::span<const float> x, std::span<const float> w, std::span<const float> b,
                    std::span<float> y, int batch, int in, int out) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < batch; ++n) {
    for (int o = 0; o < out; ++o) {
      const float bias = b.empty() ? 0.0f : b[o];
      y[static_cast<std::size_t>(n) * out + o] =
          bias + dot(w.data() + static_cast<std::size_t>(o) * in,
                     x.data() + static_cast<std::size_t>(n) * in, in);
    }
  }
}

void linear_backward_data(std::span<const float> dy, std::span<const float> w, std::span<float> dx,
                          int batch, int in, int out) {
#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    float* dxn = dx.data() + static_cast<std::size_t>(n) * in;
    std::fill(dxn, dxn + in, 0.0f);
    for (int o = 0; o < out; ++o) {
      axpy(dy[static_cast<std::size_t>(n) * out + o], w.data() + static_cast<std::size_t>(o) * in,
           dxn, in);
    }
  }
}

void linear_backward_weight(std::span<const float> x, std::span<const float> dy, std::span<float> dw,
                            std::span<float> db, int batch, int in, int out) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out; ++o) {
    float* row = dw.data() + static_cast<std::size_t>(o) * in;
    for (int n = 0; n < batch; ++n) {
      axpy(dy[static_cast<std::size_t>(n) * out + o], x.data() + static_cast<std::size_t>(n) * in,
           row, in);
    }
    if (!db.empty()) {
      float acc = db[o];
      for (int n = 0; n < batch; ++n) acc += dy[static_cast<std::size_t>(n) * out + o];
      db[o] = acc;
    }
  }
}

void conv2d_forward(std::span<const float> x, std::span<const float> w, std::span<const float> b,
                    std::span<float> y, int batch, int cin, int cout, const ConvGeometry& g) {
  const int rows = cin * g.kernel * g.kernel;
  const int plane_out = g.out_h * g.out_w;
  const std::size_t in_stride = static_cast<std::size_t>(cin) * g.in_h * g.in_w;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * plane_out;
#pragma omp parallel
  {
    std::vector<float> cols(static_cast<std::size_t>(rows) * plane_out);
#pragma omp for schedule(static)
    for (int n = 0; n < batch; ++n) {
      im2col(x.data() + n * in_stride, cols.data(), cin, g);
      float* yn = y.data() + n * out_stride;
      for (int co = 0; co < cout; ++co) {
        float* yrow = yn + static_cast<std::size_t>(co) * plane_out;
        std::fill(yrow, yrow + plane_out, b.empty() ? 0.0f : b[co]);
        const float* wrow = w.data() + static_cast<std::size_t>(co) * rows;
        for (int r = 0; r < rows; ++r) {
          axpy(wrow[r], cols.data() + static_cast<std::size_t>(r) * plane_out, yrow, plane_out);
        }
      }
    }
  }
}

void conv2d_backward_data(std::span<const float> dy, std::span<const float> w, std::span<float> dx,
                          int batch, int cin, int cout, const ConvGeometry& g) {
  const int rows = cin * g.kernel * g.kernel;
  const int plane_out = g.out_h * g.out_w;
  const std::size_t in_stride = static_cast<std::size_t>(cin) * g.in_h * g.in_w;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * plane_out;
#pragma omp parallel
  {
    std::vector<float> cols(static_cast<std::size_t>(rows) * plane_out);
#pragma omp for schedule(static)
    for (int n = 0; n < batch; ++n) {
      std::fill(cols.begin(), cols.end(), 0.0f);
      const float* dyn = dy.data() + n * out_stride;
      for (int co = 0; co < cout; ++co) {
        const float* wrow = w.data() + static_cast<std::size_t>(co) * rows;
        const float* dyrow = dyn + static_cast<std::size_t>(co) * plane_out;
        for (int r = 0; r < rows; ++r) {
          axpy(wrow[r], dyrow, cols.data() + static_cast<std::size_t>(r) * plane_out, plane_out);
        }
      }
      float* dxn = dx.data() + n * in_stride;
      std::fill(dxn, dxn + in_stride, 0.0f);
      col2im_add(cols.data(), dxn, cin, g);
    }
  }
}

void conv2d_backward_weight(std::span<const float> x, std::span<const float> dy, std::span<float> dw,
                            std::span<float> db, int batch, int cin, int cout, const ConvGeometry& g) {
  const int rows = cin * g.kernel * g.kernel;
  const int plane_out = g.out_h * g.out_w;
  const std::size_t in_stride = static_cast<std::size_t>(cin) * g.in_h * g.in_w;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * plane_out;
  const std::size_t cols_stride = static_cast<std::size_t>(rows) * plane_out;
  std::vector<float> cols(cols_stride * batch);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    im2col(x.data() + n * in_stride, cols.data() + n * cols_stride, cin, g);
  }
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    float* dwrow = dw.data() + static_cast<std::size_t>(co) * rows;
    for (int n = 0; n < batch; ++n) {
      const float* dyrow = dy.data() + n * out_stride + static_cast<std::size_t>(co) * plane_out;
      const float* cn = cols.data() + n * cols_stride;
      for (int r = 0; r < rows; ++r) {
        dwrow[r] += dot(dyrow, cn + static_cast<std::size_t>(r) * plane_out, plane_out);
      }
    }
    if (!db.empty()) {
      float acc = db[co];
      for (int n = 0; n < batch; ++n) {
        const float* dyrow = dy.data() + n * out_stride + static_cast<std::size_t>(co) * plane_out;
        for (int p = 0; p < plane_out; ++p) acc += dyrow[p];
      }
      db[co] = acc;
    }
  }
}

void instance_norm_forward(std::span<const float> x, std::span<const float> scale,
                           std::span<const float> offset, std::span<float> y,
                           std::span<float> x_hat, std::span<float> inv_std, int batch,
                           int channels, int plane, float eps) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
      double mean = 0.0;
      for (int p = 0; p < plane; ++p) mean += x[base + p];
      mean /= plane;
      double var = 0.0;
      for (int p = 0; p < plane; ++p) {
        const double d = x[base + p] - mean;
        var += d * d;
      }
      var /= plane;
      const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
      inv_std[static_cast<std::size_t>(n) * channels + c] = inv;
      const float m = static_cast<float>(mean);
      for (int p = 0; p < plane; ++p) {
        const float xh = (x[base + p] - m) * inv;
        x_hat[base + p] = xh;
        y[base + p] = scale[c] * xh + offset[c];
      }
    }
  }
}

void instance_norm_backward(std::span<const float> dy, std::span<const float> x_hat,
                            std::span<const float> inv_std, std::span<const float> scale,
                            std::span<float> dx, std::span<float> dscale, std::span<float> doffset,
                            int batch, int channels, int plane) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
      double sum_g = 0.0, sum_gx = 0.0;
      for (int p = 0; p < plane; ++p) {
        const double gh = static_cast<double>(dy[base + p]) * scale[c];
        sum_g += gh;
        sum_gx += gh * x_hat[base + p];
      }
      const double inv = inv_std[static_cast<std::size_t>(n) * channels + c];
      const double mean_g = sum_g / plane;
      const double mean_gx = sum_gx / plane;
      for (int p = 0; p < plane; ++p) {
        const double gh = static_cast<double>(dy[base + p]) * scale[c];
        dx[base + p] = static_cast<float>(inv * (gh - mean_g - x_hat[base + p] * mean_gx));
      }
    }
  }
  if (dscale.empty() && doffset.empty()) return;
  // Parameter gradients reduce over the batch in a fixed order.
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    float ds = dscale.empty() ? 0.0f : dscale[c];
    float dof = doffset.empty() ? 0.0f : doffset[c];
    for (int n = 0; n < batch; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
      for (int p = 0; p < plane; ++p) {
        ds += dy[base + p] * x_hat[base + p];
        dof += dy[base + p];
      }
    }
    if (!dscale.empty()) dscale[c] = ds;
    if (!doffset.empty()) doffset[c] = dof;
  }
}

}  // namespace kernels
}  // namespace branchgan
