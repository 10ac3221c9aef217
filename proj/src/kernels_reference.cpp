// Serial loop-nest versions of the kernels. Slow on purpose; they exist to
// check the parallel kernels and as the benchmark baseline.

#include <cmath>
#include <cstddef>

#include "branchgan/kernels.hpp"

namespace branchgan::kernels::reference {

void linear_forward(std::span<const float> x, std::span<const float> w, std::span<const float> b,
                    std::span<float> y, int batch, int in, int out) {
  for (int n = 0; n < batch; ++n) {
    for (int o = 0; o < out; ++o) {
      double acc = b.empty() ? 0.0 : b[o];
      for (int i = 0; i < in; ++i) acc += static_cast<double>(w[o * in + i]) * x[n * in + i];
      y[n * out + o] = static_cast<float>(acc);
    }
  }
}

void linear_backward_data(std::span<const float> dy, std::span<const float> w, std::span<float> dx,
                          int batch, int in, int out) {
  for (int n = 0; n < batch; ++n) {
    for (int i = 0; i < in; ++i) {
      double acc = 0.0;
      for (int o = 0; o < out; ++o) acc += static_cast<double>(w[o * in + i]) * dy[n * out + o];
      dx[n * in + i] = static_cast<float>(acc);
    }
  }
}

void linear_backward_weight(std::span<const float> x, std::span<const float> dy, std::span<float> dw,
                            std::span<float> db, int batch, int in, int out) {
  for (int o = 0; o < out; ++o) {
    for (int i = 0; i < in; ++i) {
      double acc = dw[o * in + i];
      for (int n = 0; n < batch; ++n) acc += static_cast<double>(dy[n * out + o]) * x[n * in + i];
      dw[o * in + i] = static_cast<float>(acc);
    }
    if (!db.empty()) {
      double acc = db[o];
      for (int n = 0; n < batch; ++n) acc += dy[n * out + o];
      db[o] = static_cast<float>(acc);
    }
  }
}

namespace {

inline std::size_t xi(int n, int c, int h, int w, int C, int H, int W) {
  return ((static_cast<std::size_t>(n) * C + c) * H + h) * W + w;
}

}  // namespace

void conv2d_forward(std::span<const float> x, std::span<const float> w, std::span<const float> b,
                    std::span<float> y, int batch, int cin, int cout, const ConvGeometry& g) {
  const int k = g.kernel;
  for (int n = 0; n < batch; ++n)
    for (int co = 0; co < cout; ++co)
      for (int oh = 0; oh < g.out_h; ++oh)
        for (int ow = 0; ow < g.out_w; ++ow) {
          double acc = b.empty() ? 0.0 : b[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * g.stride + kh - g.pad_top;
                const int iw = ow * g.stride + kw - g.pad_left;
                if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
                acc += static_cast<double>(w[((co * cin + ci) * k + kh) * k + kw]) *
                       x[xi(n, ci, ih, iw, cin, g.in_h, g.in_w)];
              }
          y[xi(n, co, oh, ow, cout, g.out_h, g.out_w)] = static_cast<float>(acc);
        }
}

void conv2d_backward_data(std::span<const float> dy, std::span<const float> w, std::span<float> dx,
                          int batch, int cin, int cout, const ConvGeometry& g) {
  const int k = g.kernel;
  for (std::size_t i = 0; i < static_cast<std::size_t>(batch) * cin * g.in_h * g.in_w; ++i) dx[i] = 0.0f;
  for (int n = 0; n < batch; ++n)
    for (int co = 0; co < cout; ++co)
      for (int oh = 0; oh < g.out_h; ++oh)
        for (int ow = 0; ow < g.out_w; ++ow) {
          const float gy = dy[xi(n, co, oh, ow, cout, g.out_h, g.out_w)];
          for (int ci = 0; ci < cin; ++ci)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * g.stride + kh - g.pad_top;
                const int iw = ow * g.stride + kw - g.pad_left;
                if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
                dx[xi(n, ci, ih, iw, cin, g.in_h, g.in_w)] +=
                    w[((co * cin + ci) * k + kh) * k + kw] * gy;
              }
        }
}

void conv2d_backward_weight(std::span<const float> x, std::span<const float> dy, std::span<float> dw,
                            std::span<float> db, int batch, int cin, int cout, const ConvGeometry& g) {
  const int k = g.kernel;
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci)
      for (int kh = 0; kh < k; ++kh)
        for (int kw = 0; kw < k; ++kw) {
          double acc = dw[((co * cin + ci) * k + kh) * k + kw];
          for (int n = 0; n < batch; ++n)
            for (int oh = 0; oh < g.out_h; ++oh)
              for (int ow = 0; ow < g.out_w; ++ow) {
                const int ih = oh * g.stride + kh - g.pad_top;
                const int iw = ow * g.stride + kw - g.pad_left;
                if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
                acc += static_cast<double>(dy[xi(n, co, oh, ow, cout, g.out_h, g.out_w)]) *
                       x[xi(n, ci, ih, iw, cin, g.in_h, g.in_w)];
              }
          dw[((co * cin + ci) * k + kh) * k + kw] = static_cast<float>(acc);
        }
    if (!db.empty()) {
      double acc = db[co];
      for (int n = 0; n < batch; ++n)
        for (int oh = 0; oh < g.out_h; ++oh)
          for (int ow = 0; ow < g.out_w; ++ow) acc += dy[xi(n, co, oh, ow, cout, g.out_h, g.out_w)];
      db[co] = static_cast<float>(acc);
    }
  }
}

void instance_norm_forward(std::span<const float> x, std::span<const float> scale,
                           std::span<const float> offset, std::span<float> y,
                           std::span<float> x_hat, std::span<float> inv_std, int batch,
                           int channels, int plane, float eps) {
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
      double mean = 0.0;
      for (int p = 0; p < plane; ++p) mean += x[base + p];
      mean /= plane;
      double var = 0.0;
      for (int p = 0; p < plane; ++p) var += (x[base + p] - mean) * (x[base + p] - mean);
      var /= plane;
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[n * channels + c] = static_cast<float>(inv);
      for (int p = 0; p < plane; ++p) {
        const double xh = (x[base + p] - mean) * inv;
        x_hat[base + p] = static_cast<float>(xh);
        y[base + p] = static_cast<float>(scale[c] * xh + offset[c]);
      }
    }
}

void instance_norm_backward(std::span<const float> dy, std::span<const float> x_hat,
                            std::span<const float> inv_std, std::span<const float> scale,
                            std::span<float> dx, std::span<float> dscale, std::span<float> doffset,
                            int batch, int channels, int plane) {
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
      double sg = 0.0, sgx = 0.0;
      for (int p = 0; p < plane; ++p) {
        sg += static_cast<double>(dy[base + p]) * scale[c];
        sgx += static_cast<double>(dy[base + p]) * scale[c] * x_hat[base + p];
      }
      for (int p = 0; p < plane; ++p) {
        const double gh = static_cast<double>(dy[base + p]) * scale[c];
        dx[base + p] = static_cast<float>(inv_std[n * channels + c] *
                                          (gh - sg / plane - x_hat[base + p] * sgx / plane));
      }
      if (!dscale.empty() || !doffset.empty()) {
        double ds = 0.0, dof = 0.0;
        for (int p = 0; p < plane; ++p) {
          ds += static_cast<double>(dy[base + p]) * x_hat[base + p];
          dof += dy[base + p];
        }
        if (!dscale.empty()) dscale[c] += static_cast<float>(ds);
        if (!doffset.empty()) doffset[c] += static_cast<float>(dof);
      }
    }
}

}  // namespace branchgan::kernels::reference
