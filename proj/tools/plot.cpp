#include "plot.hpp"

#include <algorithm>
#include <cmath>

namespace branchgan::plot {

namespace {

constexpr int kMargin = 24;

void put(Image& im, int x, int y, const float rgb[3]) {
  if (x < 0 || y < 0 || x >= im.width || y >= im.height) return;
  for (int c = 0; c < 3; ++c) im.at(y, x, c) = rgb[c];
}

void line(Image& im, int x0, int y0, int x1, int y1, const float rgb[3]) {
  const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  for (int i = 0; i <= steps; ++i) {
    const double t = steps == 0 ? 0.0 : static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int d = 0; d < 2; ++d) put(im, x, y + d, rgb);
  }
}

Image canvas(int width, int height) {
  Image im(height, width, 3, 1.0f);
  const float axis[3] = {0.0f, 0.0f, 0.0f};
  line(im, kMargin, height - kMargin, width - kMargin / 2, height - kMargin, axis);
  line(im, kMargin, kMargin / 2, kMargin, height - kMargin, axis);
  return im;
}

}  // namespace

Series colored(std::vector<double> values, int i) {
  static const float palette[][3] = {{0.85f, 0.2f, 0.15f}, {0.2f, 0.55f, 0.2f}, {0.15f, 0.35f, 0.85f},
                                     {0.8f, 0.55f, 0.1f},  {0.55f, 0.2f, 0.7f}, {0.1f, 0.6f, 0.65f}};
  Series s;
  s.values = std::move(values);
  std::copy(palette[i % 6], palette[i % 6] + 3, s.rgb);
  return s;
}

Image line_chart(const std::vector<Series>& series, int width, int height) {
  Image im = canvas(width, height);
  double ymax = 0.0;
  std::size_t n = 0;
  for (const auto& s : series) {
    for (double v : s.values) ymax = std::max(ymax, v);
    n = std::max(n, s.values.size());
  }
  if (ymax <= 0.0 || n == 0) return im;
  const double sx = n > 1 ? static_cast<double>(width - 2 * kMargin) / static_cast<double>(n - 1) : 0.0;
  const double sy = static_cast<double>(height - 2 * kMargin) / ymax;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const int x = kMargin + static_cast<int>(i * sx);
      const int y = height - kMargin - static_cast<int>(s.values[i] * sy);
      for (int dx = -2; dx <= 2; ++dx)
        for (int dy = -2; dy <= 2; ++dy) put(im, x + dx, y + dy, s.rgb);
      if (i + 1 < s.values.size()) {
        line(im, x, y, kMargin + static_cast<int>((i + 1) * sx),
             height - kMargin - static_cast<int>(s.values[i + 1] * sy), s.rgb);
      }
    }
  }
  return im;
}

Image histogram(const std::vector<double>& values, int bins, double lo, double hi, int width, int height) {
  Image im = canvas(width, height);
  if (values.empty() || bins < 1 || !(hi > lo)) return im;
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    const int b = std::clamp(static_cast<int>((v - lo) / (hi - lo) * bins), 0, bins - 1);
    ++counts[b];
  }
  const int cmax = *std::max_element(counts.begin(), counts.end());
  const double bw = static_cast<double>(width - 2 * kMargin) / bins;
  const float fill[3] = {0.3f, 0.45f, 0.75f};
  for (int b = 0; b < bins; ++b) {
    const int h = static_cast<int>(static_cast<double>(counts[b]) / cmax * (height - 2 * kMargin));
    for (int x = static_cast<int>(kMargin + b * bw) + 1; x < static_cast<int>(kMargin + (b + 1) * bw); ++x)
      for (int y = height - kMargin - h; y < height - kMargin; ++y) put(im, x, y, fill);
  }
  return im;
}

}  // namespace branchgan::plot
