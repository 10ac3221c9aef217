#pragma once

// Minimal raster charts for the static report figures; the CSV written next
// to each figure carries the exact numbers.

#include <string>
#include <vector>

#include "branchgan/tensor.hpp"

namespace branchgan::plot {

struct Series {
  std::vector<double> values;
  float rgb[3] = {0.2f, 0.4f, 0.8f};
};

/// Polyline chart: one point per x index, y auto-scaled from 0.
Image line_chart(const std::vector<Series>& series, int width = 480, int height = 320);

/// Histogram of `values` with `bins` bins over [lo, hi].
Image histogram(const std::vector<double>& values, int bins, double lo, double hi, int width = 480,
                int height = 320);

/// Distinct colour for series i.
Series colored(std::vector<double> values, int i);

}  // namespace branchgan::plot
