#pragma once

#include <filesystem>
#include <string>

#include <cmath>
#include <numbers>

#include "branchgan/networks.hpp"
#include "branchgan/rng.hpp"
#include "branchgan/spectral.hpp"

namespace testing {

/// Three-stage 32x32 generator small enough for unit tests.
inline branchgan::NetConfig tiny_config(int stages = 3) {
  branchgan::NetConfig c;
  c.subvector_dims = std::vector<int>(stages, 4);
  c.base_resolution = {4, 4};
  c.stages = stages;
  c.channel_schedule.clear();
  for (int s = 0; s < stages; ++s) c.channel_schedule.push_back(16 >> s);
  return c;
}

inline branchgan::Image random_image(int h, int w, int c, std::uint64_t seed) {
  branchgan::Rng rng(seed);
  branchgan::Image im(h, w, c);
  for (auto& p : im.pixels) p = static_cast<float>(rng.unit());
  return im;
}

/// Unit-energy cosine on a 2-D DFT grid frequency (u, v) of an h x w plane.
inline std::vector<double> grid_cosine(int h, int w, int u, int v) {
  std::vector<double> s(static_cast<std::size_t>(h) * w);
  double energy = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double a = 2.0 * std::numbers::pi * (static_cast<double>(u) * y / h + static_cast<double>(v) * x / w);
      s[static_cast<std::size_t>(y) * w + x] = std::cos(a);
      energy += std::cos(a) * std::cos(a);
    }
  for (auto& x : s) x /= std::sqrt(energy);
  return s;
}

/// Linear stub on 64x64 single-channel images with layout {2, 2}:
///   G(z) = z0[0] S_low + z1[0] S_high + (z0[1] + z1[1]) S_mid
/// S_low sits at r = 1/32 and S_high at r = 0.6. S_mid has one component in
/// each of the middle three bands and is driven equally by both branches, so
/// those bands are defined and neutral in a per-sub-vector report.
struct LinearStub {
  static constexpr int kSize = 64;
  std::vector<double> low = grid_cosine(kSize, kSize, 1, 0);
  std::vector<double> high = grid_cosine(kSize, kSize, 15, 12);
  std::vector<double> mid;
  double scale = 1.0;

  LinearStub() {
    const auto a = grid_cosine(kSize, kSize, 3, 0);   // r = 0.094
    const auto b = grid_cosine(kSize, kSize, 0, 6);   // r = 0.19
    const auto c = grid_cosine(kSize, kSize, 8, 8);   // r = 0.35
    mid.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) mid[i] = (a[i] + b[i] + c[i]) / std::sqrt(3.0);
  }

  [[nodiscard]] branchgan::Image render(const branchgan::BranchedLatent& z) const {
    branchgan::Image im(kSize, kSize, 1);
    const double lo = z.subvector(0)[0], hi = z.subvector(1)[0];
    const double m = z.subvector(0)[1] + z.subvector(1)[1];
    for (std::size_t i = 0; i < im.pixels.size(); ++i)
      im.pixels[i] = static_cast<float>(scale * (lo * low[i] + hi * high[i] + m * mid[i]));
    return im;
  }

  [[nodiscard]] branchgan::ImageModel model() const {
    branchgan::ImageModel m;
    m.layout = branchgan::LatentLayout{{2, 2}};
    m.render = [this](std::span<const branchgan::BranchedLatent> zs) {
      std::vector<branchgan::Image> out;
      for (const auto& z : zs) out.push_back(render(z));
      return out;
    };
    return m;
  }
};

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("branchgan_test_" + tag + "_" + std::to_string(branchgan::splitmix64(
                                                  reinterpret_cast<std::uintptr_t>(this))));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing
