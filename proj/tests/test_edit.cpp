#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "branchgan/edit.hpp"
#include "helpers.hpp"

using namespace branchgan;

namespace {

GrayImage random_gray(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage g{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
  for (auto& v : g.values) v = rng.unit();
  return g;
}

double weighted_hog(const GrayImage& g, const HogSpec& spec, const std::vector<double>& r) {
  const auto d = hog(g, spec);
  double s = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) s += r[k] * d[k];
  return s;
}

}  // namespace

TEST_CASE("hog descriptor length and block normalization") {
  HogSpec spec;
  const auto g = random_gray(32, 32, 1);
  const auto d = hog(g, spec);
  CHECK(d.size() == spec.length(32, 32));
  CHECK(d.size() == 3u * 3u * 4u * 9u);
  for (std::size_t b = 0; b < d.size(); b += 36) {
    double ss = 0.0;
    for (int k = 0; k < 36; ++k) ss += d[b + k] * d[b + k];
    CHECK(std::sqrt(ss) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("hog of a constant image is zero") {
  GrayImage g{32, 32, std::vector<double>(32 * 32, 0.37)};
  for (double v : hog(g, HogSpec{})) CHECK(v == 0.0);
}

TEST_CASE("hog bins a horizontal ramp into the zero-degree bin only") {
  GrayImage g{16, 16, std::vector<double>(256)};
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) g.values[y * 16 + x] = 0.05 * x;
  const auto d = hog(g, HogSpec{});
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (k % 9 != 0) CHECK(d[k] == 0.0);
  }
  CHECK(d[0] > 0.0);
}

TEST_CASE("hog soft binning splits a gradient between neighbouring bins") {
  // Gradient at 10 degrees, halfway between the 0 and 20 degree bin centres.
  const double t = 10.0 * std::numbers::pi / 180.0;
  GrayImage g{24, 24, std::vector<double>(576)};
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) g.values[y * 24 + x] = 0.01 * (std::cos(t) * x + std::sin(t) * y);
  const auto d = hog(g, HogSpec{});
  // Cell (1,1) is away from the clamped border and sits in block (0,0) at offset 3 * 9.
  CHECK(d[27] == doctest::Approx(d[28]).epsilon(1e-9));
  CHECK(d[27] > 0.0);
  for (int b = 2; b < 9; ++b) CHECK(d[27 + b] == 0.0);
}

TEST_CASE("hog backward matches central finite differences") {
  HogSpec spec;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto g = random_gray(32, 32, 100 + seed);
    Rng rng(7 + seed);
    std::vector<double> r(spec.length(32, 32));
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);
    const auto analytic = hog_backward(g, spec, r);
    std::vector<double> fd(g.values.size());
    const double h = 1e-6;
    for (std::size_t p = 0; p < g.values.size(); ++p) {
      auto plus = g, minus = g;
      plus.values[p] += h;
      minus.values[p] -= h;
      fd[p] = (weighted_hog(plus, spec, r) - weighted_hog(minus, spec, r)) / (2 * h);
    }
    double scale = 0.0;
    for (double v : fd) scale = std::max(scale, std::abs(v));
    for (std::size_t p = 0; p < fd.size(); ++p) {
      const double a = analytic.values[p];
      const double den = std::max({std::abs(a), std::abs(fd[p]), 1e-6 * scale});
      worst = std::max(worst, std::abs(a - fd[p]) / den);
    }
  }
  MESSAGE("max relative error " << worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("colour term averages channels over masked pixels") {
  const Image base = testing::random_image(32, 32, 3, 5);
  EditConstraints c{base, Mask(32, 32, 0), std::nullopt};
  for (int i = 0; i < 40; ++i) c.mask.values[i * 7] = 1;
  const std::size_t masked = c.mask.count();
  Image off = base;
  // Pixel 0 is masked; move one channel by 0.5.
  off.at(0, 0, 1) = base.at(0, 0, 1) > 0.5f ? base.at(0, 0, 1) - 0.5f : base.at(0, 0, 1) + 0.5f;
  const EditConfig config;
  CHECK(edit_loss_image(base, c, config).total == 0.0);
  const double expected = std::abs(double(off.at(0, 0, 1)) - base.at(0, 0, 1)) / (3.0 * masked);
  CHECK(edit_loss_image(off, c, config).total == doctest::Approx(expected).epsilon(1e-12));
  // Changes outside the mask do not count.
  Image outside = base;
  outside.at(0, 1, 0) += 0.3f;
  CHECK(edit_loss_image(outside, c, config).total == 0.0);
}

TEST_CASE("colour term on a single-channel model is 0.5 / |M|") {
  const Image base = testing::random_image(16, 16, 1, 9);
  EditConstraints c{base, Mask(16, 16, 1), std::nullopt};
  Image off = base;
  off.pixels[3] = base.pixels[3] > 0.5f ? base.pixels[3] - 0.5f : base.pixels[3] + 0.5f;
  CHECK(edit_loss_image(off, c, EditConfig{}).total == doctest::Approx(0.5 / 256.0).epsilon(1e-6));
}

TEST_CASE("edge term vanishes for the image's own luminance and scales with alpha") {
  const Image im = testing::random_image(32, 32, 3, 11);
  auto cases = make_benchmark_cases(std::span(&im, 1), 0, 1);
  REQUIRE(cases.size() == 1);
  const auto& c = cases[0];
  CHECK_FALSE(c.color_active());
  EditConfig config;
  // Only float rounding of the stored edge map separates the two.
  CHECK(edit_loss_image(im, c, config).total < 1e-5);
  const Image other = testing::random_image(32, 32, 3, 12);
  const auto l10 = edit_loss_image(other, c, config);
  config.alpha = 2.0;
  const auto l2 = edit_loss_image(other, c, config);
  CHECK(l10.edge > 0.0);
  CHECK(l10.edge == doctest::Approx(l2.edge));
  CHECK(l10.total == doctest::Approx(10.0 * l10.edge));
  CHECK(l2.total == doctest::Approx(2.0 * l2.edge));
}

TEST_CASE("empty mask without an edge map is rejected") {
  const Image im = testing::random_image(32, 32, 3, 1);
  EditConstraints c{im, Mask(32, 32, 0), std::nullopt};
  CHECK_THROWS_AS(edit_loss_image(im, c, EditConfig{}), ConfigError);
  CHECK_THROWS_WITH_AS(edit_loss_image(im, c, EditConfig{}), doctest::Contains("invalid constraints"), ConfigError);
}

TEST_CASE("mismatched constraint shapes are rejected") {
  const auto g = build_generator(testing::tiny_config(), 3, 1);
  EditConstraints c{testing::random_image(16, 16, 3, 1), Mask(16, 16, 1), std::nullopt};
  CHECK_THROWS_AS(optimize_edit(g, nullptr, c, EditConfig{.init = EditInit::Random}, 1), ConfigError);
}

TEST_CASE("optimizer started at the generating latent stays at zero loss") {
  const auto g = build_generator(testing::tiny_config(), 3, 3);
  const auto layout = g.config().layout();
  const auto zstar = sample_latent(layout, SamplePolicy::all_uniform(3), 17);
  EditConstraints c{generate(g, zstar), Mask(32, 32, 1), std::nullopt};
  EditConfig config;
  config.init = EditInit::Given;
  config.initial_latent = zstar;
  config.steps = 5;
  const auto r = optimize_edit(g, nullptr, c, config, 1);
  CHECK(r.final_loss < 1e-6);
  CHECK(r.initial_loss == 0.0);
}

TEST_CASE("optimizer reduces the loss from a random start and respects the box") {
  const auto g = build_generator(testing::tiny_config(), 3, 4);
  const auto layout = g.config().layout();
  const auto zstar = sample_latent(layout, SamplePolicy::all_uniform(3), 23);
  EditConstraints c{generate(g, zstar), Mask(32, 32, 1), std::nullopt};
  EditConfig config;
  config.init = EditInit::Random;
  config.steps = 40;
  config.restarts = 2;
  const auto r = optimize_edit(g, nullptr, c, config, 5);
  CHECK(r.trace.size() == 41u);
  CHECK(r.final_loss <= r.trace.front());
  CHECK(r.final_loss <= r.initial_loss);
  CHECK(r.final_loss == doctest::Approx(*std::min_element(r.trace.begin(), r.trace.end())).epsilon(1e-5));
  for (double v : r.latent.flat()) CHECK(std::abs(v) <= 1.0);
  // Deterministic in the seed.
  const auto again = optimize_edit(g, nullptr, c, config, 5);
  CHECK(again.latent == r.latent);
}

TEST_CASE("encoder init requires an encoder") {
  const auto g = build_generator(testing::tiny_config(), 3, 4);
  EditConstraints c{testing::random_image(32, 32, 3, 1), Mask(32, 32, 1), std::nullopt};
  CHECK_THROWS_AS(optimize_edit(g, nullptr, c, EditConfig{}, 1), ConfigError);
  const auto e = build_encoder(g.config(), 3, 9);
  const auto r = optimize_edit(g, &e, c, EditConfig{.steps = 3, .restarts = 1}, 1);
  CHECK(r.initial_latent == encode(e, c.color));
}

TEST_CASE("benchmark pairs models over identical cases") {
  const auto g = build_generator(testing::tiny_config(), 3, 4);
  std::vector<Image> images;
  for (int i = 0; i < 3; ++i) images.push_back(testing::random_image(32, 32, 3, 40 + i));
  const auto cases = make_benchmark_cases(images, 2, 1);
  CHECK(cases[2].edge.has_value());
  std::vector<BenchmarkModel> models{{"a", &g, nullptr}, {"b", &g, nullptr}};
  EditConfig config{.steps = 3, .restarts = 1, .init = EditInit::Random};
  const auto r = benchmark_manifold(models, cases, config, 77);
  CHECK(r.case_losses.at("a") == r.case_losses.at("b"));
  CHECK(r.mean_loss.at("a") > 0.0);
}

TEST_CASE("edit case directories round-trip") {
  testing::TempDir dir("editcase");
  Image color(8, 8, 3);
  for (std::size_t i = 0; i < color.pixels.size(); ++i) color.pixels[i] = static_cast<float>(i % 256) / 255.0f;
  EditConstraints c{color, Mask(8, 8, 0), std::nullopt};
  c.mask.values[5] = 1;
  Image edge(8, 8, 1, 0.0f);
  edge.pixels[9] = 1.0f;
  c.edge = edge;
  EditConfig config;
  config.alpha = 3.5;
  config.init = EditInit::Given;
  config.initial_latent = BranchedLatent({{0.25, -0.5}});
  save_edit_case(dir.path, c, config);
  const auto [c2, config2] = load_edit_case(dir.path);
  CHECK(c2.color == c.color);
  CHECK(c2.mask == c.mask);
  REQUIRE(c2.edge.has_value());
  CHECK(*c2.edge == edge);
  CHECK(config2.alpha == 3.5);
  CHECK(config2.init == EditInit::Given);
  CHECK(*config2.initial_latent == *config.initial_latent);
}
