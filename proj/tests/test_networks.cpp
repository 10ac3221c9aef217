#include <doctest.h>

#include <cmath>

#include "branchgan/config.hpp"
#include "branchgan/kernels.hpp"
#include "branchgan/networks.hpp"
#include "helpers.hpp"

using namespace branchgan;

namespace {

std::vector<BranchedLatent> latents(const NetConfig& c, int n, std::uint64_t seed, int active = -1) {
  std::vector<BranchedLatent> out;
  const int t = static_cast<int>(c.subvector_dims.size());
  const auto policy = active < 0 ? SamplePolicy::all_uniform(t) : SamplePolicy::active_prefix(t, active);
  for (int i = 0; i < n; ++i) out.push_back(sample_latent(c.layout(), policy, derive_seed(seed, {std::uint64_t(i)})));
  return out;
}

Shape4 last_output(const Sequential& s) { return s.output_shape(1); }

}  // namespace

TEST_CASE("resolution levels ceil-halve from the output") {
  const auto c = profile_defaults("paper400x300").net;
  CHECK(c.resolution(0) == Resolution{5, 7});
  CHECK(c.resolution(1) == Resolution{10, 13});
  CHECK(c.resolution(2) == Resolution{19, 25});
  CHECK(c.resolution(6) == Resolution{300, 400});
  const auto desk = profile_defaults("desk").net;
  CHECK(desk.resolution(1) == Resolution{8, 8});
  CHECK(desk.resolution(3) == Resolution{32, 32});
}

TEST_CASE("config validation") {
  auto c = testing::tiny_config();
  CHECK_NOTHROW(c.validate());
  c.channel_schedule.pop_back();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = testing::tiny_config();
  c.output_resolution = {33, 33};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = testing::tiny_config();
  CHECK_THROWS_AS(build_generator(c, 4, 0), ConfigError);
  CHECK_THROWS_AS(build_generator(c, 0, 0), ConfigError);
}

TEST_CASE("paper256 generator shapes") {
  const auto c = profile_defaults("paper256").net;
  const auto g = build_generator(c, 5, 1);
  CHECK(g.params().at("g.linear.weight").shape == std::vector<int>{32768, 150});
  const auto graph = g.graph();
  CHECK(last_output(graph) == Shape4{1, 3, 256, 256});
  std::vector<Shape4> deconv_out;
  for (const auto& l : graph.layers())
    if (l.kind == LayerKind::Deconv) deconv_out.push_back(l.out);
  REQUIRE(deconv_out.size() == 5u);
  CHECK(deconv_out[0] == Shape4{1, 256, 16, 16});
  CHECK(deconv_out[1] == Shape4{1, 128, 32, 32});
  CHECK(g.params().at("g.block1.deconv.weight").shape == std::vector<int>{512, 256, 5, 5});
}

TEST_CASE("paper400x300 generator reshapes to 5x7x512") {
  const auto c = profile_defaults("paper400x300").net;
  const auto g = build_generator(c, 6, 1);
  const auto graph = g.graph();
  CHECK(graph.layers().front().out == Shape4{1, 512, 5, 7});
  int deconvs = 0;
  for (const auto& l : graph.layers()) deconvs += l.kind == LayerKind::Deconv;
  CHECK(deconvs == 6);
  CHECK(last_output(graph) == Shape4{1, 3, 300, 400});
}

TEST_CASE("desk generator reaches 32x32") {
  const auto c = profile_defaults("desk").net;
  auto g = build_generator(c, 1, 3);
  CHECK(g.output_resolution() == Resolution{8, 8});
  g.grow(4);
  CHECK(g.output_resolution() == Resolution{16, 16});
  g.grow(5);
  CHECK(generate(g, latents(c, 1, 0)[0]).height == 32);
  CHECK_THROWS_AS(g.grow(6), ConfigError);
}

TEST_CASE("initialization follows the stated conventions") {
  const auto g = build_generator(testing::tiny_config(), 3, 11);
  for (const auto& [name, p] : g.params()) {
    if (name.ends_with(".bias") || name.ends_with(".offset")) {
      for (float v : p.values) CHECK(v == 0.0f);
    } else if (name.ends_with(".scale")) {
      for (float v : p.values) CHECK(v == 1.0f);
    } else {
      double mean = 0.0, sq = 0.0;
      for (float v : p.values) mean += v, sq += double(v) * v;
      mean /= p.values.size();
      const double sd = std::sqrt(sq / p.values.size() - mean * mean);
      CHECK(std::abs(mean) < 0.01);
      CHECK(sd == doctest::Approx(0.02).epsilon(0.25));
    }
  }
  CHECK(build_generator(testing::tiny_config(), 3, 11).params() == g.params());
  CHECK(build_generator(testing::tiny_config(), 3, 12).params() != g.params());
}

TEST_CASE("zero latent on a fresh generator gives 0.5 everywhere") {
  const auto c = testing::tiny_config();
  const auto g = build_generator(c, 3, 2);
  const auto im = generate(g, BranchedLatent::zeros(c.layout()));
  for (float v : im.pixels) CHECK(v == 0.5f);
}

TEST_CASE("generate is bounded and deterministic") {
  const auto c = testing::tiny_config();
  const auto g = build_generator(c, 3, 2);
  const auto zs = latents(c, 4, 8);
  const auto a = generate(g, zs), b = generate(g, zs);
  CHECK(a == b);
  for (const auto& im : a)
    for (float v : im.pixels) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK(generate(g, fuse(zs[0], zs[0], {0})) == a[0]);
  CHECK_THROWS_AS(generate(g, BranchedLatent::zeros(LatentLayout{{4, 4}})), ConfigError);
}

TEST_CASE("zero-fed branch columns get exactly zero gradient") {
  const auto c = testing::tiny_config();
  const auto g = build_generator(c, 3, 5);
  const auto zs = latents(c, 3, 1, 1);  // z1 and z2 zero
  Trace tr;
  const Tensor out = g.forward(g.latent_batch(zs), &tr);
  Tensor dout(out.shape());
  Rng rng(3);
  for (auto& v : dout.data()) v = static_cast<float>(rng.uniform(-1, 1));
  GradSet grads;
  g.graph().backward(g.params(), tr, dout, grads, g.param_names(), false);
  const auto& w = grads.at(Generator::first_linear_weight());
  const int in = c.layout().total();
  const int rows = static_cast<int>(w.size()) / in;
  for (int r = 0; r < rows; ++r) {
    for (int i = 0; i < in; ++i) {
      const float v = w[static_cast<std::size_t>(r) * in + i];
      if (c.layout().branch_of(i) == 0) continue;
      CHECK(std::bit_cast<std::uint32_t>(v) == 0u);
    }
  }
  bool any = false;
  for (int i = 0; i < 4; ++i) any |= w[i] != 0.0f;
  CHECK(any);
}

TEST_CASE("zero-fed columns are equivalent to deleted columns") {
  const auto c = testing::tiny_config();
  const auto g = build_generator(c, 1, 5);
  const auto& w = g.params().at("g.linear.weight");
  const auto& b = g.params().at("g.linear.bias");
  const int out = w.shape[0], in = w.shape[1];
  const auto z = latents(c, 1, 4, 2)[0];  // z2 frozen
  const auto flat = z.flat();
  std::vector<float> x(flat.begin(), flat.end());
  std::vector<float> y_full(out), y_cut(out);
  kernels::linear_forward(x, w.values, b.values, y_full, 1, in, out);

  const int keep = c.layout().offset(2);
  std::vector<float> w_cut(static_cast<std::size_t>(out) * keep);
  for (int o = 0; o < out; ++o)
    for (int i = 0; i < keep; ++i) w_cut[static_cast<std::size_t>(o) * keep + i] = w.values[static_cast<std::size_t>(o) * in + i];
  std::vector<float> x_cut(x.begin(), x.begin() + keep);
  kernels::linear_forward(x_cut, w_cut, b.values, y_cut, 1, keep, out);
  CHECK(y_full == y_cut);
}

TEST_CASE("instance norm maps an all-zero plane to zero") {
  const int n = 2, ch = 3, plane = 16;
  std::vector<float> x(n * ch * plane, 0.0f), y(x.size(), 1.0f), x_hat(x.size()), inv(n * ch);
  std::vector<float> scale(ch, 1.0f), offset(ch, 0.0f);
  kernels::instance_norm_forward(x, scale, offset, y, x_hat, inv, n, ch, plane, 1e-5f);
  for (float v : y) CHECK(v == 0.0f);
  for (float v : inv) CHECK(std::isfinite(v));
}

TEST_CASE("growing preserves parameters and the hidden function") {
  const auto c = testing::tiny_config();
  auto g = build_generator(c, 2, 9);
  const auto before = g.params();
  const auto zs = latents(c, 2, 7);
  const Tensor z = g.latent_batch(zs);
  const Tensor hidden = g.hidden_graph(1).forward(g.params(), z);
  const auto old_out = generate(g, zs);
  g.grow(10);
  for (const auto& [name, p] : before) {
    REQUIRE(g.params().count(name));
    CHECK(g.params().at(name) == p);
  }
  CHECK(g.params().size() > before.size());
  const Tensor after = g.hidden_graph(1).forward(g.params(), z);
  CHECK(std::equal(hidden.data().begin(), hidden.data().end(), after.data().begin(), after.data().end()));
  // The dormant head still renders the previous stage.
  const Tensor prev = g.graph(2).forward(g.params(), z);
  CHECK(to_image(prev, 0) == old_out[0]);
}

TEST_CASE("discriminator mirrors the generator") {
  const auto c = testing::tiny_config();
  for (int s = 1; s <= 3; ++s) {
    const auto g = build_generator(c, s, 1);
    const auto d = build_discriminator(c, s, 1);
    const auto images = generate(g, latents(c, 5, 2));
    CHECK(d.graph().input_shape(1) == g.graph().output_shape(1));
    CHECK(discriminate(d, images).size() == 5u);
  }
  auto d = build_discriminator(c, 1, 4);
  const auto before = d.params();
  d.grow(5);
  for (const auto& [name, p] : before) CHECK(d.params().at(name) == p);
  const std::vector<Image> wrong{Image(8, 8, 3)};
  CHECK_THROWS_AS(discriminate(d, wrong), ConfigError);
}

TEST_CASE("encoder output is a latent in the box") {
  const auto c = testing::tiny_config();
  const auto g = build_generator(c, 3, 1);
  const auto e = build_encoder(c, 3, 2);
  const auto zs = latents(c, 4, 3);
  const auto images = generate(g, zs);
  const auto back = encode(e, images);
  REQUIRE(back.size() == 4u);
  for (const auto& z : back) {
    CHECK(z.matches(c.layout()));
    for (double v : z.flat()) CHECK((v >= -1.0 && v <= 1.0));
  }
  for (const auto& [name, p] : e.params()) CHECK(name.starts_with("e."));
}

TEST_CASE("backward matches finite differences on the generator") {
  // Slope 1 makes the activation smooth so float differences are clean.
  auto c = testing::tiny_config(2);
  c.leaky_slope = 1.0f;
  const auto g = build_generator(c, 2, 21);
  const auto zs = latents(c, 2, 5);
  const Tensor z = g.latent_batch(zs);
  Rng rng(1);
  Tensor probe(g.forward(z).shape());
  for (auto& v : probe.data()) v = static_cast<float>(rng.uniform(-1, 1));
  auto objective = [&](const ParamSet& ps, const Tensor& input) {
    const Tensor out = g.graph().forward(ps, input);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += double(out.data()[i]) * probe.data()[i];
    return acc;
  };
  Trace tr;
  g.graph().forward(g.params(), z, &tr);
  GradSet grads;
  const Tensor dz = g.graph().backward(g.params(), tr, probe, grads, g.param_names(), true);

  const double h = 1e-2;
  for (int i : {0, 3, 6}) {
    Tensor zp = z, zm = z;
    zp.data()[i] += h;
    zm.data()[i] -= h;
    const double fd = (objective(g.params(), zp) - objective(g.params(), zm)) / (2 * h);
    CHECK(dz.data()[i] == doctest::Approx(fd).epsilon(0.02));
  }
  // Directional derivative along a random direction per tensor.
  for (const auto& [name, p] : g.params()) {
    std::vector<float> dir(p.values.size());
    for (auto& v : dir) v = static_cast<float>(rng.uniform(-1, 1));
    double analytic = 0.0;
    for (std::size_t k = 0; k < dir.size(); ++k) analytic += double(grads.at(name)[k]) * dir[k];
    const double hp = 1e-3;
    ParamSet pp = g.params(), pm = g.params();
    for (std::size_t k = 0; k < dir.size(); ++k) {
      pp.at(name).values[k] += static_cast<float>(hp * dir[k]);
      pm.at(name).values[k] -= static_cast<float>(hp * dir[k]);
    }
    const double fd = (objective(pp, z) - objective(pm, z)) / (2 * hp);
    INFO(name);
    // Absolute floor for biases that instance norm cancels (true gradient 0).
    CHECK(std::abs(analytic - fd) <= 0.02 * std::max(std::abs(analytic), std::abs(fd)) + 1e-3);
  }
}
