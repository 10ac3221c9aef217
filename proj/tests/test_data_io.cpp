#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "branchgan/checkpoint.hpp"
#include "branchgan/data_io.hpp"
#include "helpers.hpp"

using namespace branchgan;

namespace {

double mean(const Image& im) {
  return std::accumulate(im.pixels.begin(), im.pixels.end(), 0.0) / static_cast<double>(im.pixels.size());
}

double energy_in(const RealMap& layer, double lo, double hi) {
  Image im(layer.height, layer.width, layer.channels);
  for (std::size_t i = 0; i < layer.values.size(); ++i) im.pixels[i] = static_cast<float>(layer.values[i]);
  double e = 0.0;
  for (double v : band_filter(im, lo, hi).values) e += v * v;
  return e;
}

double energy(const RealMap& m) {
  double e = 0.0;
  for (double v : m.values) e += v * v;
  return e;
}

Checkpoint sample_checkpoint() {
  const auto c = testing::tiny_config();
  Checkpoint ck;
  ck.config = c;
  ck.stage = 2;
  ck.generator = build_generator(c, 2, 1).params();
  ck.discriminator = build_discriminator(c, 2, 2).params();
  ck.encoder = build_encoder(c, 2, 3).params();
  TrainState st;
  st.stage = 2;
  st.phase = 2;
  st.step = 77;
  st.stage_step = 12;
  st.seed = 99;
  st.g_opt = Adam(OptimSpec{});
  GradSet grads;
  for (const auto& [name, p] : ck.generator) grads[name] = std::vector<float>(p.values.size(), 0.001f);
  st.g_opt.step(ck.generator, grads, {"g.linear.weight"});
  st.history.push_back({1, 1, 1, 0.0, 0.7, 1.2});
  st.history.push_back({2, 2, 2, 0.25, 0.6, 1.4});
  ck.train_state = st;
  ck.metadata = {{"note", "x"}};
  return ck;
}

}  // namespace

TEST_CASE("png round trip is exact for 8-bit values") {
  testing::TempDir dir("png");
  Image im(7, 5, 3);
  for (std::size_t i = 0; i < im.pixels.size(); ++i) im.pixels[i] = static_cast<float>(i % 256) / 255.0f;
  write_png(dir.path / "a.png", im);
  CHECK(read_image(dir.path / "a.png") == im);
  Image gray(4, 4, 1, 0.5f);
  const auto bytes = encode_png(gray);
  const auto back = decode_image(bytes, 1);
  CHECK(back.channels == 1);
  CHECK(back.pixels[0] == doctest::Approx(128.0 / 255.0));
  CHECK(decode_image(bytes, 3).channels == 3);
  const std::vector<std::uint8_t> junk{1, 2, 3, 4};
  CHECK_THROWS_AS(decode_image(junk), DataError);
  CHECK_THROWS_AS(read_image(dir.path / "missing.png"), DataError);
}

TEST_CASE("mask png round trip") {
  testing::TempDir dir("mask");
  Mask m(6, 9);
  for (std::size_t i = 0; i < m.values.size(); i += 4) m.values[i] = 1;
  write_mask_png(dir.path / "m.png", m);
  CHECK(read_mask_png(dir.path / "m.png") == m);
}

TEST_CASE("area resampling preserves the mean") {
  const auto im = testing::random_image(32, 32, 3, 6);
  for (Resolution r : {Resolution{8, 8}, Resolution{16, 16}, Resolution{10, 13}, Resolution{5, 7}}) {
    const auto small = resize_area(im, r);
    CHECK(small.height == r.height);
    CHECK(small.width == r.width);
    CHECK(mean(small) == doctest::Approx(mean(im)).epsilon(1e-5));
  }
  // exact 2x2 average
  const auto half = resize_area(im, {16, 16});
  const float expect = (im.at(0, 0, 1) + im.at(0, 1, 1) + im.at(1, 0, 1) + im.at(1, 1, 1)) / 4.0f;
  CHECK(half.at(0, 0, 1) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("pyramid keeps the native level unchanged") {
  const auto im = testing::random_image(32, 32, 3, 7);
  const std::vector<Resolution> rs{{8, 8}, {16, 16}, {32, 32}};
  const auto p = make_pyramid(im, rs);
  REQUIRE(p.size() == 3u);
  CHECK(p[0].height == 8);
  CHECK(p[1].width == 16);
  CHECK(p[2] == im);
  CHECK(make_pyramid(im, rs)[0] == p[0]);
}

TEST_CASE("synthetic layers sit in their home bands") {
  SyntheticRecipe r;
  for (int i = 0; i < 10; ++i) {
    const auto s = synthesize_sample(r, 7, i);
    const double coarse = energy(s.coarse);
    CHECK(energy_in(s.coarse, 0.0, 1.0 / 16) >= 0.9 * coarse);
    const double mid_home = energy_in(s.mid, r.mid_lo, r.mid_hi);
    CHECK(mid_home >= 10.0 * (energy(s.mid) - mid_home));
    const double fine_home = energy_in(s.fine, 0.5, 1.0);
    CHECK(fine_home >= 10.0 * (energy(s.fine) - fine_home));
    for (float p : s.composite.pixels) CHECK((p >= 0.0f && p <= 1.0f));
  }
}

TEST_CASE("synthetic corpus is seed-deterministic") {
  SyntheticRecipe r;
  r.count = 6;
  const auto a = generate_synthetic(r, 7), b = generate_synthetic(r, 7), c = generate_synthetic(r, 8);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(synthesize_sample(r, 7, 4).composite == a[4]);
  r.fine_orientations = 4;
  CHECK_NOTHROW(r.validate());
  r.fine_lo = 0.4;
  CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("recipe json round trip") {
  SyntheticRecipe r;
  r.count = 12;
  r.fine_orientations = 3;
  const nlohmann::json j = r;
  const auto back = j.get<SyntheticRecipe>();
  CHECK(nlohmann::json(back) == j);
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(50, 3, 9);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> iota(50);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(sorted == iota);
  CHECK(epoch_order(50, 3, 9) == a);
  CHECK(epoch_order(50, 4, 9) != a);
  CHECK(epoch_order(50, 3, 10) != a);
}

TEST_CASE("dataset batches are a pure function of step") {
  DatasetSpec spec;
  SyntheticRecipe r;
  r.count = 10;
  spec.synthetic = r;
  spec.synthetic_seed = 3;
  spec.target = {32, 32};
  spec.pyramid = {{8, 8}, {16, 16}, {32, 32}};
  spec.shuffle_seed = 5;
  const auto d = load_dataset(spec);
  CHECK(d.size() == 10);
  CHECK(d.levels() == 3);
  CHECK(d.level_of({16, 16}) == 1);
  CHECK_THROWS_AS((void)d.level_of({4, 4}), ConfigError);
  // steps 0..4 with batch 4 cover two full epochs
  std::vector<int> seen;
  for (int s = 0; s < 5; ++s)
    for (int i : d.batch_indices(s, 4)) seen.push_back(i);
  std::vector<int> first(seen.begin(), seen.begin() + 10);
  std::sort(first.begin(), first.end());
  for (int i = 0; i < 10; ++i) CHECK(first[i] == i);
  const auto b1 = d.batch(0, 3, 4), b2 = d.batch(0, 3, 4);
  CHECK(b1.shape() == Shape4{4, 3, 8, 8});
  CHECK(std::equal(b1.data().begin(), b1.data().end(), b2.data().begin()));
}

TEST_CASE("dataset from a directory") {
  testing::TempDir dir("ds");
  std::vector<Image> images;
  for (int i = 0; i < 3; ++i) images.push_back(testing::random_image(40, 40, 3, i));
  write_image_directory(dir.path, images);
  DatasetSpec spec;
  spec.directory = dir.path;
  spec.target = {32, 32};
  spec.pyramid = {{16, 16}, {32, 32}};
  const auto d = load_dataset(spec);
  CHECK(d.size() == 3);
  CHECK(d.level(1)[0].height == 32);
  spec.directory = dir.path / "nope";
  CHECK_THROWS(load_dataset(spec));
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto ck = sample_checkpoint();
  const auto bytes = serialize_checkpoint(ck);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(nlohmann::json(back.config) == nlohmann::json(ck.config));
  CHECK(back.stage == 2);
  CHECK(back.generator == ck.generator);
  CHECK(back.discriminator == ck.discriminator);
  CHECK(back.encoder == ck.encoder);
  REQUIRE(back.train_state.has_value());
  CHECK(*back.train_state == *ck.train_state);
  CHECK(back.metadata == ck.metadata);
  CHECK(serialize_checkpoint(back) == bytes);

  testing::TempDir dir("ck");
  save_checkpoint(dir.path / "a.bgck", ck);
  CHECK(read_file(dir.path / "a.bgck") == bytes);
  CHECK(generator_from(load_checkpoint(dir.path / "a.bgck")).params() == ck.generator);
}

TEST_CASE("checkpoint corruption is rejected") {
  const auto bytes = serialize_checkpoint(sample_checkpoint());
  auto flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), DataError);
  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(version), doctest::Contains("version"), DataError);
  auto sig = bytes;
  sig[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(sig), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(std::span(bytes).first(bytes.size() - 10)), DataError);
  auto manifest = bytes;
  manifest[24] ^= 0x01;
  CHECK_THROWS_AS(deserialize_checkpoint(manifest), DataError);
}

TEST_CASE("file writes are atomic replacements") {
  testing::TempDir dir("atomic");
  const std::vector<std::uint8_t> a{1, 2, 3}, b{4, 5};
  write_file_atomic(dir.path / "f", a);
  write_file_atomic(dir.path / "f", b);
  CHECK(read_file(dir.path / "f") == b);
  int entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path)) ++entries;
  CHECK(entries == 1);
}
