#include "branchgan/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "branchgan/rng.hpp"

namespace branchgan {

// ---------------------------------------------------------------------------
// Resampling

namespace {

struct Tap {
  int index;
  double weight;
};

// Source taps of each output cell along one axis: the cell covers
// [o*s, (o+1)*s) in source pixels with s = src/dst, and each source pixel
// contributes its overlap divided by s.
std::vector<std::vector<Tap>> area_taps(int src, int dst) {
  std::vector<std::vector<Tap>> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int o = 0; o < dst; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    for (int i = static_cast<int>(std::floor(lo)); i < std::min(src, static_cast<int>(std::ceil(hi))); ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) taps[o].push_back({i, overlap / scale});
    }
  }
  return taps;
}

}  // namespace

Image resize_area(const Image& image, Resolution target) {
  if (target.height <= 0 || target.width <= 0) throw ConfigError("resize target must be positive");
  if (image.height == target.height && image.width == target.width) return image;
  const auto ty = area_taps(image.height, target.height);
  const auto tx = area_taps(image.width, target.width);
  Image out(target.height, target.width, image.channels);
  std::vector<double> acc(image.channels);
  for (int oy = 0; oy < target.height; ++oy) {
    for (int ox = 0; ox < target.width; ++ox) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (const Tap& a : ty[oy])
        for (const Tap& b : tx[ox]) {
          const double w = a.weight * b.weight;
          for (int c = 0; c < image.channels; ++c) acc[c] += w * image.at(a.index, b.index, c);
        }
      for (int c = 0; c < image.channels; ++c) out.at(oy, ox, c) = static_cast<float>(acc[c]);
    }
  }
  return out;
}

std::vector<Image> make_pyramid(const Image& image, std::span<const Resolution> resolutions) {
  std::vector<Image> out;
  out.reserve(resolutions.size());
  for (const Resolution& r : resolutions) out.push_back(resize_area(image, r));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SyntheticRecipe::validate() const {
  if (count < 1) throw ConfigError("synthetic count must be >= 1");
  if (resolution.height < 4 || resolution.width < 4) throw ConfigError("synthetic resolution must be at least 4x4");
  if (!(coarse_max_frequency > 0.0)) throw ConfigError("coarse_max_frequency must be positive");
  if (mid_min_shapes < 0 || mid_max_shapes < mid_min_shapes) throw ConfigError("invalid mid-layer shape counts");
  if (!(mid_lo >= 0.0 && mid_lo < mid_hi && mid_hi <= 1.0)) throw ConfigError("invalid mid band");
  if (!(fine_lo > 0.0 && fine_lo <= fine_hi && fine_hi <= std::numbers::sqrt2)) throw ConfigError("invalid fine band");
  if (fine_lo < mid_hi) throw ConfigError("fine band must lie above the mid band");
  if (fine_amplitude < 0.0 || mid_contrast < 0.0) throw ConfigError("amplitudes must be non-negative");
  if (fine_orientations < 0) throw ConfigError("fine_orientations must be >= 0");
}

void to_json(nlohmann::json& j, const SyntheticRecipe& r) {
  j = nlohmann::json{{"count", r.count},
                     {"resolution", {r.resolution.height, r.resolution.width}},
                     {"coarse_max_frequency", r.coarse_max_frequency},
                     {"mid_min_shapes", r.mid_min_shapes},
                     {"mid_max_shapes", r.mid_max_shapes},
                     {"mid_lo", r.mid_lo},
                     {"mid_hi", r.mid_hi},
                     {"mid_contrast", r.mid_contrast},
                     {"fine_lo", r.fine_lo},
                     {"fine_hi", r.fine_hi},
                     {"fine_amplitude", r.fine_amplitude},
                     {"fine_orientations", r.fine_orientations},
                     {"coarse_weight", r.coarse_weight},
                     {"mid_weight", r.mid_weight},
                     {"fine_weight", r.fine_weight}};
}

void from_json(const nlohmann::json& j, SyntheticRecipe& r) {
  try {
    SyntheticRecipe d;
    r.count = j.value("count", d.count);
    if (j.contains("resolution")) {
      const auto v = j.at("resolution").get<std::vector<int>>();
      if (v.size() != 2) throw ConfigError("resolution must be [height, width]");
      r.resolution = {v[0], v[1]};
    }
    r.coarse_max_frequency = j.value("coarse_max_frequency", d.coarse_max_frequency);
    r.mid_min_shapes = j.value("mid_min_shapes", d.mid_min_shapes);
    r.mid_max_shapes = j.value("mid_max_shapes", d.mid_max_shapes);
    r.mid_lo = j.value("mid_lo", d.mid_lo);
    r.mid_hi = j.value("mid_hi", d.mid_hi);
    r.mid_contrast = j.value("mid_contrast", d.mid_contrast);
    r.fine_lo = j.value("fine_lo", d.fine_lo);
    r.fine_hi = j.value("fine_hi", d.fine_hi);
    r.fine_amplitude = j.value("fine_amplitude", d.fine_amplitude);
    r.fine_orientations = j.value("fine_orientations", d.fine_orientations);
    r.coarse_weight = j.value("coarse_weight", d.coarse_weight);
    r.mid_weight = j.value("mid_weight", d.mid_weight);
    r.fine_weight = j.value("fine_weight", d.fine_weight);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid synthetic recipe: ") + e.what());
  }
  r.validate();
}

namespace {

constexpr int kSyntheticChannels = 3;

RealMap blank_map(Resolution r) {
  return RealMap{r.height, r.width, kSyntheticChannels,
                 std::vector<double>(static_cast<std::size_t>(r.height) * r.width * kSyntheticChannels, 0.0)};
}

// Integer wave vector (ky, kx) of a cosine; one DFT bin pair, so its energy
// sits at a single radial frequency.
struct Wave {
  int ky;
  int kx;
};

RealMap coarse_layer(const SyntheticRecipe& rc, Rng& rng) {
  const int h = rc.resolution.height, w = rc.resolution.width;
  std::vector<Wave> candidates;
  for (int ky = -h / 2; ky <= h / 2; ++ky)
    for (int kx = 0; kx <= w / 2; ++kx) {
      if (kx == 0 && ky <= 0) continue;
      if (radial_frequency(ky, kx, h, w) <= rc.coarse_max_frequency) candidates.push_back({ky, kx});
    }
  if (candidates.empty()) candidates.push_back({0, 1});
  const Wave wave = candidates[rng.below(candidates.size())];
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double c0[kSyntheticChannels], c1[kSyntheticChannels];
  for (int c = 0; c < kSyntheticChannels; ++c) c0[c] = rng.uniform(0.15, 0.85);
  for (int c = 0; c < kSyntheticChannels; ++c) c1[c] = rng.uniform(0.15, 0.85);

  RealMap m = blank_map(rc.resolution);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double t = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(wave.ky) * y / h +
                                                                       static_cast<double>(wave.kx) * x / w) +
                                            phase);
      for (int c = 0; c < kSyntheticChannels; ++c)
        m.values[(static_cast<std::size_t>(y) * w + x) * kSyntheticChannels + c] = c0[c] + (c1[c] - c0[c]) * t;
    }
  return m;
}

RealMap mid_layer(const SyntheticRecipe& rc, Rng& rng) {
  const int h = rc.resolution.height, w = rc.resolution.width;
  const int span = rc.mid_max_shapes - rc.mid_min_shapes + 1;
  const int shapes = rc.mid_min_shapes + static_cast<int>(rng.below(span));
  Image raw(h, w, kSyntheticChannels);
  const double size = std::min(h, w);
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = rng.unit() < 0.5;
    const double cy = rng.uniform(0.2, 0.8) * h;
    const double cx = rng.uniform(0.2, 0.8) * w;
    const double ry = rng.uniform(0.12, 0.3) * size;
    const double rx = rng.uniform(0.12, 0.3) * size;
    const double angle = rng.uniform(0.0, std::numbers::pi);
    double color[kSyntheticChannels];
    for (double& c : color) c = rng.uniform(-rc.mid_contrast, rc.mid_contrast);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        const double u = ca * dx + sa * dy;
        const double v = -sa * dx + ca * dy;
        double inside;  // signed distance to the boundary in pixels (approximate for ellipses)
        if (ellipse) {
          inside = (1.0 - std::hypot(u / rx, v / ry)) * std::min(rx, ry);
        } else {
          inside = std::min(rx - std::abs(u), ry - std::abs(v));
        }
        const double coverage = 1.0 / (1.0 + std::exp(-inside / 0.75));
        for (int c = 0; c < kSyntheticChannels; ++c) raw.at(y, x, c) += static_cast<float>(coverage * color[c]);
      }
  }
  return band_filter(raw, rc.mid_lo, rc.mid_hi);
}

RealMap fine_layer(const SyntheticRecipe& rc, Rng& rng) {
  const int h = rc.resolution.height, w = rc.resolution.width;
  Wave wave{0, w / 2};
  for (int attempt = 0; attempt < 256; ++attempt) {
    const double r = rng.uniform(rc.fine_lo, rc.fine_hi);
    const double theta = rc.fine_orientations > 0
                             ? std::numbers::pi * static_cast<double>(rng.below(rc.fine_orientations)) /
                                   rc.fine_orientations
                             : rng.uniform(0.0, std::numbers::pi);
    const Wave cand{static_cast<int>(std::lround(r * h / 2.0 * std::sin(theta))),
                    static_cast<int>(std::lround(r * w / 2.0 * std::cos(theta)))};
    if (std::abs(cand.ky) > h / 2 || std::abs(cand.kx) > w / 2) continue;
    const double actual = radial_frequency(cand.ky, cand.kx, h, w);
    if (actual >= rc.fine_lo && actual <= rc.fine_hi) {
      wave = cand;
      break;
    }
  }
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  RealMap m = blank_map(rc.resolution);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = rc.fine_amplitude *
                       std::cos(2.0 * std::numbers::pi *
                                    (static_cast<double>(wave.ky) * y / h + static_cast<double>(wave.kx) * x / w) +
                                phase);
      for (int c = 0; c < kSyntheticChannels; ++c)
        m.values[(static_cast<std::size_t>(y) * w + x) * kSyntheticChannels + c] = v;
    }
  return m;
}

}  // namespace

SyntheticLayers synthesize_sample(const SyntheticRecipe& recipe, std::uint64_t seed, int index) {
  recipe.validate();
  SyntheticLayers out;
  // Independent streams per layer keep each layer stable if another changes.
  Rng coarse_rng(derive_seed(seed, {static_cast<std::uint64_t>(index), 0}));
  Rng mid_rng(derive_seed(seed, {static_cast<std::uint64_t>(index), 1}));
  Rng fine_rng(derive_seed(seed, {static_cast<std::uint64_t>(index), 2}));
  out.coarse = coarse_layer(recipe, coarse_rng);
  out.mid = mid_layer(recipe, mid_rng);
  out.fine = fine_layer(recipe, fine_rng);
  out.composite = Image(recipe.resolution.height, recipe.resolution.width, kSyntheticChannels);
  for (std::size_t i = 0; i < out.composite.pixels.size(); ++i) {
    const double v = recipe.coarse_weight * out.coarse.values[i] + recipe.mid_weight * out.mid.values[i] +
                     recipe.fine_weight * out.fine.values[i];
    out.composite.pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

std::vector<Image> generate_synthetic(const SyntheticRecipe& recipe, std::uint64_t seed) {
  recipe.validate();
  std::vector<Image> out(recipe.count);
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < recipe.count; ++i) out[i] = synthesize_sample(recipe, seed, i).composite;
  return out;
}

void write_image_directory(const std::filesystem::path& dir, std::span<const Image> images) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::snprintf(name, sizeof name, "sample_%05zu.png", i);
    write_png(dir / name, images[i]);
  }
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

nlohmann::json res_json(Resolution r) { return {r.height, r.width}; }

Resolution res_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() != 2) throw ConfigError("resolution must be [height, width]");
  return {v[0], v[1]};
}

}  // namespace

void to_json(nlohmann::json& j, const DatasetSpec& s) {
  j = nlohmann::json::object();
  j["directory"] = s.directory.string();
  j["synthetic"] = s.synthetic ? nlohmann::json(*s.synthetic) : nlohmann::json(nullptr);
  j["synthetic_seed"] = s.synthetic_seed;
  j["target"] = res_json(s.target);
  j["pyramid"] = nlohmann::json::array();
  for (const auto& r : s.pyramid) j["pyramid"].push_back(res_json(r));
  j["shuffle_seed"] = s.shuffle_seed;
  j["max_images"] = s.max_images;
}

void from_json(const nlohmann::json& j, DatasetSpec& s) {
  try {
    s.directory = j.value("directory", std::string{});
    s.synthetic.reset();
    if (j.contains("synthetic") && !j.at("synthetic").is_null()) s.synthetic = j.at("synthetic").get<SyntheticRecipe>();
    s.synthetic_seed = j.value("synthetic_seed", std::uint64_t{0});
    if (j.contains("target")) s.target = res_from(j.at("target"));
    s.pyramid.clear();
    if (j.contains("pyramid"))
      for (const auto& r : j.at("pyramid")) s.pyramid.push_back(res_from(r));
    s.shuffle_seed = j.value("shuffle_seed", std::uint64_t{0});
    s.max_images = j.value("max_images", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid dataset spec: ") + e.what());
  }
}

std::vector<Resolution> stage_resolutions(const NetConfig& config) {
  std::vector<Resolution> out;
  for (int s = 1; s <= config.stages; ++s) out.push_back(config.resolution(s));
  return out;
}

std::vector<int> epoch_order(int n, std::int64_t epoch, std::uint64_t seed) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {0xE0C4ULL, static_cast<std::uint64_t>(epoch)}));
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  return order;
}

Dataset::Dataset(std::vector<std::vector<Image>> levels, std::vector<Resolution> resolutions, std::uint64_t shuffle_seed)
    : levels_(std::move(levels)), resolutions_(std::move(resolutions)), shuffle_seed_(shuffle_seed) {
  if (levels_.size() != resolutions_.size()) throw ConfigError("dataset levels and resolutions differ in count");
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    if (levels_[l].size() != levels_.front().size()) throw ConfigError("dataset levels differ in image count");
    for (const Image& img : levels_[l]) {
      if (img.height != resolutions_[l].height || img.width != resolutions_[l].width) {
        throw ConfigError("dataset image does not match its level resolution");
      }
    }
  }
}

int Dataset::size() const { return levels_.empty() ? 0 : static_cast<int>(levels_.front().size()); }

int Dataset::level_of(Resolution r) const {
  for (std::size_t l = 0; l < resolutions_.size(); ++l)
    if (resolutions_[l] == r) return static_cast<int>(l);
  throw ConfigError("dataset has no level at " + std::to_string(r.height) + "x" + std::to_string(r.width));
}

std::vector<int> Dataset::batch_indices(std::int64_t step, int batch_size) const {
  const int n = size();
  if (n == 0) throw ConfigError("dataset is empty");
  std::vector<int> out;
  out.reserve(batch_size);
  std::int64_t cached_epoch = -1;
  std::vector<int> order;
  for (int i = 0; i < batch_size; ++i) {
    const std::int64_t pos = step * batch_size + i;
    const std::int64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      order = epoch_order(n, epoch, shuffle_seed_);
      cached_epoch = epoch;
    }
    out.push_back(order[pos % n]);
  }
  return out;
}

Tensor Dataset::batch(int level, std::int64_t step, int batch_size) const {
  const auto& imgs = levels_.at(level);
  std::vector<Image> picked;
  picked.reserve(batch_size);
  for (int i : batch_indices(step, batch_size)) picked.push_back(imgs[i]);
  return to_batch(picked);
}

Dataset load_dataset(const DatasetSpec& spec) {
  std::vector<Image> images;
  if (spec.synthetic) {
    SyntheticRecipe recipe = *spec.synthetic;
    if (spec.max_images > 0) recipe.count = std::min(recipe.count, spec.max_images);
    images = generate_synthetic(recipe, spec.synthetic_seed);
  } else {
    if (spec.directory.empty()) throw ConfigError("dataset needs a directory or a synthetic recipe");
    if (!std::filesystem::is_directory(spec.directory)) {
      throw DataError("dataset directory '" + spec.directory.string() + "' does not exist");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(spec.directory)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (spec.max_images > 0 && static_cast<int>(files.size()) > spec.max_images) files.resize(spec.max_images);
    if (files.empty()) throw DataError("no PNG/JPEG images in '" + spec.directory.string() + "'");
    images.resize(files.size());
    const auto count = static_cast<std::ptrdiff_t>(files.size());
    std::vector<std::string> errors(files.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        images[i] = read_image(files[i], 3);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
    for (const auto& e : errors)
      if (!e.empty()) throw DataError(e);
  }

  const Resolution target = spec.target.height > 0 ? spec.target : Resolution{images.front().height, images.front().width};
  std::vector<Resolution> pyramid = spec.pyramid.empty() ? std::vector<Resolution>{target} : spec.pyramid;
  for (const auto& r : pyramid) {
    if (r.height > target.height || r.width > target.width) {
      throw ConfigError("pyramid resolution exceeds the dataset target resolution");
    }
  }
  std::vector<std::vector<Image>> levels(pyramid.size(), std::vector<Image>(images.size()));
  const auto count = static_cast<std::ptrdiff_t>(images.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const Image base = resize_area(images[i], target);
    for (std::size_t l = 0; l < pyramid.size(); ++l) levels[l][i] = resize_area(base, pyramid[l]);
  }
  return Dataset(std::move(levels), std::move(pyramid), spec.shuffle_seed);
}

}  // namespace branchgan
