#pragma once

// Image files, resolution pyramids, the synthetic known-scale corpus and
// dataset iteration.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "branchgan/networks.hpp"
#include "branchgan/spectral.hpp"
#include "branchgan/tensor.hpp"

namespace branchgan {

/// Unreadable, corrupt or incompatible files. The CLI maps it to the
/// runtime-failure exit code.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Image files (8-bit; values scaled by 1/255)

/// PNG or JPEG, detected from the file signature. channels is 1 or 3.
Image read_image(const std::filesystem::path& path, int channels = 3);
Image decode_image(std::span<const std::uint8_t> bytes, int channels = 3);
/// Values are clamped to [0,1] and rounded. 1- or 3-channel images.
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

/// 1-bit grayscale PNG.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
/// Any PNG; a pixel is on when its gray value is >= 128.
Mask read_mask_png(const std::filesystem::path& path);

/// Writes `bytes` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Resampling

/// Box-filter resampling with fractional pixel overlap, so the image mean is
/// preserved for any target size not larger than the source.
Image resize_area(const Image& image, Resolution target);
/// One image per requested resolution, in the given order. A resolution equal
/// to the input's is returned unchanged.
std::vector<Image> make_pyramid(const Image& image, std::span<const Resolution> resolutions);

// ---------------------------------------------------------------------------
// Synthetic corpus with one layer per frequency range

struct SyntheticRecipe {
  int count = 2000;
  Resolution resolution{32, 32};
  // Coarse: a two-colour cosine gradient at the lowest wave vectors with
  // radial frequency <= coarse_max_frequency.
  double coarse_max_frequency = 1.0 / 16.0;
  // Mid: 1-3 soft ellipses or rectangles, band-limited to (mid_lo, mid_hi].
  int mid_min_shapes = 1;
  int mid_max_shapes = 3;
  double mid_lo = 1.0 / 16.0;
  double mid_hi = 0.5;
  double mid_contrast = 0.35;
  // Fine: a sinusoidal texture with radial frequency in [fine_lo, fine_hi].
  double fine_lo = 0.55;
  double fine_hi = 0.85;
  double fine_amplitude = 0.15;
  /// 0: orientation uniform in [0, pi); n > 0: one of n evenly spaced angles.
  int fine_orientations = 0;
  // Composition weights.
  double coarse_weight = 1.0;
  double mid_weight = 1.0;
  double fine_weight = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticRecipe& r);
void from_json(const nlohmann::json& j, SyntheticRecipe& r);

struct SyntheticLayers {
  RealMap coarse;
  RealMap mid;
  RealMap fine;
  Image composite;  // weighted sum, clamped to [0,1]
};

/// Sample `index` of the corpus; a pure function of (recipe, seed, index).
SyntheticLayers synthesize_sample(const SyntheticRecipe& recipe, std::uint64_t seed, int index);
std::vector<Image> generate_synthetic(const SyntheticRecipe& recipe, std::uint64_t seed);
/// Writes sample_00000.png, sample_00001.png, ...
void write_image_directory(const std::filesystem::path& dir, std::span<const Image> images);

// ---------------------------------------------------------------------------
// Datasets

struct DatasetSpec {
  /// Directory of PNG/JPEG files; used when `synthetic` is empty.
  std::filesystem::path directory;
  std::optional<SyntheticRecipe> synthetic;
  std::uint64_t synthetic_seed = 0;
  Resolution target;
  /// Per-stage resolutions, coarsest first; must match the network stages.
  std::vector<Resolution> pyramid;
  std::uint64_t shuffle_seed = 0;
  /// 0 means no limit.
  int max_images = 0;
};

void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);

/// Per-stage resolutions of a network, stage 1 first.
std::vector<Resolution> stage_resolutions(const NetConfig& config);

/// A permutation of 0..n-1 that depends only on (n, epoch, seed).
std::vector<int> epoch_order(int n, std::int64_t epoch, std::uint64_t seed);

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::vector<Image>> levels, std::vector<Resolution> resolutions, std::uint64_t shuffle_seed);

  [[nodiscard]] int size() const;
  [[nodiscard]] int levels() const { return static_cast<int>(levels_.size()); }
  [[nodiscard]] const std::vector<Resolution>& resolutions() const { return resolutions_; }
  [[nodiscard]] const std::vector<Image>& level(int i) const { return levels_.at(i); }
  /// Level whose resolution equals `r`; throws ConfigError when absent.
  [[nodiscard]] int level_of(Resolution r) const;
  [[nodiscard]] std::uint64_t shuffle_seed() const { return shuffle_seed_; }

  /// Dataset indices of the images in batch `step`: positions
  /// step*batch .. step*batch+batch-1 of the concatenated epoch orders.
  [[nodiscard]] std::vector<int> batch_indices(std::int64_t step, int batch_size) const;
  [[nodiscard]] Tensor batch(int level, std::int64_t step, int batch_size) const;

 private:
  std::vector<std::vector<Image>> levels_;
  std::vector<Resolution> resolutions_;
  std::uint64_t shuffle_seed_ = 0;
};

/// Loads (or synthesizes) the images, resizes them to spec.target and builds
/// the pyramid. File order is sorted by name before shuffling.
Dataset load_dataset(const DatasetSpec& spec);

}  // namespace branchgan
