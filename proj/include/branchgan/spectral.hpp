#pragma once

// Frequency-band analysis of generated images and the variance-by-scale
// (VBS) metric.
//
// Band geometry: a DFT coefficient at signed indices (u, v) of an H x W image
// has radial normalized frequency r = 2 * sqrt((u/H)^2 + (v/W)^2), so Nyquist
// along either axis is 1. A band (lo, hi] keeps coefficients with
// lo < r <= hi; the DC term belongs to any band with lo == 0, and corner
// frequencies with r > 1 belong to any band with hi >= 1.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "branchgan/latent.hpp"
#include "branchgan/tensor.hpp"

namespace branchgan {

struct Band {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const Band&) const = default;
};

struct BandSpec {
  std::vector<Band> bands;

  /// (0,1/16], (1/16,1/8], (1/8,1/4], (1/4,1/2], (1/2,1].
  static BandSpec five_band();
  /// Requires ordered, disjoint, contiguous bands covering (0, 1].
  void validate_partition() const;
  [[nodiscard]] int size() const { return static_cast<int>(bands.size()); }
};

double radial_frequency(int u, int v, int height, int width);
bool in_band(double r, const Band& band);

/// Real-valued map with the layout of an Image (H x W x C).
struct RealMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;
};

/// Per channel: forward DFT, zero coefficients outside the band, inverse DFT, real part.
RealMap band_filter(const Image& image, double lo, double hi);
/// All bands from a single forward transform per channel.
std::vector<RealMap> band_decompose(const Image& image, const BandSpec& spec);
/// Spectral energy per band, sum |X(u,v)|^2 / (H W) over channels; with a
/// partition these add up to the spatial energy sum x^2 (Parseval).
std::vector<double> band_energies(const Image& image, const BandSpec& spec);

/// Anything that turns latents into images of one fixed shape.
struct ImageModel {
  LatentLayout layout;
  std::function<std::vector<Image>(std::span<const BranchedLatent>)> render;
};

/// A set of latent coordinates (indices into the concatenated vector) that is
/// varied together; either one dimension or one whole sub-vector.
struct VbsTarget {
  std::string id;
  std::vector<int> coords;
};

std::vector<VbsTarget> per_dimension_targets(const LatentLayout& layout);
std::vector<VbsTarget> per_subvector_targets(const LatentLayout& layout);

/// Raw V for each band: draw n_samples latents with the target coordinates
/// ~ U(-range, range) and all other coordinates fixed to `complement`
/// (a full-length flat vector), band-filter each image, take the population
/// standard deviation per element across samples and sum over h, w, d.
std::vector<double> vbs_raw_bands(const ImageModel& model, const VbsTarget& target,
                                  std::span<const double> complement, const BandSpec& bands, int n_samples,
                                  std::uint64_t seed, double range = 1.0);
double vbs_raw(const ImageModel& model, const VbsTarget& target, std::span<const double> complement,
               const Band& band, int n_samples, std::uint64_t seed, double range = 1.0);

struct VbsReport {
  std::vector<std::string> targets;
  BandSpec bands;
  /// raw[target][band], averaged over the constants.
  std::vector<std::vector<double>> raw;
  /// normalized[target][band]; nullopt where the band's cohort mean is zero
  /// or not finite.
  std::vector<std::vector<std::optional<double>>> normalized;
  std::vector<double> cohort_mean;
  std::vector<std::string> band_errors;  // one entry per band, empty when defined
  /// samples[target][constant][band] raw values (histogram mode only).
  std::vector<std::vector<std::vector<double>>> samples;
  int n_constants = 0;
  int n_samples = 0;
  std::uint64_t seed = 0;
  std::string cohort;

  [[nodiscard]] bool band_defined(int b) const { return band_errors.at(b).empty(); }
  [[nodiscard]] int target_index(const std::string& id) const;
  /// Per-constant normalized values of one band (histogram mode).
  [[nodiscard]] std::vector<double> histogram_values(int band) const;
};

void to_json(nlohmann::json& j, const VbsReport& r);
/// One row per target and band: target,band,lo,hi,raw,normalized
std::string vbs_csv(const VbsReport& r);
/// One row per target, constant and band (histogram mode).
std::string vbs_histogram_csv(const VbsReport& r);

struct VbsOptions {
  int n_constants = 8;
  int n_samples = 16;
  std::uint64_t seed = 0;
  bool keep_samples = false;
  std::string cohort = "report targets";
};

VbsReport vbs_report(const ImageModel& model, const std::vector<VbsTarget>& targets, const BandSpec& bands,
                     const VbsOptions& options);

/// argmax over bands of the normalized value; ties go to the lower band.
/// Throws ConfigError when the target has undefined bands.
int dominant_scale(const VbsReport& report, int target);

/// Mean over bands of the variance of the per-constant normalized values.
double normalized_spread(const VbsReport& report);

struct VarianceImage {
  int height = 0;
  int width = 0;
  std::vector<double> values;          // channel-averaged population variance
  std::vector<std::uint8_t> display;   // values * display_scale, clamped to 255
  double display_scale = 0.0;
};

/// Requires >= 2 images of equal shape.
VarianceImage variance_image(std::span<const Image> images);

}  // namespace branchgan
