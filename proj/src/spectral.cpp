#include "branchgan/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "branchgan/rng.hpp"
#include "fft.hpp"

namespace branchgan {

BandSpec BandSpec::five_band() {
  return BandSpec{{{0.0, 1.0 / 16}, {1.0 / 16, 1.0 / 8}, {1.0 / 8, 1.0 / 4}, {1.0 / 4, 1.0 / 2}, {1.0 / 2, 1.0}}};
}

void BandSpec::validate_partition() const {
  if (bands.empty()) throw ConfigError("band spec is empty");
  if (bands.front().lo != 0.0) throw ConfigError("first band must start at 0");
  if (bands.back().hi != 1.0) throw ConfigError("last band must end at 1");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    if (!(bands[i].lo < bands[i].hi)) throw ConfigError("band " + std::to_string(i) + " is empty");
    if (i > 0 && bands[i].lo != bands[i - 1].hi) throw ConfigError("bands are not contiguous");
  }
}

double radial_frequency(int u, int v, int height, int width) {
  const int su = u <= height / 2 ? u : u - height;
  const int sv = v <= width / 2 ? v : v - width;
  const double fu = static_cast<double>(su) / height;
  const double fv = static_cast<double>(sv) / width;
  return 2.0 * std::sqrt(fu * fu + fv * fv);
}

bool in_band(double r, const Band& band) {
  if (r == 0.0) return band.lo == 0.0;
  if (r > 1.0) return band.hi >= 1.0;
  return r > band.lo && r <= band.hi;
}

namespace {

void check_filter_input(const Image& image) {
  if (image.height <= 0 || image.width <= 0 || image.channels <= 0) throw ConfigError("empty image");
  for (float p : image.pixels) {
    if (!std::isfinite(p)) throw ConfigError("band filter: non-finite pixel");
  }
}

void check_band(const Band& b) {
  if (!(b.lo >= 0.0 && b.lo < b.hi && b.hi <= 1.0)) {
    throw ConfigError("band limits must satisfy 0 <= lo < hi <= 1");
  }
}

}  // namespace

std::vector<RealMap> band_decompose(const Image& image, const BandSpec& spec) {
  check_filter_input(image);
  for (const auto& b : spec.bands) check_band(b);
  const int h = image.height, w = image.width, ch = image.channels;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  std::vector<std::vector<char>> masks(spec.bands.size(), std::vector<char>(plane));
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      const double r = radial_frequency(u, v, h, w);
      for (std::size_t b = 0; b < spec.bands.size(); ++b) masks[b][u * w + v] = in_band(r, spec.bands[b]);
    }

  std::vector<RealMap> out(spec.bands.size(), RealMap{h, w, ch, std::vector<double>(plane * ch, 0.0)});
  auto spectrum = detail::fft_alloc(plane);
  auto work = detail::fft_alloc(plane);
  for (int c = 0; c < ch; ++c) {
    for (std::size_t p = 0; p < plane; ++p) spectrum[p] = image.pixels[p * ch + c];
    detail::fft2d(spectrum.get(), h, w, false);
    for (std::size_t b = 0; b < spec.bands.size(); ++b) {
      for (std::size_t p = 0; p < plane; ++p) work[p] = masks[b][p] ? spectrum[p] : std::complex<double>{};
      detail::fft2d(work.get(), h, w, true);
      auto& vals = out[b].values;
      for (std::size_t p = 0; p < plane; ++p) vals[p * ch + c] = work[p].real() / static_cast<double>(plane);
    }
  }
  return out;
}

RealMap band_filter(const Image& image, double lo, double hi) {
  return band_decompose(image, BandSpec{{{lo, hi}}}).front();
}

std::vector<double> band_energies(const Image& image, const BandSpec& spec) {
  check_filter_input(image);
  const int h = image.height, w = image.width, ch = image.channels;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> energy(spec.bands.size(), 0.0);
  auto spectrum = detail::fft_alloc(plane);
  for (int c = 0; c < ch; ++c) {
    for (std::size_t p = 0; p < plane; ++p) spectrum[p] = image.pixels[p * ch + c];
    detail::fft2d(spectrum.get(), h, w, false);
    for (int u = 0; u < h; ++u)
      for (int v = 0; v < w; ++v) {
        const double r = radial_frequency(u, v, h, w);
        const double e = std::norm(spectrum[u * w + v]) / static_cast<double>(plane);
        for (std::size_t b = 0; b < spec.bands.size(); ++b) {
          if (in_band(r, spec.bands[b])) energy[b] += e;
        }
      }
  }
  return energy;
}

// ---------------------------------------------------------------------------
// VBS

std::vector<VbsTarget> per_dimension_targets(const LatentLayout& layout) {
  std::vector<VbsTarget> out;
  for (int i = 0; i < layout.total(); ++i) {
    const int t = layout.branch_of(i);
    out.push_back({"z" + std::to_string(t) + "[" + std::to_string(i - layout.offset(t)) + "]", {i}});
  }
  return out;
}

std::vector<VbsTarget> per_subvector_targets(const LatentLayout& layout) {
  std::vector<VbsTarget> out;
  for (int t = 0; t < layout.branches(); ++t) {
    VbsTarget target{"z" + std::to_string(t), {}};
    for (int k = 0; k < layout.dims[t]; ++k) target.coords.push_back(layout.offset(t) + k);
    out.push_back(std::move(target));
  }
  return out;
}

std::vector<double> vbs_raw_bands(const ImageModel& model, const VbsTarget& target,
                                  std::span<const double> complement, const BandSpec& bands, int n_samples,
                                  std::uint64_t seed, double range) {
  if (n_samples < 2) throw ConfigError("vbs needs at least 2 samples");
  const int total = model.layout.total();
  if (static_cast<int>(complement.size()) != total) throw ConfigError("vbs complement has the wrong length");
  for (int c : target.coords) {
    if (c < 0 || c >= total) throw ConfigError("vbs target '" + target.id + "' has an invalid coordinate");
  }
  if (target.coords.empty()) throw ConfigError("vbs target '" + target.id + "' is empty");

  // Welford accumulation per band and element; identical samples give exactly 0.
  // Rendering is chunked so large oracles do not hold every image at once.
  constexpr int kChunk = 256;
  std::vector<std::vector<double>> mean(bands.bands.size()), m2(bands.bands.size());
  double count = 0.0;
  for (int start = 0; start < n_samples; start += kChunk) {
    const int end = std::min(n_samples, start + kChunk);
    std::vector<BranchedLatent> zs;
    zs.reserve(end - start);
    for (int s = start; s < end; ++s) {
      std::vector<double> flat(complement.begin(), complement.end());
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(s)}));
      for (int c : target.coords) flat[c] = rng.uniform(-range, range);
      zs.push_back(BranchedLatent::from_flat(model.layout, flat));
    }
    for (const Image& img : model.render(zs)) {
      auto maps = band_decompose(img, bands);
      count += 1.0;
      for (std::size_t b = 0; b < maps.size(); ++b) {
        if (mean[b].empty()) {
          mean[b].assign(maps[b].values.size(), 0.0);
          m2[b].assign(maps[b].values.size(), 0.0);
        }
        for (std::size_t k = 0; k < maps[b].values.size(); ++k) {
          const double v = maps[b].values[k];
          const double delta = v - mean[b][k];
          mean[b][k] += delta / count;
          m2[b][k] += delta * (v - mean[b][k]);
        }
      }
    }
  }
  std::vector<double> out(bands.bands.size(), 0.0);
  for (std::size_t b = 0; b < out.size(); ++b) {
    double total_std = 0.0;
    for (double v : m2[b]) total_std += std::sqrt(std::max(v, 0.0) / count);
    out[b] = total_std;
  }
  return out;
}

double vbs_raw(const ImageModel& model, const VbsTarget& target, std::span<const double> complement,
               const Band& band, int n_samples, std::uint64_t seed, double range) {
  return vbs_raw_bands(model, target, complement, BandSpec{{band}}, n_samples, seed, range).front();
}

int VbsReport::target_index(const std::string& id) const {
  auto it = std::find(targets.begin(), targets.end(), id);
  if (it == targets.end()) throw ConfigError("unknown vbs target '" + id + "'");
  return static_cast<int>(it - targets.begin());
}

std::vector<double> VbsReport::histogram_values(int band) const {
  std::vector<double> out;
  if (!band_defined(band)) return out;
  for (const auto& per_target : samples)
    for (const auto& per_constant : per_target) out.push_back(per_constant.at(band) / cohort_mean[band]);
  return out;
}

VbsReport vbs_report(const ImageModel& model, const std::vector<VbsTarget>& targets, const BandSpec& bands,
                     const VbsOptions& options) {
  if (targets.empty()) throw ConfigError("vbs report needs at least one target");
  if (options.n_constants < 1) throw ConfigError("vbs report needs at least one constant");
  const int total = model.layout.total();
  const int nt = static_cast<int>(targets.size());
  const int nc = options.n_constants;
  const int nb = bands.size();

  std::vector<std::vector<double>> constants(nc, std::vector<double>(total));
  for (int k = 0; k < nc; ++k) {
    Rng rng(derive_seed(options.seed, {0xC0u, static_cast<std::uint64_t>(k)}));
    for (auto& v : constants[k]) v = rng.uniform(-1.0, 1.0);
  }

  // cells[t * nc + k][b]; every cell is independent and lands in a fixed slot.
  std::vector<std::vector<double>> cells(static_cast<std::size_t>(nt) * nc);
#pragma omp parallel for schedule(dynamic)
  for (int cell = 0; cell < nt * nc; ++cell) {
    const int t = cell / nc;
    const int k = cell % nc;
    cells[cell] = vbs_raw_bands(model, targets[t], constants[k], bands, options.n_samples,
                                derive_seed(options.seed, {0x5Au, static_cast<std::uint64_t>(k),
                                                           static_cast<std::uint64_t>(t)}));
  }

  VbsReport r;
  r.bands = bands;
  r.n_constants = nc;
  r.n_samples = options.n_samples;
  r.seed = options.seed;
  r.cohort = options.cohort;
  r.raw.assign(nt, std::vector<double>(nb, 0.0));
  for (int t = 0; t < nt; ++t) {
    r.targets.push_back(targets[t].id);
    for (int k = 0; k < nc; ++k)
      for (int b = 0; b < nb; ++b) r.raw[t][b] += cells[static_cast<std::size_t>(t) * nc + k][b];
    for (int b = 0; b < nb; ++b) r.raw[t][b] /= nc;
  }
  if (options.keep_samples) {
    r.samples.assign(nt, {});
    for (int t = 0; t < nt; ++t)
      for (int k = 0; k < nc; ++k) r.samples[t].push_back(cells[static_cast<std::size_t>(t) * nc + k]);
  }
  r.cohort_mean.assign(nb, 0.0);
  r.band_errors.assign(nb, "");
  r.normalized.assign(nt, std::vector<std::optional<double>>(nb));
  for (int b = 0; b < nb; ++b) {
    double mean = 0.0;
    for (int t = 0; t < nt; ++t) mean += r.raw[t][b];
    mean /= nt;
    r.cohort_mean[b] = mean;
    if (!(std::isfinite(mean) && mean > 0.0)) {
      r.band_errors[b] = mean == 0.0 ? "cohort mean is zero" : "cohort mean is not finite";
      continue;
    }
    for (int t = 0; t < nt; ++t) r.normalized[t][b] = r.raw[t][b] / mean;
  }
  return r;
}

int dominant_scale(const VbsReport& report, int target) {
  if (target < 0 || target >= static_cast<int>(report.targets.size())) throw ConfigError("target index out of range");
  int best = -1;
  double best_value = 0.0;
  for (int b = 0; b < report.bands.size(); ++b) {
    const auto& v = report.normalized[target][b];
    if (!v) throw ConfigError("dominant_scale: band " + std::to_string(b) + " is undefined");
    if (best < 0 || *v > best_value) {
      best = b;
      best_value = *v;
    }
  }
  return best;
}

double normalized_spread(const VbsReport& report) {
  double acc = 0.0;
  int used = 0;
  for (int b = 0; b < report.bands.size(); ++b) {
    const auto vals = report.histogram_values(b);
    if (vals.size() < 2) continue;
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    acc += var / static_cast<double>(vals.size());
    ++used;
  }
  if (used == 0) throw ConfigError("normalized_spread needs a histogram-mode report with defined bands");
  return acc / used;
}

void to_json(nlohmann::json& j, const VbsReport& r) {
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : r.bands.bands) bands.push_back({b.lo, b.hi});
  nlohmann::json targets = nlohmann::json::array();
  for (std::size_t t = 0; t < r.targets.size(); ++t) {
    nlohmann::json norm = nlohmann::json::array();
    for (const auto& v : r.normalized[t]) norm.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    targets.push_back({{"id", r.targets[t]}, {"raw", r.raw[t]}, {"normalized", norm}});
  }
  nlohmann::json errors = nlohmann::json::array();
  for (std::size_t b = 0; b < r.band_errors.size(); ++b) {
    if (!r.band_errors[b].empty()) errors.push_back({{"band", b}, {"error", r.band_errors[b]}});
  }
  j = nlohmann::json{{"bands", bands},
                     {"targets", targets},
                     {"cohort_mean", r.cohort_mean},
                     {"undefined_bands", errors},
                     {"metadata",
                      {{"n_constants", r.n_constants},
                       {"n_samples", r.n_samples},
                       {"seed", r.seed},
                       {"cohort", r.cohort},
                       {"histogram", !r.samples.empty()}}}};
}

std::string vbs_csv(const VbsReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "target,band,lo,hi,raw,normalized\n";
  for (std::size_t t = 0; t < r.targets.size(); ++t)
    for (int b = 0; b < r.bands.size(); ++b) {
      os << r.targets[t] << ',' << b << ',' << r.bands.bands[b].lo << ',' << r.bands.bands[b].hi << ','
         << r.raw[t][b] << ',';
      if (r.normalized[t][b]) os << *r.normalized[t][b];
      os << '\n';
    }
  return os.str();
}

std::string vbs_histogram_csv(const VbsReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "target,constant,band,raw,normalized\n";
  for (std::size_t t = 0; t < r.samples.size(); ++t)
    for (std::size_t k = 0; k < r.samples[t].size(); ++k)
      for (int b = 0; b < r.bands.size(); ++b) {
        os << r.targets[t] << ',' << k << ',' << b << ',' << r.samples[t][k][b] << ',';
        if (r.band_defined(b)) os << r.samples[t][k][b] / r.cohort_mean[b];
        os << '\n';
      }
  return os.str();
}

// ---------------------------------------------------------------------------

VarianceImage variance_image(std::span<const Image> images) {
  if (images.size() < 2) throw ConfigError("variance image needs at least 2 images");
  const Image& first = images.front();
  for (const auto& img : images) {
    if (!img.same_shape(first)) throw ConfigError("variance image: images differ in shape");
  }
  VarianceImage out;
  out.height = first.height;
  out.width = first.width;
  const std::size_t plane = static_cast<std::size_t>(first.height) * first.width;
  out.values.assign(plane, 0.0);
  const double n = static_cast<double>(images.size());
  for (std::size_t p = 0; p < plane; ++p) {
    double acc = 0.0;
    for (int c = 0; c < first.channels; ++c) {
      double mean = 0.0;
      for (const auto& img : images) mean += img.pixels[p * first.channels + c];
      mean /= n;
      double var = 0.0;
      for (const auto& img : images) {
        const double d = img.pixels[p * first.channels + c] - mean;
        var += d * d;
      }
      acc += var / n;
    }
    out.values[p] = acc / first.channels;
  }
  const double peak = *std::max_element(out.values.begin(), out.values.end());
  out.display_scale = peak > 0.0 ? 255.0 / peak : 0.0;
  out.display.resize(plane);
  for (std::size_t p = 0; p < plane; ++p) {
    out.display[p] = static_cast<std::uint8_t>(std::clamp(std::lround(out.values[p] * out.display_scale), 0L, 255L));
  }
  return out;
}

}  // namespace branchgan
