#include "branchgan/edit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "branchgan/data_io.hpp"
#include "branchgan/rng.hpp"

namespace branchgan {

// ---------------------------------------------------------------------------
// HOG

void HogSpec::validate() const {
  if (cell < 1 || bins < 2 || block < 1 || !(epsilon > 0.0)) throw ConfigError("invalid HOG spec");
}

std::size_t HogSpec::length(int height, int width) const {
  const int ncy = height / cell, ncx = width / cell;
  if (ncy < block || ncx < block) return 0;
  return static_cast<std::size_t>(ncy - block + 1) * (ncx - block + 1) * block * block * bins;
}

void to_json(nlohmann::json& j, const HogSpec& s) {
  j = {{"cell", s.cell}, {"bins", s.bins}, {"block", s.block}, {"epsilon", s.epsilon}};
}

void from_json(const nlohmann::json& j, HogSpec& s) {
  HogSpec d;
  s.cell = j.value("cell", d.cell);
  s.bins = j.value("bins", d.bins);
  s.block = j.value("block", d.block);
  s.epsilon = j.value("epsilon", d.epsilon);
}

GrayImage luminance(const Image& image) {
  GrayImage g{image.height, image.width, std::vector<double>(static_cast<std::size_t>(image.height) * image.width)};
  for (std::size_t p = 0; p < g.values.size(); ++p) {
    const float* px = image.pixels.data() + p * image.channels;
    if (image.channels >= 3) {
      g.values[p] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    } else {
      g.values[p] = px[0];
    }
  }
  return g;
}

GrayImage to_gray(const Image& single_channel) {
  if (single_channel.channels != 1) throw ConfigError("edge map must have one channel");
  return luminance(single_channel);
}

namespace {

struct HogGeometry {
  int ncy = 0, ncx = 0, nby = 0, nbx = 0, block_len = 0;

  HogGeometry(const HogSpec& spec, int height, int width) {
    spec.validate();
    ncy = height / spec.cell;
    ncx = width / spec.cell;
    if (ncy < spec.block || ncx < spec.block) {
      throw ConfigError("image of " + std::to_string(height) + "x" + std::to_string(width) +
                        " is smaller than one HOG block");
    }
    nby = ncy - spec.block + 1;
    nbx = ncx - spec.block + 1;
    block_len = spec.block * spec.block * spec.bins;
  }
};

struct Gradients {
  std::vector<double> gx, gy;
};

Gradients image_gradients(const GrayImage& im) {
  const int H = im.height, W = im.width;
  Gradients g{std::vector<double>(im.values.size()), std::vector<double>(im.values.size())};
  for (int y = 0; y < H; ++y) {
    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, H - 1);
    for (int x = 0; x < W; ++x) {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, W - 1);
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      g.gx[i] = im.values[static_cast<std::size_t>(y) * W + xp] - im.values[static_cast<std::size_t>(y) * W + xm];
      g.gy[i] = im.values[static_cast<std::size_t>(yp) * W + x] - im.values[static_cast<std::size_t>(ym) * W + x];
    }
  }
  return g;
}

// Orientation in [0, pi) and the signed circular offset to bin centre b.
double orientation(double gx, double gy) {
  double t = std::atan2(gy, gx);
  if (t < 0.0) t += std::numbers::pi;
  if (t >= std::numbers::pi) t -= std::numbers::pi;
  return t;
}

double bin_offset(double theta, int b, double delta) {
  double d = theta - b * delta;
  if (d > std::numbers::pi / 2) d -= std::numbers::pi;
  if (d <= -std::numbers::pi / 2) d += std::numbers::pi;
  return d;
}

// The (at most two) bins a gradient contributes to, with weight and dweight/dtheta.
struct BinTap {
  int bin;
  double w;
  double dw;
};

int bin_taps(double theta, const HogSpec& spec, BinTap taps[2]) {
  const double delta = std::numbers::pi / spec.bins;
  const double a = std::numbers::pi / (2.0 * delta);
  const int lo = static_cast<int>(std::floor(theta / delta)) % spec.bins;
  int n = 0;
  for (int b : {lo, (lo + 1) % spec.bins}) {
    const double d = bin_offset(theta, b, delta);
    if (std::abs(d) >= delta) continue;
    const double c = std::cos(a * d);
    taps[n++] = {b, c * c, -a * std::sin(2.0 * a * d)};
  }
  return n;
}

std::vector<double> cell_histograms(const GrayImage& im, const HogSpec& spec, const HogGeometry& geo,
                                    const Gradients& grad) {
  std::vector<double> hist(static_cast<std::size_t>(geo.ncy) * geo.ncx * spec.bins, 0.0);
  for (int y = 0; y < geo.ncy * spec.cell; ++y) {
    for (int x = 0; x < geo.ncx * spec.cell; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * im.width + x;
      const double m = std::hypot(grad.gx[i], grad.gy[i]);
      if (m == 0.0) continue;
      BinTap taps[2];
      const int n = bin_taps(orientation(grad.gx[i], grad.gy[i]), spec, taps);
      double* h = hist.data() + (static_cast<std::size_t>(y / spec.cell) * geo.ncx + x / spec.cell) * spec.bins;
      for (int k = 0; k < n; ++k) h[taps[k].bin] += m * taps[k].w;
    }
  }
  return hist;
}

// Gathers block (by, bx) from the cell histograms.
void gather_block(const std::vector<double>& hist, const HogSpec& spec, const HogGeometry& geo, int by, int bx,
                  double* v) {
  for (int cy = 0; cy < spec.block; ++cy) {
    for (int cx = 0; cx < spec.block; ++cx) {
      const double* h = hist.data() + (static_cast<std::size_t>(by + cy) * geo.ncx + bx + cx) * spec.bins;
      std::copy(h, h + spec.bins, v + (cy * spec.block + cx) * spec.bins);
    }
  }
}

}  // namespace

std::vector<double> hog(const GrayImage& image, const HogSpec& spec) {
  const HogGeometry geo(spec, image.height, image.width);
  const auto hist = cell_histograms(image, spec, geo, image_gradients(image));
  std::vector<double> out(static_cast<std::size_t>(geo.nby) * geo.nbx * geo.block_len);
  const double eps2 = spec.epsilon * spec.epsilon;
  for (int by = 0; by < geo.nby; ++by) {
    for (int bx = 0; bx < geo.nbx; ++bx) {
      double* v = out.data() + (static_cast<std::size_t>(by) * geo.nbx + bx) * geo.block_len;
      gather_block(hist, spec, geo, by, bx, v);
      double ss = 0.0;
      for (int k = 0; k < geo.block_len; ++k) ss += v[k] * v[k];
      const double s = 1.0 / std::sqrt(ss + eps2);
      for (int k = 0; k < geo.block_len; ++k) v[k] *= s;
    }
  }
  return out;
}

GrayImage hog_backward(const GrayImage& image, const HogSpec& spec, std::span<const double> d_desc) {
  const HogGeometry geo(spec, image.height, image.width);
  const std::size_t len = static_cast<std::size_t>(geo.nby) * geo.nbx * geo.block_len;
  if (d_desc.size() != len) throw ConfigError("HOG gradient has the wrong length");
  const Gradients grad = image_gradients(image);
  const auto hist = cell_histograms(image, spec, geo, grad);
  const double eps2 = spec.epsilon * spec.epsilon;

  // out = v * s, s = (|v|^2 + eps^2)^(-1/2):  dv = s * dout - s^3 * v * <v, dout>
  std::vector<double> dhist(hist.size(), 0.0);
  std::vector<double> v(geo.block_len);
  for (int by = 0; by < geo.nby; ++by) {
    for (int bx = 0; bx < geo.nbx; ++bx) {
      const double* dout = d_desc.data() + (static_cast<std::size_t>(by) * geo.nbx + bx) * geo.block_len;
      gather_block(hist, spec, geo, by, bx, v.data());
      double ss = 0.0, vd = 0.0;
      for (int k = 0; k < geo.block_len; ++k) {
        ss += v[k] * v[k];
        vd += v[k] * dout[k];
      }
      const double s = 1.0 / std::sqrt(ss + eps2);
      const double s3 = s * s * s;
      for (int cy = 0; cy < spec.block; ++cy) {
        for (int cx = 0; cx < spec.block; ++cx) {
          double* dh = dhist.data() + (static_cast<std::size_t>(by + cy) * geo.ncx + bx + cx) * spec.bins;
          const int base = (cy * spec.block + cx) * spec.bins;
          for (int b = 0; b < spec.bins; ++b) dh[b] += s * dout[base + b] - s3 * v[base + b] * vd;
        }
      }
    }
  }

  GrayImage out{image.height, image.width, std::vector<double>(image.values.size(), 0.0)};
  const int H = image.height, W = image.width;
  for (int y = 0; y < geo.ncy * spec.cell; ++y) {
    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, H - 1);
    for (int x = 0; x < geo.ncx * spec.cell; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      const double gx = grad.gx[i], gy = grad.gy[i];
      const double m = std::hypot(gx, gy);
      if (m == 0.0) continue;
      BinTap taps[2];
      const int n = bin_taps(orientation(gx, gy), spec, taps);
      const double* dh = dhist.data() + (static_cast<std::size_t>(y / spec.cell) * geo.ncx + x / spec.cell) * spec.bins;
      // d(m w)/dgx = w gx/m - w' gy/m,  d(m w)/dgy = w gy/m + w' gx/m
      double dgx = 0.0, dgy = 0.0;
      for (int k = 0; k < n; ++k) {
        const double g = dh[taps[k].bin];
        dgx += g * (taps[k].w * gx - taps[k].dw * gy) / m;
        dgy += g * (taps[k].w * gy + taps[k].dw * gx) / m;
      }
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, W - 1);
      out.values[static_cast<std::size_t>(y) * W + xp] += dgx;
      out.values[static_cast<std::size_t>(y) * W + xm] -= dgx;
      out.values[static_cast<std::size_t>(yp) * W + x] += dgy;
      out.values[static_cast<std::size_t>(ym) * W + x] -= dgy;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constraints and config

void EditConstraints::validate(Resolution resolution, int channels) const {
  const auto where = std::to_string(resolution.height) + "x" + std::to_string(resolution.width);
  if (color.height != resolution.height || color.width != resolution.width || color.channels != channels) {
    throw ConfigError("invalid constraints: colour image must be " + where + "x" + std::to_string(channels));
  }
  if (mask.height != resolution.height || mask.width != resolution.width) {
    throw ConfigError("invalid constraints: mask must be " + where);
  }
  for (auto v : mask.values) {
    if (v > 1) throw ConfigError("invalid constraints: mask is not binary");
  }
  if (edge && (edge->height != resolution.height || edge->width != resolution.width || edge->channels != 1)) {
    throw ConfigError("invalid constraints: edge map must be " + where + "x1");
  }
  if (!color_active() && !edge_active()) throw ConfigError("invalid constraints: empty mask and no edge map");
}

std::string to_string(EditInit i) {
  switch (i) {
    case EditInit::Encoder: return "encoder";
    case EditInit::Given: return "given";
    case EditInit::Random: return "random";
  }
  return "random";
}

EditInit edit_init_from_string(const std::string& s) {
  if (s == "encoder") return EditInit::Encoder;
  if (s == "given") return EditInit::Given;
  if (s == "random") return EditInit::Random;
  throw ConfigError("unknown edit init '" + s + "' (expected encoder, given or random)");
}

void EditConfig::validate() const {
  if (!(alpha >= 0.0) || steps < 0 || !(step_size > 0.0) || restarts < 1 || !(jitter >= 0.0)) {
    throw ConfigError("invalid edit config");
  }
  if (init == EditInit::Given && !initial_latent) throw ConfigError("edit init 'given' needs an initial latent");
  hog.validate();
}

void to_json(nlohmann::json& j, const EditConfig& c) {
  j = {{"alpha", c.alpha},   {"steps", c.steps},         {"step_size", c.step_size},
       {"restarts", c.restarts}, {"init", to_string(c.init)}, {"jitter", c.jitter},
       {"hog", c.hog}};
  j["initial_latent"] = c.initial_latent ? nlohmann::json(*c.initial_latent) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, EditConfig& c) {
  EditConfig d;
  c.alpha = j.value("alpha", d.alpha);
  c.steps = j.value("steps", d.steps);
  c.step_size = j.value("step_size", d.step_size);
  c.restarts = j.value("restarts", d.restarts);
  c.init = edit_init_from_string(j.value("init", to_string(d.init)));
  c.jitter = j.value("jitter", d.jitter);
  c.hog = j.contains("hog") ? j.at("hog").get<HogSpec>() : d.hog;
  if (j.contains("initial_latent") && !j.at("initial_latent").is_null()) {
    c.initial_latent = j.at("initial_latent").get<BranchedLatent>();
  } else {
    c.initial_latent.reset();
  }
}

// ---------------------------------------------------------------------------
// Objective

namespace {

constexpr double kLuma[3] = {0.299, 0.587, 0.114};

/// Objective state shared by every evaluation: the target HOG is computed once.
class Objective {
 public:
  Objective(const EditConstraints& c, const EditConfig& config) : c_(c), config_(config) {
    if (c.edge) target_hog_ = hog(to_gray(*c.edge), config.hog);
    masked_ = c.mask.count();
  }

  /// Loss of one CHW sample; writes d loss / d pixel into `grad` when given.
  EditLoss evaluate(std::span<const float> chw, int channels, std::span<float> grad) const {
    const int H = c_.color.height, W = c_.color.width;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    EditLoss loss;
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0f);
    if (masked_ > 0) {
      const double scale = 1.0 / (static_cast<double>(masked_) * channels);
      for (std::size_t p = 0; p < plane; ++p) {
        if (!c_.mask.values[p]) continue;
        for (int ch = 0; ch < channels; ++ch) {
          const double diff = static_cast<double>(chw[ch * plane + p]) - c_.color.pixels[p * channels + ch];
          loss.color += std::abs(diff) * scale;
          if (!grad.empty()) grad[ch * plane + p] += static_cast<float>((diff > 0) - (diff < 0)) * scale;
        }
      }
    }
    if (c_.edge) {
      GrayImage gray{H, W, std::vector<double>(plane, 0.0)};
      for (std::size_t p = 0; p < plane; ++p) {
        if (channels >= 3) {
          for (int ch = 0; ch < 3; ++ch) gray.values[p] += kLuma[ch] * chw[ch * plane + p];
        } else {
          gray.values[p] = chw[p];
        }
      }
      const auto desc = hog(gray, config_.hog);
      const double inv = 1.0 / static_cast<double>(desc.size());
      std::vector<double> d_desc(desc.size());
      for (std::size_t k = 0; k < desc.size(); ++k) {
        const double diff = desc[k] - target_hog_[k];
        loss.edge += std::abs(diff) * inv;
        d_desc[k] = config_.alpha * static_cast<double>((diff > 0) - (diff < 0)) * inv;
      }
      if (!grad.empty() && config_.alpha > 0.0) {
        const GrayImage dgray = hog_backward(gray, config_.hog, d_desc);
        for (std::size_t p = 0; p < plane; ++p) {
          if (channels >= 3) {
            for (int ch = 0; ch < 3; ++ch) grad[ch * plane + p] += static_cast<float>(kLuma[ch] * dgray.values[p]);
          } else {
            grad[p] += static_cast<float>(dgray.values[p]);
          }
        }
      }
    }
    loss.total = loss.color + config_.alpha * loss.edge;
    return loss;
  }

 private:
  const EditConstraints& c_;
  const EditConfig& config_;
  std::vector<double> target_hog_;
  std::size_t masked_ = 0;
};

std::vector<float> to_chw(const Image& im) {
  std::vector<float> out(im.pixels.size());
  const std::size_t plane = static_cast<std::size_t>(im.height) * im.width;
  for (std::size_t p = 0; p < plane; ++p) {
    for (int ch = 0; ch < im.channels; ++ch) out[ch * plane + p] = im.pixels[p * im.channels + ch];
  }
  return out;
}

}  // namespace

EditLoss edit_loss_image(const Image& image, const EditConstraints& constraints, const EditConfig& config) {
  config.hog.validate();
  constraints.validate({image.height, image.width}, image.channels);
  const Objective objective(constraints, config);
  return objective.evaluate(to_chw(image), image.channels, {});
}

EditLoss edit_loss(const BranchedLatent& z, const EditConstraints& constraints, const EditConfig& config,
                   const Generator& g) {
  return edit_loss_image(generate(g, z), constraints, config);
}

void to_json(nlohmann::json& j, const EditResult& r) {
  j = {{"latent", r.latent},
       {"final_loss", r.final_loss},
       {"initial_loss", r.initial_loss},
       {"trace", r.trace},
       {"restart_losses", r.restart_losses},
       {"best_restart", r.best_restart},
       {"init", to_string(r.init_used)},
       {"initial_latent", r.initial_latent}};
}

// ---------------------------------------------------------------------------
// Optimizer

EditResult optimize_edit(const Generator& g, const Encoder* encoder, const EditConstraints& constraints,
                         const EditConfig& config, std::uint64_t seed,
                         const std::function<void(double)>& progress) {
  config.validate();
  const NetConfig& nc = g.config();
  constraints.validate(g.output_resolution(), nc.output_channels);
  const LatentLayout layout = nc.layout();
  const int dims = layout.total();
  const int R = config.restarts;

  // Starting points.
  BranchedLatent start;
  switch (config.init) {
    case EditInit::Encoder: {
      if (encoder == nullptr) throw ConfigError("edit init 'encoder' needs an encoder");
      Image probe = constraints.color;
      if (!constraints.color_active()) {
        for (int y = 0; y < probe.height; ++y) {
          for (int x = 0; x < probe.width; ++x) {
            for (int ch = 0; ch < probe.channels; ++ch) probe.at(y, x, ch) = constraints.edge->at(y, x, 0);
          }
        }
      }
      start = encode(*encoder, probe);
      break;
    }
    case EditInit::Given:
      if (!config.initial_latent->matches(layout)) throw ConfigError("initial latent does not match the generator");
      start = *config.initial_latent;
      break;
    case EditInit::Random:
      start = sample_latent(layout, SamplePolicy::all_uniform(layout.branches()), derive_seed(seed, {0}));
      break;
  }
  std::vector<double> z(static_cast<std::size_t>(R) * dims);
  const auto flat0 = start.flat();
  std::copy(flat0.begin(), flat0.end(), z.begin());
  for (int r = 1; r < R; ++r) {
    double* zr = z.data() + static_cast<std::size_t>(r) * dims;
    if (config.init == EditInit::Random) {
      const auto f = sample_latent(layout, SamplePolicy::all_uniform(layout.branches()),
                                   derive_seed(seed, {static_cast<std::uint64_t>(r)}))
                         .flat();
      std::copy(f.begin(), f.end(), zr);
    } else {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
      for (int k = 0; k < dims; ++k) zr[k] = std::clamp(flat0[k] + rng.uniform(-config.jitter, config.jitter), -1.0, 1.0);
    }
  }

  const Objective objective(constraints, config);
  const Sequential graph = g.graph();
  const int channels = nc.output_channels;
  std::vector<double> m(z.size(), 0.0), v(z.size(), 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  std::vector<std::vector<double>> traces(R);
  double best_loss = std::numeric_limits<double>::infinity();
  int best_r = 0;
  std::vector<double> best_z(flat0);
  std::vector<double> restart_best(R, std::numeric_limits<double>::infinity());

  for (int t = 0; t <= config.steps; ++t) {
    Tensor zt(Shape4{R, dims, 1, 1});
    for (std::size_t k = 0; k < z.size(); ++k) zt.data()[k] = static_cast<float>(z[k]);
    Trace trace;
    const Tensor images = graph.forward(g.params(), zt, t < config.steps ? &trace : nullptr);
    Tensor dimages(images.shape());
    for (int r = 0; r < R; ++r) {
      const auto grad = t < config.steps ? dimages.sample(r) : std::span<float>{};
      const double loss = objective.evaluate(images.sample(r), channels, grad).total;
      traces[r].push_back(loss);
      restart_best[r] = std::min(restart_best[r], loss);
      if (loss < best_loss) {
        best_loss = loss;
        best_r = r;
        best_z.assign(z.begin() + static_cast<std::ptrdiff_t>(r) * dims,
                      z.begin() + static_cast<std::ptrdiff_t>(r + 1) * dims);
      }
    }
    if (t == config.steps) break;
    GradSet unused;
    const Tensor dz = graph.backward(g.params(), trace, dimages, unused, {}, true);
    const double c1 = 1.0 / (1.0 - std::pow(beta1, t + 1));
    const double c2 = 1.0 / (1.0 - std::pow(beta2, t + 1));
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double gk = dz.data()[k];
      m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
      v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
      z[k] = std::clamp(z[k] - config.step_size * (m[k] * c1) / (std::sqrt(v[k] * c2) + eps), -1.0, 1.0);
    }
    if (progress) progress(static_cast<double>(t + 1) / config.steps);
  }

  EditResult out;
  out.latent = BranchedLatent::from_flat(layout, best_z);
  out.image = generate(g, out.latent);
  out.final_loss = edit_loss_image(out.image, constraints, config).total;
  out.initial_loss = traces[0].front();
  out.trace = traces[best_r];
  out.restart_losses = restart_best;
  out.best_restart = best_r;
  out.init_used = config.init;
  out.initial_latent = start;
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark

std::vector<EditConstraints> make_benchmark_cases(std::span<const Image> images, int n_color, int n_edge) {
  if (n_color < 0 || n_edge < 0 || static_cast<std::size_t>(n_color + n_edge) > images.size()) {
    throw ConfigError("not enough images for the requested benchmark cases");
  }
  std::vector<EditConstraints> cases;
  for (int i = 0; i < n_color + n_edge; ++i) {
    const Image& im = images[i];
    EditConstraints c;
    if (i < n_color) {
      c.color = im;
      c.mask = Mask(im.height, im.width, 1);
    } else {
      c.color = Image(im.height, im.width, im.channels);
      c.mask = Mask(im.height, im.width, 0);
      const GrayImage lum = luminance(im);
      Image e(im.height, im.width, 1);
      for (std::size_t p = 0; p < lum.values.size(); ++p) e.pixels[p] = static_cast<float>(lum.values[p]);
      c.edge = std::move(e);
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

void to_json(nlohmann::json& j, const BenchmarkResult& r) {
  j = {{"mean_loss", r.mean_loss}, {"case_losses", r.case_losses}};
}

BenchmarkResult benchmark_manifold(std::span<const BenchmarkModel> models, std::span<const EditConstraints> cases,
                                   const EditConfig& config, std::uint64_t seed) {
  if (cases.empty()) throw ConfigError("benchmark needs at least one case");
  BenchmarkResult out;
  for (const auto& model : models) {
    if (model.generator == nullptr) throw ConfigError("benchmark model '" + model.name + "' has no generator");
    auto& losses = out.case_losses[model.name];
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto r = optimize_edit(*model.generator, model.encoder, cases[i], config, derive_seed(seed, {i}));
      losses.push_back(r.final_loss);
    }
    double sum = 0.0;
    for (double l : losses) sum += l;
    out.mean_loss[model.name] = sum / static_cast<double>(losses.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Case directories

void save_edit_case(const std::filesystem::path& dir, const EditConstraints& c, const EditConfig& config) {
  std::filesystem::create_directories(dir);
  write_png(dir / "color.png", c.color);
  write_mask_png(dir / "mask.png", c.mask);
  if (c.edge) write_png(dir / "edge.png", *c.edge);
  const std::string text = nlohmann::json(config).dump(2) + "\n";
  write_file_atomic(dir / "config.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::pair<EditConstraints, EditConfig> load_edit_case(const std::filesystem::path& dir) {
  EditConstraints c;
  c.color = read_image(dir / "color.png", 3);
  c.mask = read_mask_png(dir / "mask.png");
  if (std::filesystem::exists(dir / "edge.png")) c.edge = read_image(dir / "edge.png", 1);
  EditConfig config;
  if (std::filesystem::exists(dir / "config.json")) {
    const auto bytes = read_file(dir / "config.json");
    try {
      config = nlohmann::json::parse(bytes.begin(), bytes.end()).get<EditConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError((dir / "config.json").string() + ": " + e.what());
    }
  }
  return {std::move(c), std::move(config)};
}

}  // namespace branchgan
