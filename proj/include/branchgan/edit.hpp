#pragma once

// Constraint-driven latent editing: a differentiable HOG descriptor, the
// colour + edge objective, Adam over z with restarts, and the minimum-loss
// benchmark.
//
// HOG: centred [-1,0,1] differences with clamped borders, unsigned
// orientation in [0, pi), soft orientation binning with the raised-cosine
// kernel cos^2(pi d / (2 delta)) (|d| < delta, delta = pi / bins), which
// splits each gradient between its two nearest bin centres with weights
// summing to one and is continuously differentiable, hard spatial cells,
// and L2-normalized overlapping blocks v / sqrt(|v|^2 + eps^2) with a
// one-cell stride.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "branchgan/latent.hpp"
#include "branchgan/networks.hpp"
#include "branchgan/tensor.hpp"

namespace branchgan {

struct HogSpec {
  int cell = 8;
  int bins = 9;
  int block = 2;
  double epsilon = 1e-6;

  void validate() const;
  /// Descriptor length for an image of the given size.
  [[nodiscard]] std::size_t length(int height, int width) const;
};

void to_json(nlohmann::json& j, const HogSpec& s);
void from_json(const nlohmann::json& j, HogSpec& s);

/// Single-channel image in row-major order, double precision.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> values;
};

GrayImage luminance(const Image& image);
GrayImage to_gray(const Image& single_channel);

std::vector<double> hog(const GrayImage& image, const HogSpec& spec);
/// Gradient of sum_k d_desc[k] * hog(image)[k] with respect to the pixels.
GrayImage hog_backward(const GrayImage& image, const HogSpec& spec, std::span<const double> d_desc);

struct EditConstraints {
  Image color;                 // H x W x C target colours
  Mask mask;                   // H x W, 1 where a colour is assigned
  std::optional<Image> edge;   // H x W x 1 edge map

  /// Throws ConfigError unless shapes agree with `resolution` and at least
  /// one term is active.
  void validate(Resolution resolution, int channels) const;
  [[nodiscard]] bool color_active() const { return mask.count() > 0; }
  [[nodiscard]] bool edge_active() const { return edge.has_value(); }
};

enum class EditInit { Encoder, Given, Random };

std::string to_string(EditInit i);
EditInit edit_init_from_string(const std::string& s);

struct EditConfig {
  double alpha = 10.0;
  int steps = 200;
  double step_size = 0.05;
  int restarts = 3;
  EditInit init = EditInit::Encoder;
  std::optional<BranchedLatent> initial_latent;  // required for EditInit::Given
  /// Restarts after the first start from the initial latent plus U(-jitter, jitter)
  /// (encoder and given modes) or from a fresh U(-1,1) sample (random mode).
  double jitter = 0.25;
  HogSpec hog;

  void validate() const;
};

void to_json(nlohmann::json& j, const EditConfig& c);
void from_json(const nlohmann::json& j, EditConfig& c);

struct EditLoss {
  double total = 0.0;
  double color = 0.0;
  double edge = 0.0;
};

/// mean over masked pixels of the channel-mean |C - G(z)|, plus
/// alpha * mean |HOG(gray G(z)) - HOG(E)| when an edge map is given.
EditLoss edit_loss(const BranchedLatent& z, const EditConstraints& constraints, const EditConfig& config,
                   const Generator& g);
/// Same objective evaluated on an image.
EditLoss edit_loss_image(const Image& image, const EditConstraints& constraints, const EditConfig& config);

struct EditResult {
  BranchedLatent latent;
  Image image;
  double final_loss = 0.0;
  double initial_loss = 0.0;  // loss at the first start of the first restart
  std::vector<double> trace;  // per-step loss of the restart that produced the result
  std::vector<double> restart_losses;
  int best_restart = 0;
  EditInit init_used = EditInit::Random;
  BranchedLatent initial_latent;
};

void to_json(nlohmann::json& j, const EditResult& r);

/// Adam over z with coordinates clipped to [-1,1] after every step. The best
/// iterate over all restarts and steps is returned; restarts run as one batch.
/// `progress` receives the completed fraction after every step.
EditResult optimize_edit(const Generator& g, const Encoder* encoder, const EditConstraints& constraints,
                         const EditConfig& config, std::uint64_t seed,
                         const std::function<void(double)>& progress = {});

// ---------------------------------------------------------------------------
// Benchmark

/// Full-mask colour cases from the first n_color images and edge-only cases
/// (E = luminance, empty mask) from the next n_edge images.
std::vector<EditConstraints> make_benchmark_cases(std::span<const Image> images, int n_color, int n_edge);

struct BenchmarkModel {
  std::string name;
  const Generator* generator = nullptr;
  const Encoder* encoder = nullptr;  // used when the config asks for encoder init
};

struct BenchmarkResult {
  std::map<std::string, double> mean_loss;
  std::map<std::string, std::vector<double>> case_losses;
};

void to_json(nlohmann::json& j, const BenchmarkResult& r);

/// Case i of every model uses seed derive_seed(seed, {i}), so models are
/// compared on identical cases, budgets and restart seeds.
BenchmarkResult benchmark_manifold(std::span<const BenchmarkModel> models, std::span<const EditConstraints> cases,
                                   const EditConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Case directories: color.png, mask.png (1-bit), optional edge.png, config.json

void save_edit_case(const std::filesystem::path& dir, const EditConstraints& c, const EditConfig& config);
std::pair<EditConstraints, EditConfig> load_edit_case(const std::filesystem::path& dir);

}  // namespace branchgan
