#pragma once

// Growable generator, mirror discriminator and projection encoder.
//
// The generator concatenates all sub-vectors and feeds a single linear layer;
// freezing a branch means feeding its sub-vector zeros, which makes the
// gradient of that branch's weight columns exactly zero. Stage s of the
// generator is
//
//   linear -> reshape(base, ch[0])
//     -> (s-1) x [deconv 5x5/2, instance norm, leaky relu]
//     -> head_s: deconv 5x5/2 + sigmoid
//
// and the discriminator mirrors it from the input side. Growing appends the
// next up-block plus a new output head; the old head stays in the parameter
// set, unused, so earlier stages can still be evaluated.

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "branchgan/kernels.hpp"
#include "branchgan/latent.hpp"
#include "branchgan/tensor.hpp"

namespace branchgan {

struct Resolution {
  int height = 0;
  int width = 0;
  bool operator==(const Resolution&) const = default;
};

struct NetConfig {
  std::vector<int> subvector_dims;
  Resolution base_resolution;
  /// Final output size. When left at {0,0} it is base * 2^stages.
  Resolution output_resolution;
  /// Feature channels at levels 0..stages-1, coarsest first.
  std::vector<int> channel_schedule;
  int stages = 1;
  int output_channels = 3;
  float norm_epsilon = 1e-5f;
  float weight_init_stddev = 0.02f;
  float leaky_slope = 0.2f;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
  [[nodiscard]] LatentLayout layout() const { return LatentLayout{subvector_dims}; }
  /// Spatial size at a level: 0 is the reshaped linear output, s is the
  /// output of stage s. Obtained by ceil-halving from the final resolution.
  [[nodiscard]] Resolution resolution(int level) const;

  bool operator==(const NetConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

struct ParamTensor {
  std::vector<int> shape;
  std::vector<float> values;
  bool operator==(const ParamTensor&) const = default;
};

using ParamSet = std::map<std::string, ParamTensor>;
using GradSet = std::map<std::string, std::vector<float>>;

enum class LayerKind { Linear, Conv, Deconv, InstanceNorm, LeakyRelu, Sigmoid, Tanh };

struct Layer {
  LayerKind kind{};
  std::string weight;  // linear/conv weight, or norm scale
  std::string bias;    // linear/conv bias, or norm offset
  Shape4 in;           // per-sample shapes (n = 1)
  Shape4 out;
  ConvGeometry geom;   // conv: in -> out; deconv: out -> in
  float param = 0.0f;  // leaky slope or norm epsilon
};

/// Activations recorded by a forward pass for the matching backward pass.
struct Trace {
  std::vector<Tensor> inputs;   // input of each layer
  std::vector<Tensor> x_hat;    // instance norm only
  std::vector<Tensor> inv_std;  // instance norm only
  Tensor output;
};

class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
  [[nodiscard]] Shape4 input_shape(int batch) const;
  [[nodiscard]] Shape4 output_shape(int batch) const;

  Tensor forward(const ParamSet& params, const Tensor& x, Trace* trace = nullptr) const;

  /// Backpropagates `dout`. Gradients of parameters named in `trainable` are
  /// accumulated into `grads` (allocated on demand); other parameters get no
  /// gradient work. Returns the input gradient when `want_input_grad`,
  /// otherwise an empty tensor. Layers below the earliest one that needs work
  /// are skipped entirely.
  Tensor backward(const ParamSet& params, const Trace& trace, const Tensor& dout, GradSet& grads,
                  const std::set<std::string>& trainable, bool want_input_grad) const;

 private:
  std::vector<Layer> layers_;
};

/// Parameters plus the stage they have been grown to.
class Network {
 public:
  [[nodiscard]] const NetConfig& config() const { return config_; }
  [[nodiscard]] int stage() const { return stage_; }
  [[nodiscard]] const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }
  [[nodiscard]] std::set<std::string> param_names() const;

 protected:
  Network(NetConfig config, int stage) : config_(std::move(config)), stage_(stage) {}
  void add_param(const std::string& name, std::vector<int> shape, float init_value);
  void add_normal_param(const std::string& name, std::vector<int> shape, std::uint64_t seed);

  NetConfig config_;
  int stage_;
  ParamSet params_;
};

class Generator : public Network {
 public:
  Generator(NetConfig config, int stage, ParamSet params);

  [[nodiscard]] Sequential graph() const { return graph(stage_); }
  /// Graph of an earlier (or the current) stage, using the retained heads.
  [[nodiscard]] Sequential graph(int stage) const;
  /// Graph truncated after up-block `block` (no head); used to compare
  /// hidden activations across growth.
  [[nodiscard]] Sequential hidden_graph(int block) const;
  [[nodiscard]] Resolution output_resolution() const { return config_.resolution(stage_); }

  void grow(std::uint64_t seed);

  /// Parameters of the block most recently added (up-block + head, or the
  /// whole network at stage 1).
  [[nodiscard]] std::set<std::string> newest_block_params() const;
  [[nodiscard]] static std::string first_linear_weight() { return "g.linear.weight"; }

  /// [N, sum(dims), 1, 1] input tensor.
  [[nodiscard]] Tensor latent_batch(std::span<const BranchedLatent> zs) const;
  Tensor forward(const Tensor& z, Trace* trace = nullptr) const;
};

class Discriminator : public Network {
 public:
  Discriminator(NetConfig config, int stage, ParamSet params);

  [[nodiscard]] Sequential graph() const;
  void grow(std::uint64_t seed);
  /// [N,C,H,W] -> [N,1,1,1] logits.
  Tensor forward(const Tensor& images, Trace* trace = nullptr) const;
};

class Encoder : public Network {
 public:
  Encoder(NetConfig config, int stage, ParamSet params);

  [[nodiscard]] Sequential graph() const;
  /// [N,C,H,W] -> [N, sum(dims), 1, 1] in [-1, 1].
  Tensor forward(const Tensor& images, Trace* trace = nullptr) const;
};

Generator build_generator(const NetConfig& config, int stage, std::uint64_t seed);
Discriminator build_discriminator(const NetConfig& config, int stage, std::uint64_t seed);
Encoder build_encoder(const NetConfig& config, int stage, std::uint64_t seed);

Image generate(const Generator& g, const BranchedLatent& z);
std::vector<Image> generate(const Generator& g, std::span<const BranchedLatent> zs);
/// One logit per image.
std::vector<float> discriminate(const Discriminator& d, std::span<const Image> images);
BranchedLatent encode(const Encoder& e, const Image& image);
std::vector<BranchedLatent> encode(const Encoder& e, std::span<const Image> images);

/// Splits an [N, sum(dims), 1, 1] tensor into latents, clamping to [-1, 1].
std::vector<BranchedLatent> latents_from_tensor(const LatentLayout& layout, const Tensor& t);

}  // namespace branchgan
