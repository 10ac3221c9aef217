#pragma once

// Adversarial training: the progressive grow-and-defreeze pipeline, the
// two-phase schedule inside each stage, a non-progressive joint baseline,
// encoder training and the branch-suppression lab.
//
// Every random quantity of step k is drawn from derive_seed(seed, {k, ...})
// and batch k of the dataset is a pure function of (shuffle seed, k), so a
// run resumed from a checkpoint continues bit-exactly.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "branchgan/checkpoint.hpp"
#include "branchgan/data_io.hpp"
#include "branchgan/latent.hpp"
#include "branchgan/networks.hpp"
#include "branchgan/optim.hpp"
#include "branchgan/spectral.hpp"

namespace branchgan {

/// Non-finite loss or parameters during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RampShape { Linear, Cosine };

std::string to_string(RampShape r);
RampShape ramp_from_string(const std::string& s);

struct ScheduleStage {
  int stage = 1;
  Resolution resolution;
  int steps = 0;
  double stage1_fraction = 0.25;
  RampShape ramp = RampShape::Linear;
  double alpha_start = 0.0;
  double alpha_end = 1.0;
  /// Sub-vectors fed nonzero samples at the end of the stage.
  std::vector<int> active;
  /// The sub-vector activated by this stage; -1 for the first stage.
  int new_subvector = -1;

  /// Stage I length; the first stage has no Stage I.
  [[nodiscard]] int stage1_steps() const;
  [[nodiscard]] int stage2_steps() const { return steps - stage1_steps(); }
  /// Ramp value at Stage II step k (0-based); hits alpha_start at k = 0 and
  /// alpha_end at the last step.
  [[nodiscard]] double alpha_at(int k) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const ScheduleStage& s);
void from_json(const nlohmann::json& j, ScheduleStage& s);

/// One stage per network stage; stage s activates z^{s-1}.
std::vector<ScheduleStage> make_schedule(const NetConfig& config, const std::vector<int>& steps_per_stage,
                                         double stage1_fraction = 0.25, RampShape ramp = RampShape::Linear);
/// Steps per stage from epochs (full passes over the dataset).
std::vector<int> steps_from_epochs(const NetConfig& config, double epochs, int dataset_size, int batch_size);

/// Parameter names read by a graph.
std::set<std::string> graph_params(const Sequential& graph);

struct StepResult {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct StepOptions {
  /// Compute gradients for every generator parameter in the graph, not only
  /// the masked ones (updates still respect the mask). Used to check frozen
  /// columns at every step.
  bool full_generator_grads = false;
  /// Receives the generator gradients of the step when set.
  std::function<void(const GradSet&)> on_generator_grads;
};

/// One discriminator update followed by one generator update with the
/// non-saturating loss. Latent i of the batch is
/// sample_latent(layout, policy, derive_seed(seed, {step, i})). Throws
/// TrainingError and leaves every parameter untouched when a loss is not
/// finite.
StepResult gan_step(Generator& g, Discriminator& d, const Tensor& real_batch, const SamplePolicy& policy,
                    Adam& g_opt, Adam& d_opt, const std::set<std::string>& g_mask,
                    const std::set<std::string>& d_mask, std::uint64_t seed, std::int64_t step,
                    const StepOptions& options = {});

struct StepEvent {
  std::int64_t step = 0;
  int stage = 0;
  int phase = 0;
  double alpha = 0.0;
  const SamplePolicy* policy = nullptr;
  const std::set<std::string>* g_mask = nullptr;
  StepResult losses;
};

struct TrainHooks {
  std::ostream* loss_csv = nullptr;                             // one row per step
  std::function<void(const nlohmann::json&)> on_event;          // stage transitions
  std::function<void(const StepEvent&)> on_step;
  std::function<void(const Checkpoint&, int stage)> on_stage_end;
  StepOptions step_options;
};

/// Header of the per-step loss CSV.
std::string loss_csv_header();

class ProgressiveTrainer {
 public:
  ProgressiveTrainer(NetConfig config, std::vector<ScheduleStage> schedule, OptimSpec optim, std::uint64_t seed);
  /// Continues from a checkpoint that carries a train state.
  ProgressiveTrainer(const Checkpoint& ck, std::vector<ScheduleStage> schedule);

  /// Runs until the schedule is complete or `max_steps` more steps are done.
  /// Returns true when the whole schedule has finished.
  bool run(const Dataset& data, const TrainHooks& hooks = {}, std::optional<std::int64_t> max_steps = {});
  /// Runs the rest of the current stage only.
  void run_stage(const Dataset& data, const TrainHooks& hooks = {});

  [[nodiscard]] bool finished() const;
  [[nodiscard]] const Generator& generator() const { return g_; }
  [[nodiscard]] const Discriminator& discriminator() const { return d_; }
  [[nodiscard]] const TrainState& state() const { return state_; }
  [[nodiscard]] const std::vector<ScheduleStage>& schedule() const { return schedule_; }
  [[nodiscard]] Checkpoint checkpoint() const;

  /// Policy, phase, alpha and generator mask of the next step.
  struct Plan {
    SamplePolicy policy;
    int phase = 0;
    double alpha = 1.0;
    std::set<std::string> g_mask;
    std::set<std::string> d_mask;
  };
  [[nodiscard]] Plan plan() const;

 private:
  bool step_once(const Dataset& data, const TrainHooks& hooks);
  void begin_stage_if_needed(const TrainHooks& hooks);

  NetConfig config_;
  std::vector<ScheduleStage> schedule_;
  Generator g_;
  Discriminator d_;
  TrainState state_;
};

/// Trains the whole schedule from scratch and returns the final checkpoint.
Checkpoint run_progressive(const NetConfig& config, const std::vector<ScheduleStage>& schedule, const Dataset& data,
                           const OptimSpec& optim, std::uint64_t seed, const TrainHooks& hooks = {});

/// Non-progressive baseline: the final-stage architecture trained from the
/// start with every sub-vector ~ U(-1,1) and every parameter trainable.
Checkpoint run_joint(const NetConfig& config, std::int64_t steps, const Dataset& data, const OptimSpec& optim,
                     std::uint64_t seed, const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// Encoder

struct EncoderTrainSpec {
  int steps = 600;
  OptimSpec optim{0.001, 0.9, 0.999, 1e-8, 32};
  /// Weight of the pixel term |G(E(G(z))) - G(z)|^2; 0 disables it.
  double pixel_weight = 0.0;
  int eval_every = 50;
  int eval_samples = 256;
};

struct EncoderTrainResult {
  Encoder encoder;
  /// (step, mean |E(G(z)) - z|) on a held-out latent set, including step 0.
  std::vector<std::pair<int, double>> curve;
};

/// Mean absolute latent recovery error of `e` on `zs`.
double latent_recovery_error(const Generator& g, const Encoder& e, std::span<const BranchedLatent> zs);

/// Trains an encoder on pairs (G(z), z), z ~ U(-1,1), minimizing the mean
/// squared latent error (plus the optional pixel term).
EncoderTrainResult train_encoder(const Generator& g, const EncoderTrainSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Branch suppression

enum class SuppressionKind { PretrainedDominant, SequentialDefreeze };

std::string to_string(SuppressionKind k);
SuppressionKind suppression_from_string(const std::string& s);

struct SuppressionSpec {
  SuppressionKind kind = SuppressionKind::PretrainedDominant;
  /// Steps per phase; every phase gets the same budget.
  int steps_per_phase = 300;
  /// Network stage (resolution) the experiment trains at; 0 means final.
  int stage = 0;
  int n_constants = 8;
  int n_samples = 16;
};

struct SuppressionReport {
  SuppressionKind kind{};
  /// Total output variance (sum over pixels and channels) attributed to each
  /// branch, averaged over the constants.
  std::vector<double> branch_variance;
  std::vector<VarianceImage> variance_images;
  /// ratios[i][j] = variance_i / variance_j; empty when variance_j is 0.
  std::vector<std::vector<std::optional<double>>> ratios;
  /// Sampling range of each branch at the end of training (0 for branches
  /// that were never activated).
  std::vector<double> branch_range;
  std::vector<int> activation_order;
  int n_constants = 0;
  int n_samples = 0;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const SuppressionReport& r);

/// Attribution of output variance to branches: branch t is varied over its
/// training-time range with every other branch held at a constant drawn from
/// its own range.
SuppressionReport measure_branch_variance(const Generator& g, const std::vector<double>& branch_range, int n_constants,
                                          int n_samples, std::uint64_t seed);

/// Kind (a): z^0 alone for one phase, then every branch together for one
/// phase. Kind (b): one phase per branch, activating z^0, z^1, ... in turn
/// and never freezing an activated branch again.
SuppressionReport suppression_experiment(const SuppressionSpec& spec, const NetConfig& config, const Dataset& data,
                                         const OptimSpec& optim, std::uint64_t seed, const TrainHooks& hooks = {});

/// Wraps a generator as an image model for the spectral metrics.
ImageModel image_model(const Generator& g);

}  // namespace branchgan
