#include "branchgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>

#include "branchgan/rng.hpp"

namespace branchgan {

std::string to_string(RampShape r) { return r == RampShape::Linear ? "linear" : "cosine"; }

RampShape ramp_from_string(const std::string& s) {
  if (s == "linear") return RampShape::Linear;
  if (s == "cosine") return RampShape::Cosine;
  throw ConfigError("unknown alpha ramp '" + s + "' (expected linear or cosine)");
}

// ---------------------------------------------------------------------------
// Schedule

int ScheduleStage::stage1_steps() const {
  if (new_subvector < 0) return 0;
  return static_cast<int>(std::floor(stage1_fraction * steps));
}

double ScheduleStage::alpha_at(int k) const {
  const int n = stage2_steps();
  if (n <= 1) return alpha_end;
  k = std::clamp(k, 0, n - 1);
  if (k == n - 1) return alpha_end;
  const double u = static_cast<double>(k) / (n - 1);
  const double shaped = ramp == RampShape::Linear ? u : 0.5 - 0.5 * std::cos(std::numbers::pi * u);
  return alpha_start + (alpha_end - alpha_start) * shaped;
}

void ScheduleStage::validate() const {
  if (stage < 1) throw ConfigError("schedule stage index must be >= 1");
  if (steps < 1) throw ConfigError("schedule stage " + std::to_string(stage) + " needs at least one step");
  if (!(stage1_fraction > 0.0 && stage1_fraction < 1.0)) throw ConfigError("stage1_fraction must lie in (0, 1)");
  if (!(alpha_start >= 0.0 && alpha_end <= 1.0 && alpha_start <= alpha_end)) {
    throw ConfigError("alpha ramp must satisfy 0 <= start <= end <= 1");
  }
  if (active.empty()) throw ConfigError("schedule stage " + std::to_string(stage) + " activates no sub-vector");
  if (new_subvector >= 0 && std::find(active.begin(), active.end(), new_subvector) == active.end()) {
    throw ConfigError("newly activated sub-vector must be in the active set");
  }
}

void to_json(nlohmann::json& j, const ScheduleStage& s) {
  j = nlohmann::json{{"stage", s.stage},
                     {"resolution", {s.resolution.height, s.resolution.width}},
                     {"steps", s.steps},
                     {"stage1_fraction", s.stage1_fraction},
                     {"ramp", to_string(s.ramp)},
                     {"alpha_start", s.alpha_start},
                     {"alpha_end", s.alpha_end},
                     {"active", s.active},
                     {"new_subvector", s.new_subvector}};
}

void from_json(const nlohmann::json& j, ScheduleStage& s) {
  try {
    s.stage = j.at("stage").get<int>();
    const auto r = j.at("resolution").get<std::vector<int>>();
    if (r.size() != 2) throw ConfigError("resolution must be [height, width]");
    s.resolution = {r[0], r[1]};
    s.steps = j.at("steps").get<int>();
    s.stage1_fraction = j.value("stage1_fraction", 0.25);
    s.ramp = ramp_from_string(j.value("ramp", std::string("linear")));
    s.alpha_start = j.value("alpha_start", 0.0);
    s.alpha_end = j.value("alpha_end", 1.0);
    s.active = j.at("active").get<std::vector<int>>();
    s.new_subvector = j.value("new_subvector", -1);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid schedule stage: ") + e.what());
  }
  s.validate();
}

std::vector<ScheduleStage> make_schedule(const NetConfig& config, const std::vector<int>& steps_per_stage,
                                         double stage1_fraction, RampShape ramp) {
  config.validate();
  if (static_cast<int>(steps_per_stage.size()) != config.stages) {
    throw ConfigError("schedule has " + std::to_string(steps_per_stage.size()) + " stages, network has " +
                      std::to_string(config.stages));
  }
  if (config.layout().branches() < config.stages) {
    throw ConfigError("progressive training needs one sub-vector per stage");
  }
  std::vector<ScheduleStage> out;
  for (int s = 1; s <= config.stages; ++s) {
    ScheduleStage st;
    st.stage = s;
    st.resolution = config.resolution(s);
    st.steps = steps_per_stage[s - 1];
    st.stage1_fraction = stage1_fraction;
    st.ramp = ramp;
    for (int t = 0; t < s; ++t) st.active.push_back(t);
    st.new_subvector = s == 1 ? -1 : s - 1;
    st.validate();
    out.push_back(st);
  }
  return out;
}

std::vector<int> steps_from_epochs(const NetConfig& config, double epochs, int dataset_size, int batch_size) {
  if (!(epochs > 0.0) || dataset_size < 1 || batch_size < 1) throw ConfigError("invalid epoch specification");
  const int steps = static_cast<int>(std::ceil(epochs * dataset_size / batch_size));
  return std::vector<int>(config.stages, std::max(steps, 1));
}

std::set<std::string> graph_params(const Sequential& graph) {
  std::set<std::string> out;
  for (const Layer& l : graph.layers()) {
    if (!l.weight.empty()) out.insert(l.weight);
    if (!l.bias.empty()) out.insert(l.bias);
  }
  return out;
}

// ---------------------------------------------------------------------------
// One adversarial step

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor concat_batches(const Tensor& a, const Tensor& b) {
  Shape4 s = a.shape();
  s.n += b.shape().n;
  Tensor out(s);
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

}  // namespace

StepResult gan_step(Generator& g, Discriminator& d, const Tensor& real_batch, const SamplePolicy& policy,
                    Adam& g_opt, Adam& d_opt, const std::set<std::string>& g_mask,
                    const std::set<std::string>& d_mask, std::uint64_t seed, std::int64_t step,
                    const StepOptions& options) {
  const int batch = real_batch.shape().n;
  if (batch < 1) throw ConfigError("empty real batch");
  const LatentLayout layout = g.config().layout();
  std::vector<BranchedLatent> zs;
  zs.reserve(batch);
  for (int i = 0; i < batch; ++i) {
    zs.push_back(sample_latent(layout, policy, derive_seed(seed, {static_cast<std::uint64_t>(step),
                                                                  static_cast<std::uint64_t>(i)})));
  }

  const Sequential gg = g.graph();
  Trace gtrace;
  const Tensor fake = gg.forward(g.params(), g.latent_batch(zs), &gtrace);
  if (fake.shape() != real_batch.shape()) {
    throw ConfigError("real batch " + to_string(real_batch.shape()) + " does not match generator output " +
                      to_string(fake.shape()));
  }

  // Discriminator: real and fake share one pass; instance norm is per sample.
  const Sequential dg = d.graph();
  Trace dtrace;
  const Tensor logits = dg.forward(d.params(), concat_batches(real_batch, fake), &dtrace);
  StepResult result;
  Tensor dlogits(logits.shape());
  for (int i = 0; i < batch; ++i) {
    const double lr = logits.data()[i];
    const double lf = logits.data()[batch + i];
    result.d_loss += (softplus(-lr) + softplus(lf)) / batch;
    dlogits.data()[i] = static_cast<float>(-sigmoid(-lr) / batch);
    dlogits.data()[batch + i] = static_cast<float>(sigmoid(lf) / batch);
  }
  if (!std::isfinite(result.d_loss)) {
    throw TrainingError("discriminator loss is not finite at step " + std::to_string(step));
  }
  GradSet d_grads;
  dg.backward(d.params(), dtrace, dlogits, d_grads, d_mask, false);

  ParamSet d_saved;
  for (const auto& name : d_mask) d_saved[name] = d.params().at(name);
  const Adam d_opt_saved = d_opt;
  d_opt.step(d.params(), d_grads, d_mask);

  // Generator: non-saturating loss against the updated discriminator.
  Trace dtrace2;
  const Tensor logits2 = dg.forward(d.params(), fake, &dtrace2);
  Tensor dl2(logits2.shape());
  for (int i = 0; i < batch; ++i) {
    const double lf = logits2.data()[i];
    result.g_loss += softplus(-lf) / batch;
    dl2.data()[i] = static_cast<float>(-sigmoid(-lf) / batch);
  }
  if (!std::isfinite(result.g_loss)) {
    for (auto& [name, t] : d_saved) d.params()[name] = std::move(t);
    d_opt = d_opt_saved;
    throw TrainingError("generator loss is not finite at step " + std::to_string(step));
  }
  GradSet unused;
  const Tensor dfake = dg.backward(d.params(), dtrace2, dl2, unused, {}, true);
  GradSet g_grads;
  gg.backward(g.params(), gtrace, dfake, g_grads, options.full_generator_grads ? graph_params(gg) : g_mask, false);
  if (options.on_generator_grads) options.on_generator_grads(g_grads);
  g_opt.step(g.params(), g_grads, g_mask);
  return result;
}

std::string loss_csv_header() { return "step,stage,phase,alpha,d_loss,g_loss"; }

namespace {

void write_loss_row(std::ostream& os, const LossRecord& r) {
  std::ostringstream line;
  line << std::setprecision(9) << r.step << ',' << r.stage << ',' << r.phase << ',' << r.alpha << ',' << r.d_loss
       << ',' << r.g_loss << '\n';
  os << line.str();
}

void emit(const TrainHooks& hooks, nlohmann::json event) {
  if (hooks.on_event) hooks.on_event(event);
}

}  // namespace

// ---------------------------------------------------------------------------
// Progressive trainer

ProgressiveTrainer::ProgressiveTrainer(NetConfig config, std::vector<ScheduleStage> schedule, OptimSpec optim,
                                       std::uint64_t seed)
    : config_(std::move(config)),
      schedule_(std::move(schedule)),
      g_(build_generator(config_, 1, derive_seed(seed, {0x6E}))),
      d_(build_discriminator(config_, 1, derive_seed(seed, {0xD1}))) {
  optim.validate();
  if (static_cast<int>(schedule_.size()) != config_.stages) {
    throw ConfigError("schedule has " + std::to_string(schedule_.size()) + " stages, network has " +
                      std::to_string(config_.stages));
  }
  for (std::size_t i = 0; i < schedule_.size(); ++i) {
    schedule_[i].validate();
    if (schedule_[i].stage != static_cast<int>(i) + 1) throw ConfigError("schedule stages must be 1, 2, ... in order");
    if (schedule_[i].resolution != config_.resolution(schedule_[i].stage)) {
      throw ConfigError("schedule stage " + std::to_string(i + 1) + " resolution does not match the network");
    }
    for (int t : schedule_[i].active) {
      if (t < 0 || t >= config_.layout().branches()) throw ConfigError("schedule activates an unknown sub-vector");
    }
  }
  state_.seed = seed;
  state_.g_opt = Adam(optim);
  state_.d_opt = Adam(optim);
}

ProgressiveTrainer::ProgressiveTrainer(const Checkpoint& ck, std::vector<ScheduleStage> schedule)
    : config_(ck.config), schedule_(std::move(schedule)), g_(generator_from(ck)), d_(discriminator_from(ck)) {
  if (!ck.train_state) throw DataError("checkpoint has no train state to resume from");
  state_ = *ck.train_state;
  if (static_cast<int>(schedule_.size()) != config_.stages) throw ConfigError("schedule does not match checkpoint");
  if (state_.stage < 1 || state_.stage > config_.stages) throw DataError("checkpoint train state has a bad stage");
}

bool ProgressiveTrainer::finished() const {
  return state_.stage == config_.stages && state_.stage_step >= schedule_.back().steps;
}

ProgressiveTrainer::Plan ProgressiveTrainer::plan() const {
  const ScheduleStage& sch = schedule_.at(state_.stage - 1);
  Plan p;
  const int s1 = sch.stage1_steps();
  const bool stage_one = state_.stage_step < s1;
  p.phase = stage_one ? 1 : 2;
  p.alpha = sch.new_subvector < 0 ? 1.0 : (stage_one ? 0.0 : sch.alpha_at(static_cast<int>(state_.stage_step - s1)));
  const int branches = config_.layout().branches();
  p.policy.sources.assign(branches, source::Frozen{});
  for (int t : sch.active) {
    if (t == sch.new_subvector) {
      if (!stage_one) p.policy.sources[t] = source::Uniform{p.alpha};
    } else {
      p.policy.sources[t] = source::Uniform{1.0};
    }
  }
  p.g_mask = stage_one ? g_.newest_block_params() : graph_params(g_.graph());
  p.d_mask = graph_params(d_.graph());
  return p;
}

void ProgressiveTrainer::begin_stage_if_needed(const TrainHooks& hooks) {
  if (g_.stage() < state_.stage) {
    const std::uint64_t grow_seed = derive_seed(state_.seed, {0x6A0, static_cast<std::uint64_t>(state_.stage)});
    while (g_.stage() < state_.stage) g_.grow(grow_seed);
    while (d_.stage() < state_.stage) d_.grow(grow_seed);
    const Resolution r = g_.output_resolution();
    emit(hooks, {{"event", "grow"}, {"step", state_.step}, {"stage", state_.stage}, {"resolution", {r.height, r.width}}});
  }
}

bool ProgressiveTrainer::step_once(const Dataset& data, const TrainHooks& hooks) {
  const ScheduleStage& sch = schedule_.at(state_.stage - 1);
  const Plan p = plan();
  if (state_.stage_step == 0) {
    emit(hooks, {{"event", "stage_start"},
                 {"step", state_.step},
                 {"stage", state_.stage},
                 {"active", sch.active},
                 {"new_subvector", sch.new_subvector},
                 {"steps", sch.steps},
                 {"stage1_steps", sch.stage1_steps()}});
  }
  if (p.phase == 2 && sch.stage1_steps() > 0 && state_.stage_step == sch.stage1_steps()) {
    emit(hooks, {{"event", "stage2_start"}, {"step", state_.step}, {"stage", state_.stage}});
  }
  state_.phase = p.phase;
  const int level = data.level_of(sch.resolution);
  const Tensor real = data.batch(level, state_.step, state_.g_opt.spec().batch_size);
  const StepResult r = gan_step(g_, d_, real, p.policy, state_.g_opt, state_.d_opt, p.g_mask, p.d_mask, state_.seed,
                                state_.step, hooks.step_options);
  const LossRecord rec{state_.step, state_.stage, p.phase, p.alpha, r.d_loss, r.g_loss};
  state_.history.push_back(rec);
  if (hooks.loss_csv) write_loss_row(*hooks.loss_csv, rec);
  if (hooks.on_step) {
    StepEvent ev{state_.step, state_.stage, p.phase, p.alpha, &p.policy, &p.g_mask, r};
    hooks.on_step(ev);
  }
  ++state_.step;
  ++state_.stage_step;
  if (state_.stage_step == sch.steps) {
    emit(hooks, {{"event", "stage_end"}, {"step", state_.step}, {"stage", state_.stage}, {"d_loss", r.d_loss},
                 {"g_loss", r.g_loss}});
    if (hooks.on_stage_end) hooks.on_stage_end(checkpoint(), state_.stage);
  }
  return true;
}

bool ProgressiveTrainer::run(const Dataset& data, const TrainHooks& hooks, std::optional<std::int64_t> max_steps) {
  std::int64_t done = 0;
  while (true) {
    if (state_.stage_step >= schedule_.at(state_.stage - 1).steps) {
      if (state_.stage == config_.stages) return true;
      ++state_.stage;
      state_.stage_step = 0;
    }
    if (max_steps && done >= *max_steps) return false;
    begin_stage_if_needed(hooks);
    step_once(data, hooks);
    ++done;
  }
}

void ProgressiveTrainer::run_stage(const Dataset& data, const TrainHooks& hooks) {
  if (state_.stage_step >= schedule_.at(state_.stage - 1).steps && state_.stage < config_.stages) {
    ++state_.stage;
    state_.stage_step = 0;
  }
  begin_stage_if_needed(hooks);
  while (state_.stage_step < schedule_.at(state_.stage - 1).steps) step_once(data, hooks);
}

Checkpoint ProgressiveTrainer::checkpoint() const {
  Checkpoint ck;
  ck.config = config_;
  ck.stage = g_.stage();
  ck.generator = g_.params();
  ck.discriminator = d_.params();
  ck.train_state = state_;
  ck.metadata = {{"kind", "progressive"}, {"schedule", schedule_}, {"seed", state_.seed}};
  return ck;
}

Checkpoint run_progressive(const NetConfig& config, const std::vector<ScheduleStage>& schedule, const Dataset& data,
                           const OptimSpec& optim, std::uint64_t seed, const TrainHooks& hooks) {
  ProgressiveTrainer t(config, schedule, optim, seed);
  for (const auto& sch : schedule) (void)data.level_of(sch.resolution);  // fail before training starts
  t.run(data, hooks);
  return t.checkpoint();
}

Checkpoint run_joint(const NetConfig& config, std::int64_t steps, const Dataset& data, const OptimSpec& optim,
                     std::uint64_t seed, const TrainHooks& hooks) {
  optim.validate();
  if (steps < 1) throw ConfigError("joint training needs at least one step");
  Generator g = build_generator(config, config.stages, derive_seed(seed, {0x6E}));
  Discriminator d = build_discriminator(config, config.stages, derive_seed(seed, {0xD1}));
  TrainState state;
  state.seed = seed;
  state.stage = config.stages;
  state.phase = 2;
  state.g_opt = Adam(optim);
  state.d_opt = Adam(optim);
  const SamplePolicy policy = SamplePolicy::all_uniform(config.layout().branches());
  const auto g_mask = graph_params(g.graph());
  const auto d_mask = graph_params(d.graph());
  const int level = data.level_of(config.resolution(config.stages));
  emit(hooks, {{"event", "stage_start"}, {"step", 0}, {"stage", config.stages}, {"joint", true}, {"steps", steps}});
  for (std::int64_t k = 0; k < steps; ++k) {
    const Tensor real = data.batch(level, k, optim.batch_size);
    const StepResult r = gan_step(g, d, real, policy, state.g_opt, state.d_opt, g_mask, d_mask, seed, k,
                                  hooks.step_options);
    const LossRecord rec{k, config.stages, 2, 1.0, r.d_loss, r.g_loss};
    state.history.push_back(rec);
    if (hooks.loss_csv) write_loss_row(*hooks.loss_csv, rec);
    if (hooks.on_step) {
      StepEvent ev{k, config.stages, 2, 1.0, &policy, &g_mask, r};
      hooks.on_step(ev);
    }
    state.step = k + 1;
    state.stage_step = k + 1;
  }
  emit(hooks, {{"event", "stage_end"}, {"step", steps}, {"stage", config.stages}, {"joint", true}});
  Checkpoint ck;
  ck.config = config;
  ck.stage = config.stages;
  ck.generator = g.params();
  ck.discriminator = d.params();
  ck.train_state = std::move(state);
  ck.metadata = {{"kind", "joint"}, {"steps", steps}, {"seed", seed}};
  if (hooks.on_stage_end) hooks.on_stage_end(ck, config.stages);
  return ck;
}

// ---------------------------------------------------------------------------
// Encoder

double latent_recovery_error(const Generator& g, const Encoder& e, std::span<const BranchedLatent> zs) {
  if (zs.empty()) return 0.0;
  const auto images = generate(g, zs);
  const auto rec = encode(e, images);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const auto a = zs[i].flat();
    const auto b = rec[i].flat();
    for (std::size_t k = 0; k < a.size(); ++k) total += std::abs(a[k] - b[k]);
    count += a.size();
  }
  return total / static_cast<double>(count);
}

EncoderTrainResult train_encoder(const Generator& g, const EncoderTrainSpec& spec, std::uint64_t seed) {
  spec.optim.validate();
  if (spec.steps < 0 || spec.eval_every < 1 || spec.eval_samples < 1) throw ConfigError("invalid encoder training spec");
  const LatentLayout layout = g.config().layout();
  const SamplePolicy policy = SamplePolicy::all_uniform(layout.branches());
  EncoderTrainResult out{build_encoder(g.config(), g.stage(), derive_seed(seed, {0xE7})), {}};
  Encoder& e = out.encoder;
  Adam opt(spec.optim);

  std::vector<BranchedLatent> held_out;
  for (int i = 0; i < spec.eval_samples; ++i) {
    held_out.push_back(sample_latent(layout, policy, derive_seed(seed, {0xE5, static_cast<std::uint64_t>(i)})));
  }
  out.curve.emplace_back(0, latent_recovery_error(g, e, held_out));

  const Sequential eg = e.graph();
  const Sequential gg = g.graph();
  const auto e_params = graph_params(eg);
  const int batch = spec.optim.batch_size;
  const int dims = layout.total();
  for (int step = 0; step < spec.steps; ++step) {
    std::vector<BranchedLatent> zs;
    for (int i = 0; i < batch; ++i) {
      zs.push_back(sample_latent(layout, policy, derive_seed(seed, {0xE1, static_cast<std::uint64_t>(step),
                                                                    static_cast<std::uint64_t>(i)})));
    }
    const Tensor z = g.latent_batch(zs);
    const Tensor images = gg.forward(g.params(), z);
    Trace etrace;
    const Tensor pred = eg.forward(e.params(), images, &etrace);
    Tensor dpred(pred.shape());
    const float scale = 2.0f / static_cast<float>(batch * dims);
    for (std::size_t k = 0; k < pred.size(); ++k) dpred.data()[k] = scale * (pred.data()[k] - z.data()[k]);
    if (spec.pixel_weight > 0.0) {
      Trace gtrace;
      const Tensor recon = gg.forward(g.params(), pred, &gtrace);
      Tensor drecon(recon.shape());
      const float ps = static_cast<float>(2.0 * spec.pixel_weight / static_cast<double>(recon.size()));
      for (std::size_t k = 0; k < recon.size(); ++k) drecon.data()[k] = ps * (recon.data()[k] - images.data()[k]);
      GradSet unused;
      const Tensor dz = gg.backward(g.params(), gtrace, drecon, unused, {}, true);
      for (std::size_t k = 0; k < dpred.size(); ++k) dpred.data()[k] += dz.data()[k];
    }
    GradSet grads;
    eg.backward(e.params(), etrace, dpred, grads, e_params, false);
    opt.step(e.params(), grads, e_params);
    if ((step + 1) % spec.eval_every == 0 || step + 1 == spec.steps) {
      out.curve.emplace_back(step + 1, latent_recovery_error(g, e, held_out));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Branch suppression

std::string to_string(SuppressionKind k) {
  return k == SuppressionKind::PretrainedDominant ? "pretrained_dominant" : "sequential_defreeze";
}

SuppressionKind suppression_from_string(const std::string& s) {
  if (s == "pretrained_dominant" || s == "a") return SuppressionKind::PretrainedDominant;
  if (s == "sequential_defreeze" || s == "b") return SuppressionKind::SequentialDefreeze;
  throw ConfigError("unknown suppression kind '" + s + "' (expected pretrained_dominant or sequential_defreeze)");
}

void to_json(nlohmann::json& j, const SuppressionReport& r) {
  nlohmann::json ratios = nlohmann::json::array();
  for (const auto& row : r.ratios) {
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& v : row) jr.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    ratios.push_back(jr);
  }
  j = nlohmann::json{{"kind", to_string(r.kind)},
                     {"branch_variance", r.branch_variance},
                     {"branch_range", r.branch_range},
                     {"activation_order", r.activation_order},
                     {"ratios", ratios},
                     {"n_constants", r.n_constants},
                     {"n_samples", r.n_samples},
                     {"seed", r.seed}};
}

SuppressionReport measure_branch_variance(const Generator& g, const std::vector<double>& branch_range, int n_constants,
                                          int n_samples, std::uint64_t seed) {
  const LatentLayout layout = g.config().layout();
  const int branches = layout.branches();
  if (static_cast<int>(branch_range.size()) != branches) throw ConfigError("one sampling range per branch is required");
  if (n_constants < 1 || n_samples < 2) throw ConfigError("need >= 1 constant and >= 2 samples");
  SuppressionReport rep;
  rep.branch_range = branch_range;
  rep.n_constants = n_constants;
  rep.n_samples = n_samples;
  rep.seed = seed;
  const Resolution res = g.output_resolution();
  for (int t = 0; t < branches; ++t) {
    double total = 0.0;
    VarianceImage mean_image;
    for (int c = 0; c < n_constants; ++c) {
      Rng crng(derive_seed(seed, {0xC0, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(c)}));
      std::vector<std::vector<double>> base(branches);
      for (int u = 0; u < branches; ++u) {
        base[u].resize(layout.dims[u]);
        for (double& v : base[u]) v = branch_range[u] > 0.0 ? crng.uniform(-branch_range[u], branch_range[u]) : 0.0;
      }
      std::vector<BranchedLatent> zs;
      for (int s = 0; s < n_samples; ++s) {
        Rng srng(derive_seed(seed, {0x5A, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(c),
                                    static_cast<std::uint64_t>(s)}));
        auto sub = base;
        for (double& v : sub[t]) v = branch_range[t] > 0.0 ? srng.uniform(-branch_range[t], branch_range[t]) : 0.0;
        zs.emplace_back(std::move(sub));
      }
      const auto images = generate(g, zs);
      const VarianceImage vi = variance_image(images);
      double sum = 0.0;
      for (double v : vi.values) sum += v;
      total += sum * g.config().output_channels;
      if (c == 0) {
        mean_image = vi;
      } else {
        for (std::size_t k = 0; k < vi.values.size(); ++k) mean_image.values[k] += vi.values[k];
      }
    }
    for (double& v : mean_image.values) v /= n_constants;
    const double peak = *std::max_element(mean_image.values.begin(), mean_image.values.end());
    mean_image.display_scale = peak > 0.0 ? 255.0 / peak : 0.0;
    mean_image.display.assign(mean_image.values.size(), 0);
    for (std::size_t k = 0; k < mean_image.values.size(); ++k) {
      mean_image.display[k] = static_cast<std::uint8_t>(
          std::clamp(std::lround(mean_image.values[k] * mean_image.display_scale), 0L, 255L));
    }
    mean_image.height = res.height;
    mean_image.width = res.width;
    rep.branch_variance.push_back(total / n_constants);
    rep.variance_images.push_back(std::move(mean_image));
  }
  rep.ratios.assign(branches, std::vector<std::optional<double>>(branches));
  for (int i = 0; i < branches; ++i)
    for (int j = 0; j < branches; ++j)
      if (rep.branch_variance[j] > 0.0) rep.ratios[i][j] = rep.branch_variance[i] / rep.branch_variance[j];
  return rep;
}

SuppressionReport suppression_experiment(const SuppressionSpec& spec, const NetConfig& config, const Dataset& data,
                                         const OptimSpec& optim, std::uint64_t seed, const TrainHooks& hooks) {
  config.validate();
  optim.validate();
  const int branches = config.layout().branches();
  if (branches < 2) throw ConfigError("branch suppression needs at least 2 branches");
  if (spec.steps_per_phase < 1) throw ConfigError("steps_per_phase must be >= 1");
  const int stage = spec.stage == 0 ? config.stages : spec.stage;
  if (stage < 1 || stage > config.stages) throw ConfigError("suppression stage out of range");

  Generator g = build_generator(config, stage, derive_seed(seed, {0x6E}));
  Discriminator d = build_discriminator(config, stage, derive_seed(seed, {0xD1}));
  Adam g_opt(optim), d_opt(optim);
  const auto g_mask = graph_params(g.graph());
  const auto d_mask = graph_params(d.graph());
  const int level = data.level_of(config.resolution(stage));

  std::vector<std::vector<int>> phases;
  if (spec.kind == SuppressionKind::PretrainedDominant) {
    phases.push_back({0});
    std::vector<int> all;
    for (int t = 0; t < branches; ++t) all.push_back(t);
    phases.push_back(all);
  } else {
    for (int k = 0; k < branches; ++k) {
      std::vector<int> active;
      for (int t = 0; t <= k; ++t) active.push_back(t);
      phases.push_back(active);
    }
  }

  std::int64_t step = 0;
  for (std::size_t ph = 0; ph < phases.size(); ++ph) {
    SamplePolicy policy;
    policy.sources.assign(branches, source::Frozen{});
    for (int t : phases[ph]) policy.sources[t] = source::Uniform{1.0};
    emit(hooks, {{"event", "phase_start"}, {"phase", ph}, {"active", phases[ph]}, {"step", step}});
    for (int k = 0; k < spec.steps_per_phase; ++k, ++step) {
      const Tensor real = data.batch(level, step, optim.batch_size);
      const StepResult r = gan_step(g, d, real, policy, g_opt, d_opt, g_mask, d_mask, seed, step, hooks.step_options);
      const LossRecord rec{step, stage, static_cast<int>(ph) + 1, 1.0, r.d_loss, r.g_loss};
      if (hooks.loss_csv) write_loss_row(*hooks.loss_csv, rec);
      if (hooks.on_step) {
        StepEvent ev{step, stage, static_cast<int>(ph) + 1, 1.0, &policy, &g_mask, r};
        hooks.on_step(ev);
      }
    }
  }

  std::vector<double> range(branches, 0.0);
  for (int t : phases.back()) range[t] = 1.0;
  SuppressionReport rep =
      measure_branch_variance(g, range, spec.n_constants, spec.n_samples, derive_seed(seed, {0x5B}));
  rep.kind = spec.kind;
  for (const auto& ph : phases)
    for (int t : ph)
      if (std::find(rep.activation_order.begin(), rep.activation_order.end(), t) == rep.activation_order.end()) {
        rep.activation_order.push_back(t);
      }
  return rep;
}

ImageModel image_model(const Generator& g) {
  auto shared = std::make_shared<const Generator>(g);
  return ImageModel{g.config().layout(),
                    [shared](std::span<const BranchedLatent> zs) { return generate(*shared, zs); }};
}

}  // namespace branchgan
