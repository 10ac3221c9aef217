#include "branchgan/config.hpp"

namespace branchgan {

void to_json(nlohmann::json& j, const EncoderTrainSpec& s) {
  j = {{"steps", s.steps},
       {"optim", s.optim},
       {"pixel_weight", s.pixel_weight},
       {"eval_every", s.eval_every},
       {"eval_samples", s.eval_samples}};
}

void from_json(const nlohmann::json& j, EncoderTrainSpec& s) {
  EncoderTrainSpec d;
  s.steps = j.value("steps", d.steps);
  s.optim = j.contains("optim") ? j.at("optim").get<OptimSpec>() : d.optim;
  s.pixel_weight = j.value("pixel_weight", d.pixel_weight);
  s.eval_every = j.value("eval_every", d.eval_every);
  s.eval_samples = j.value("eval_samples", d.eval_samples);
}

void RunConfig::validate() const {
  net.validate();
  optim.validate();
  if (!steps_per_stage.empty()) {
    if (static_cast<int>(steps_per_stage.size()) != net.stages) {
      throw ConfigError("steps_per_stage has " + std::to_string(steps_per_stage.size()) + " entries for " +
                        std::to_string(net.stages) + " stages");
    }
    for (int s : steps_per_stage) {
      if (s < 1) throw ConfigError("steps_per_stage entries must be positive");
    }
  } else if (!(epochs_per_stage > 0.0)) {
    throw ConfigError("either steps_per_stage or a positive epochs_per_stage is required");
  }
  if (!(stage1_fraction >= 0.0 && stage1_fraction < 1.0)) throw ConfigError("stage1_fraction must be in [0, 1)");
  if (data.synthetic) data.synthetic->validate();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"profile", c.profile},
       {"net", c.net},
       {"optim", c.optim},
       {"data", c.data},
       {"steps_per_stage", c.steps_per_stage},
       {"epochs_per_stage", c.epochs_per_stage},
       {"stage1_fraction", c.stage1_fraction},
       {"ramp", to_string(c.ramp)},
       {"seed", c.seed},
       {"encoder", c.encoder}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  try {
    c.profile = j.at("profile").get<std::string>();
    c.net = j.at("net").get<NetConfig>();
    c.optim = j.at("optim").get<OptimSpec>();
    c.data = j.at("data").get<DatasetSpec>();
    c.steps_per_stage = j.value("steps_per_stage", std::vector<int>{});
    c.epochs_per_stage = j.value("epochs_per_stage", 0.0);
    c.stage1_fraction = j.value("stage1_fraction", 0.25);
    c.ramp = ramp_from_string(j.value("ramp", std::string("linear")));
    c.seed = j.value("seed", std::uint64_t{1});
    c.encoder = j.value("encoder", nlohmann::json::object()).get<EncoderTrainSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid run config: ") + e.what());
  }
}

std::vector<std::string> profile_names() { return {"paper256", "paper512", "paper400x300", "desk"}; }

RunConfig profile_defaults(const std::string& name) {
  RunConfig c;
  c.profile = name;
  if (name == "paper256") {
    c.net.subvector_dims = std::vector<int>(5, 30);
    c.net.base_resolution = {8, 8};
    c.net.stages = 5;
    c.net.channel_schedule = {512, 256, 128, 64, 64};
    c.optim = OptimSpec{0.0002, 0.5, 0.999, 1e-8, 20};
    c.epochs_per_stage = 20;
  } else if (name == "paper512") {
    c.net.subvector_dims = std::vector<int>(6, 30);
    c.net.base_resolution = {8, 8};
    c.net.stages = 6;
    c.net.channel_schedule = {512, 256, 128, 64, 64, 64};
    c.optim = OptimSpec{0.0002, 0.5, 0.999, 1e-8, 12};
    c.epochs_per_stage = 12;
  } else if (name == "paper400x300") {
    c.net.subvector_dims = std::vector<int>(6, 30);
    c.net.base_resolution = {5, 7};
    c.net.output_resolution = {300, 400};
    c.net.stages = 6;
    c.net.channel_schedule = {512, 256, 128, 64, 64, 64};
    c.optim = OptimSpec{0.0002, 0.5, 0.999, 1e-8, 12};
    c.epochs_per_stage = 12;
  } else if (name == "desk") {
    c.net.subvector_dims = {8, 8, 8};
    c.net.base_resolution = {4, 4};
    c.net.stages = 3;
    c.net.channel_schedule = {64, 32, 16};
    c.optim = OptimSpec{0.0005, 0.5, 0.999, 1e-8, 16};
    c.steps_per_stage = {400, 800, 1500};
    // Weaker fine texture than the recipe default: at 32 px the full-strength
    // stripes let the discriminator win outright in the last stage.
    c.data.synthetic = SyntheticRecipe{};
    c.data.synthetic->fine_amplitude = 0.08;
    c.data.synthetic_seed = 7;
  } else {
    std::string known;
    for (const auto& n : profile_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown profile '" + name + "' (expected one of " + known + ")");
  }
  c.net.validate();
  return c;
}

RunConfig layered_config(const std::string& profile, const nlohmann::json& file_patch,
                         const nlohmann::json& flag_patch) {
  nlohmann::json j = profile_defaults(profile);
  if (!file_patch.is_null()) {
    if (!file_patch.is_object()) throw ConfigError("config file must hold a JSON object");
    j.merge_patch(file_patch);
  }
  if (!flag_patch.is_null()) j.merge_patch(flag_patch);
  j["profile"] = profile;
  RunConfig c = j.get<RunConfig>();
  c.validate();
  return c;
}

DatasetSpec resolved_dataset(const RunConfig& c) {
  DatasetSpec d = c.data;
  const Resolution out = c.net.resolution(c.net.stages);
  if (d.target.height == 0) d.target = out;
  if (d.pyramid.empty()) d.pyramid = stage_resolutions(c.net);
  if (d.shuffle_seed == 0) d.shuffle_seed = c.seed;
  if (d.synthetic && d.synthetic->resolution != d.target) d.synthetic->resolution = d.target;
  return d;
}

std::vector<ScheduleStage> build_schedule(const RunConfig& c, int dataset_size) {
  const auto steps = c.steps_per_stage.empty()
                         ? steps_from_epochs(c.net, c.epochs_per_stage, dataset_size, c.optim.batch_size)
                         : c.steps_per_stage;
  return make_schedule(c.net, steps, c.stage1_fraction, c.ramp);
}

}  // namespace branchgan
