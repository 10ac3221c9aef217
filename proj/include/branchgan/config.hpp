#pragma once

// Run configuration shared by the command-line tools: named profiles,
// layered overrides (profile defaults, then a JSON file, then flags) and the
// derived schedule and dataset spec.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "branchgan/data_io.hpp"
#include "branchgan/networks.hpp"
#include "branchgan/optim.hpp"
#include "branchgan/trainer.hpp"

namespace branchgan {

struct RunConfig {
  std::string profile = "desk";
  NetConfig net;
  OptimSpec optim;
  DatasetSpec data;
  /// Stage budget: explicit steps per stage, or epochs per stage when
  /// steps_per_stage is empty (converted with the dataset size).
  std::vector<int> steps_per_stage;
  double epochs_per_stage = 0.0;
  double stage1_fraction = 0.25;
  RampShape ramp = RampShape::Linear;
  std::uint64_t seed = 1;
  EncoderTrainSpec encoder;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
void to_json(nlohmann::json& j, const EncoderTrainSpec& s);
void from_json(const nlohmann::json& j, EncoderTrainSpec& s);

std::vector<std::string> profile_names();
/// Throws ConfigError for unknown names.
RunConfig profile_defaults(const std::string& name);

/// Profile defaults merged with `file_patch` and then `flag_patch` (RFC 7386
/// merge patches over the JSON form), validated.
RunConfig layered_config(const std::string& profile, const nlohmann::json& file_patch,
                         const nlohmann::json& flag_patch);

/// Dataset spec with target, pyramid and shuffle seed filled in from the net
/// and the run seed when left empty.
DatasetSpec resolved_dataset(const RunConfig& c);

std::vector<ScheduleStage> build_schedule(const RunConfig& c, int dataset_size);

}  // namespace branchgan
