#pragma once

// Adam with a trainable-parameter mask. Moments of a parameter that leaves
// the mask are kept as they are and picked up again when it re-enters.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "branchgan/networks.hpp"

namespace branchgan {

struct OptimSpec {
  double learning_rate = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 20;

  void validate() const;
  bool operator==(const OptimSpec&) const = default;
};

void to_json(nlohmann::json& j, const OptimSpec& o);
void from_json(const nlohmann::json& j, OptimSpec& o);

struct AdamSlot {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t steps = 0;  // updates applied to this parameter
  bool operator==(const AdamSlot&) const = default;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(OptimSpec spec) : spec_(spec) {}

  /// Updates every parameter in `mask`; a masked parameter without a gradient
  /// entry is treated as having a zero gradient. Parameters outside the mask
  /// are not touched.
  void step(ParamSet& params, const GradSet& grads, const std::set<std::string>& mask);

  [[nodiscard]] const OptimSpec& spec() const { return spec_; }
  void set_spec(const OptimSpec& s) { spec_ = s; }
  [[nodiscard]] const std::map<std::string, AdamSlot>& slots() const { return slots_; }
  std::map<std::string, AdamSlot>& slots() { return slots_; }

  bool operator==(const Adam&) const = default;

 private:
  OptimSpec spec_;
  std::map<std::string, AdamSlot> slots_;
};

}  // namespace branchgan
