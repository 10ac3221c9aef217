#include "branchgan/optim.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace branchgan {

void OptimSpec::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

void to_json(nlohmann::json& j, const OptimSpec& o) {
  j = nlohmann::json{{"learning_rate", o.learning_rate},
                     {"beta1", o.beta1},
                     {"beta2", o.beta2},
                     {"epsilon", o.epsilon},
                     {"batch_size", o.batch_size}};
}

void from_json(const nlohmann::json& j, OptimSpec& o) {
  try {
    OptimSpec d;
    o.learning_rate = j.value("learning_rate", d.learning_rate);
    o.beta1 = j.value("beta1", d.beta1);
    o.beta2 = j.value("beta2", d.beta2);
    o.epsilon = j.value("epsilon", d.epsilon);
    o.batch_size = j.value("batch_size", d.batch_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid optimizer spec: ") + e.what());
  }
  o.validate();
}

void Adam::step(ParamSet& params, const GradSet& grads, const std::set<std::string>& mask) {
  const float b1 = static_cast<float>(spec_.beta1);
  const float b2 = static_cast<float>(spec_.beta2);
  for (const auto& name : mask) {
    auto pit = params.find(name);
    if (pit == params.end()) throw ConfigError("trainable mask names unknown parameter '" + name + "'");
    auto& p = pit->second.values;
    AdamSlot& slot = slots_[name];
    if (slot.m.empty()) {
      slot.m.assign(p.size(), 0.0f);
      slot.v.assign(p.size(), 0.0f);
    }
    const auto git = grads.find(name);
    const float* g = git != grads.end() ? git->second.data() : nullptr;
    if (g && git->second.size() != p.size()) throw ConfigError("gradient size mismatch for '" + name + "'");

    ++slot.steps;
    const double t = static_cast<double>(slot.steps);
    const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(spec_.beta1, t)));
    const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(spec_.beta2, t)));
    const float lr = static_cast<float>(spec_.learning_rate);
    const float eps = static_cast<float>(spec_.epsilon);
    const auto count = static_cast<std::ptrdiff_t>(p.size());
#pragma omp parallel for schedule(static) if (count > 65536)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const float gi = g ? g[i] : 0.0f;
      const float m = b1 * slot.m[i] + (1.0f - b1) * gi;
      const float v = b2 * slot.v[i] + (1.0f - b2) * gi * gi;
      slot.m[i] = m;
      slot.v[i] = v;
      p[i] -= lr * (m * c1) / (std::sqrt(v * c2) + eps);
    }
  }
}

}  // namespace branchgan
