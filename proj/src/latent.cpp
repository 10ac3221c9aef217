#include "branchgan/latent.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "branchgan/rng.hpp"
#include "branchgan/tensor.hpp"

namespace branchgan {

int LatentLayout::total() const { return std::accumulate(dims.begin(), dims.end(), 0); }

int LatentLayout::offset(int t) const {
  if (t < 0 || t > branches()) throw ConfigError("scale index " + std::to_string(t) + " out of range");
  return std::accumulate(dims.begin(), dims.begin() + t, 0);
}

int LatentLayout::branch_of(int i) const {
  int acc = 0;
  for (int t = 0; t < branches(); ++t) {
    acc += dims[t];
    if (i < acc) return t;
  }
  throw ConfigError("latent coordinate " + std::to_string(i) + " out of range");
}

namespace {

void check_box(const std::vector<double>& v) {
  for (double x : v) {
    if (!(x >= -1.0 && x <= 1.0)) {
      throw ConfigError("latent coordinate " + std::to_string(x) + " outside [-1, 1]");
    }
  }
}

}  // namespace

BranchedLatent::BranchedLatent(std::vector<std::vector<double>> subvectors)
    : subvectors_(std::move(subvectors)) {
  for (const auto& v : subvectors_) check_box(v);
}

BranchedLatent BranchedLatent::zeros(const LatentLayout& layout) {
  std::vector<std::vector<double>> s;
  for (int d : layout.dims) s.emplace_back(static_cast<std::size_t>(d), 0.0);
  return BranchedLatent(std::move(s));
}

LatentLayout BranchedLatent::layout() const {
  LatentLayout l;
  for (const auto& v : subvectors_) l.dims.push_back(static_cast<int>(v.size()));
  return l;
}

bool BranchedLatent::matches(const LatentLayout& layout) const { return this->layout() == layout; }

std::vector<double> BranchedLatent::flat() const {
  std::vector<double> out;
  for (const auto& v : subvectors_) out.insert(out.end(), v.begin(), v.end());
  return out;
}

BranchedLatent BranchedLatent::from_flat(const LatentLayout& layout, std::span<const double> flat) {
  if (static_cast<int>(flat.size()) != layout.total()) {
    throw ConfigError("flat latent has " + std::to_string(flat.size()) + " coordinates, layout needs " +
                      std::to_string(layout.total()));
  }
  std::vector<std::vector<double>> s;
  std::size_t pos = 0;
  for (int d : layout.dims) {
    s.emplace_back(flat.begin() + pos, flat.begin() + pos + d);
    pos += d;
  }
  return BranchedLatent(std::move(s));
}

BranchedLatent BranchedLatent::with_subvector(int t, std::vector<double> values) const {
  if (t < 0 || t >= branches()) throw ConfigError("scale index " + std::to_string(t) + " out of range");
  if (values.size() != subvectors_[t].size()) {
    throw ConfigError("sub-vector " + std::to_string(t) + " expects " +
                      std::to_string(subvectors_[t].size()) + " coordinates");
  }
  check_box(values);
  BranchedLatent out = *this;
  out.subvectors_[t] = std::move(values);
  return out;
}

void to_json(nlohmann::json& j, const BranchedLatent& z) {
  j = nlohmann::json{{"subvectors", z.subvectors()}};
}

void from_json(const nlohmann::json& j, BranchedLatent& z) {
  if (!j.is_object() || !j.contains("subvectors") || !j.at("subvectors").is_array()) {
    throw ConfigError("latent JSON must be an object with a 'subvectors' array");
  }
  std::vector<std::vector<double>> s;
  for (const auto& sub : j.at("subvectors")) {
    if (!sub.is_array()) throw ConfigError("each sub-vector must be an array of numbers");
    std::vector<double> v;
    for (const auto& x : sub) {
      if (!x.is_number()) throw ConfigError("latent coordinates must be numbers");
      v.push_back(x.get<double>());
    }
    s.push_back(std::move(v));
  }
  z = BranchedLatent(std::move(s));
}

SamplePolicy SamplePolicy::all_uniform(int branches, double alpha) {
  return SamplePolicy{std::vector<SubvectorSource>(branches, source::Uniform{alpha})};
}

SamplePolicy SamplePolicy::active_prefix(int branches, int active) {
  SamplePolicy p;
  for (int t = 0; t < branches; ++t) {
    if (t < active) {
      p.sources.emplace_back(source::Uniform{1.0});
    } else {
      p.sources.emplace_back(source::Frozen{});
    }
  }
  return p;
}

BranchedLatent sample_latent(const LatentLayout& layout, const SamplePolicy& policy, std::uint64_t seed) {
  if (static_cast<int>(policy.sources.size()) != layout.branches()) {
    throw ConfigError("sample policy covers " + std::to_string(policy.sources.size()) +
                      " sub-vectors, layout has " + std::to_string(layout.branches()));
  }
  std::vector<std::vector<double>> out;
  for (int t = 0; t < layout.branches(); ++t) {
    const auto dim = static_cast<std::size_t>(layout.dims[t]);
    // Each branch draws from its own stream so that changing one branch's
    // source never shifts the values drawn for another.
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    std::vector<double> v(dim, 0.0);
    std::visit(
        [&](const auto& src) {
          using T = std::decay_t<decltype(src)>;
          if constexpr (std::is_same_v<T, source::Uniform>) {
            if (!(src.alpha >= 0.0 && src.alpha <= 1.0)) throw ConfigError("uniform alpha must lie in [0, 1]");
            for (auto& x : v) x = rng.uniform(-src.alpha, src.alpha);
          } else if constexpr (std::is_same_v<T, source::Constant>) {
            if (src.values.size() != dim) {
              throw ConfigError("constant for sub-vector " + std::to_string(t) + " has length " +
                                std::to_string(src.values.size()) + ", expected " + std::to_string(dim));
            }
            v = src.values;
          } else if constexpr (std::is_same_v<T, source::Fill>) {
            if (!(std::abs(src.p) <= 1.0)) throw ConfigError("fill value must satisfy |p| <= 1");
            std::fill(v.begin(), v.end(), src.p);
          }
        },
        policy.sources[t]);
    out.push_back(std::move(v));
  }
  return BranchedLatent(std::move(out));
}

BranchedLatent fuse(const BranchedLatent& a, const BranchedLatent& b, const std::set<int>& take_from_a) {
  if (a.layout() != b.layout()) throw ConfigError("fuse: latents have different layouts");
  for (int t : take_from_a) {
    if (t < 0 || t >= a.branches()) throw ConfigError("fuse: scale index " + std::to_string(t) + " out of range");
  }
  std::vector<std::vector<double>> s;
  for (int t = 0; t < a.branches(); ++t) s.push_back(take_from_a.contains(t) ? a.subvector(t) : b.subvector(t));
  return BranchedLatent(std::move(s));
}

std::vector<BranchedLatent> constant_sweep(const BranchedLatent& base, int t, std::span<const double> p_values) {
  if (t < 0 || t >= base.branches()) {
    throw ConfigError("constant_sweep: scale index " + std::to_string(t) + " out of range");
  }
  std::vector<BranchedLatent> out;
  out.reserve(p_values.size());
  for (double p : p_values) {
    if (!(std::abs(p) <= 1.0)) throw ConfigError("constant_sweep: |p| must be <= 1");
    out.push_back(base.with_subvector(t, std::vector<double>(base.subvector(t).size(), p)));
  }
  return out;
}

}  // namespace branchgan
