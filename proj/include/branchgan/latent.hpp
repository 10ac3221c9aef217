#pragma once

// Branched latent codes z = (z^0, ..., z^T) and the pure operations on them:
// policy-driven sampling, cross-scale fusion, and constant sweeps.

#include <cstdint>
#include <set>
#include <span>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace branchgan {

/// Per-branch sub-vector lengths, coarsest scale first.
struct LatentLayout {
  std::vector<int> dims;

  [[nodiscard]] int branches() const { return static_cast<int>(dims.size()); }
  [[nodiscard]] int total() const;
  /// Offset of sub-vector t inside the concatenated vector.
  [[nodiscard]] int offset(int t) const;
  /// Branch owning concatenated coordinate i.
  [[nodiscard]] int branch_of(int i) const;

  bool operator==(const LatentLayout&) const = default;
};

class BranchedLatent {
 public:
  BranchedLatent() = default;
  /// Throws ConfigError if any coordinate lies outside [-1, 1].
  explicit BranchedLatent(std::vector<std::vector<double>> subvectors);
  /// All-zero latent (every branch frozen).
  static BranchedLatent zeros(const LatentLayout& layout);

  [[nodiscard]] int branches() const { return static_cast<int>(subvectors_.size()); }
  [[nodiscard]] const std::vector<double>& subvector(int t) const { return subvectors_.at(t); }
  [[nodiscard]] const std::vector<std::vector<double>>& subvectors() const { return subvectors_; }
  [[nodiscard]] LatentLayout layout() const;
  [[nodiscard]] bool matches(const LatentLayout& layout) const;

  /// Concatenation z^0 ++ z^1 ++ ... ++ z^T.
  [[nodiscard]] std::vector<double> flat() const;
  static BranchedLatent from_flat(const LatentLayout& layout, std::span<const double> flat);

  /// Copy with sub-vector t replaced (length and box are checked).
  [[nodiscard]] BranchedLatent with_subvector(int t, std::vector<double> values) const;

  bool operator==(const BranchedLatent&) const = default;

 private:
  std::vector<std::vector<double>> subvectors_;
};

void to_json(nlohmann::json& j, const BranchedLatent& z);
void from_json(const nlohmann::json& j, BranchedLatent& z);

namespace source {
struct Frozen {};
struct Uniform {
  double alpha = 1.0;
};
struct Constant {
  std::vector<double> values;
};
struct Fill {
  double p = 0.0;
};
}  // namespace source

using SubvectorSource = std::variant<source::Frozen, source::Uniform, source::Constant, source::Fill>;

/// One source per sub-vector.
struct SamplePolicy {
  std::vector<SubvectorSource> sources;

  static SamplePolicy all_uniform(int branches, double alpha = 1.0);
  /// z^0..z^{active-1} ~ U(-1,1), the rest frozen.
  static SamplePolicy active_prefix(int branches, int active);
};

/// Deterministic in (layout, policy, seed).
BranchedLatent sample_latent(const LatentLayout& layout, const SamplePolicy& policy, std::uint64_t seed);

/// Sub-vector t comes from `a` when t is in take_from_a, otherwise from `b`.
BranchedLatent fuse(const BranchedLatent& a, const BranchedLatent& b, const std::set<int>& take_from_a);

/// One latent per p with sub-vector t replaced by p * (1, ..., 1).
std::vector<BranchedLatent> constant_sweep(const BranchedLatent& base, int t, std::span<const double> p_values);

}  // namespace branchgan
