#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace chartwave {

struct RakingConfig {
  /// A factor is raked only when some category's sample share differs from
  /// its population share by more than this.
  double discrepancy_threshold = 0.05;
  /// Upper limit on any weight, relative to a mean weight of 1.
  double weight_cap = 5.0;
  int max_iterations = 50;
  double tolerance = 1e-6;

  void validate() const;
  bool operator==(const RakingConfig&) const = default;
};

/// One raking dimension: the category of every sampled patient and the
/// population distribution over the categories.
struct RakingFactor {
  std::vector<std::size_t> category_of;
  std::vector<double> population;
};

/// Unweighted sample distribution of a factor.
std::vector<double> sample_margins(const RakingFactor& factor);

/// Weighted sample distribution of a factor.
std::vector<double> weighted_margins(const RakingFactor& factor, std::span<const double> weights);

/// Iterative proportional fitting of per-patient weights so that each raked
/// factor's weighted margins reproduce its population margins. Factors whose
/// largest discrepancy is within the threshold are left alone. Weights are
/// capped at cfg.weight_cap and renormalised to mean 1 after every sweep.
///
/// Throws UncorrectableMarginError if a raked factor has a category with
/// population mass but no sampled patients.
std::vector<double> raking_weights(std::span<const RakingFactor> factors, const RakingConfig& cfg);

/// Sum(w y) / Sum(w).
double weighted_ppv(std::span<const int> labels, std::span<const double> weights);

struct EffectiveCounts {
  double k_eff = 0.0;
  double s_eff = 0.0;
};

/// Kish effective size (Sum w)^2 / Sum w^2, with successes scaled by the
/// weighted proportion.
EffectiveCounts effective_counts(std::span<const int> labels, std::span<const double> weights);

}  // namespace chartwave
