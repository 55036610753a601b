#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "chartwave/rng.hpp"

namespace chartwave {

enum class Strategy { random, stratified1, stratified2, neyman };
enum class SdEstimator { mad, sample_sd };
enum class SizeBasis { validated, population };

std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view text);
std::string_view to_string(SdEstimator estimator);
SdEstimator parse_sd_estimator(std::string_view text);
std::string_view to_string(SizeBasis basis);
SizeBasis parse_size_basis(std::string_view text);

struct SamplingPolicy {
  Strategy strategy = Strategy::random;
  std::size_t batch_size = 100;
  std::size_t min_per_stratum = 10;
  SdEstimator sd_estimator = SdEstimator::mad;
  SizeBasis neyman_size_basis = SizeBasis::validated;

  void validate() const;
  bool operator==(const SamplingPolicy&) const = default;
};

/// Unreviewed patients remaining per stratum.
using Reservoir = std::vector<std::size_t>;

/// Per-wave, per-stratum counts already spent.
class AllocationHistory {
 public:
  explicit AllocationHistory(std::size_t strata = 0) : strata_(strata) {}

  void add(std::vector<std::size_t> counts);
  std::size_t waves() const { return per_wave_.size(); }
  std::size_t strata() const { return strata_; }
  const std::vector<std::vector<std::size_t>>& per_wave() const { return per_wave_; }
  std::size_t wave_total(std::size_t wave) const;
  std::size_t total() const;
  std::vector<std::size_t> spent_per_stratum() const;

 private:
  std::size_t strata_;
  std::vector<std::vector<std::size_t>> per_wave_;
};

/// Where an allocation came from. The Neyman rule falls back to proportional
/// allocation before any validated data exists and when every N_s * sigma_s
/// is zero.
enum class AllocationSource { strategy, first_wave_fallback, degenerate_fallback };

std::string_view to_string(AllocationSource source);
AllocationSource parse_allocation_source(std::string_view text);

struct WaveAllocation {
  std::size_t wave = 0;
  std::vector<std::size_t> counts;
  AllocationSource source = AllocationSource::strategy;

  std::size_t total() const;
  bool operator==(const WaveAllocation&) const = default;
};

/// B draws without replacement from the pooled reservoir, ignoring strata.
WaveAllocation allocate_random(std::size_t batch_size, const Reservoir& reservoir, Rng& rng);

/// floor(B / m) from every stratum, capped at what is left.
WaveAllocation allocate_stratified_equal(std::size_t batch_size, const Reservoir& reservoir);

/// floor(B * w_s) from stratum s, where w are the proportions fixed when the
/// study started.
WaveAllocation allocate_stratified_proportional(std::size_t batch_size,
                                                std::span<const double> initial_weights,
                                                const Reservoir& reservoir);

/// Neyman allocation for the next wave.
///
/// The raw target for stratum s is
///   (spent so far + B) * N_s sigma_s / sum_t N_t sigma_t - spent_s,
/// raised to policy.min_per_stratum for every non-depleted stratum. Targets
/// are then rescaled to spend exactly min(B, reservoir) while keeping each
/// stratum between its minimum and its reservoir, and rounded with the
/// largest-remainder rule (ties to the lowest index). If the minima alone
/// would overspend the batch they are dropped.
///
/// When every N_s sigma_s is zero the proportional rule is used instead and
/// the result is flagged degenerate_fallback.
WaveAllocation allocate_neyman(const AllocationHistory& history, std::size_t batch_size,
                               std::span<const double> sizes, std::span<const double> sds,
                               const SamplingPolicy& policy, const Reservoir& reservoir,
                               std::span<const double> initial_weights);

/// Robust (1.4826 * MAD) or unbiased sample standard deviation.
double estimate_stratum_sd(std::span<const double> values, SdEstimator method);

}  // namespace chartwave
