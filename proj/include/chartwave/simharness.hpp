#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chartwave/cohort.hpp"
#include "chartwave/engine.hpp"
#include "chartwave/flat_config.hpp"

namespace chartwave {

inline constexpr int kExperimentSchemaVersion = 1;

struct ExperimentSpec {
  std::string name = "experiment";
  /// scenario.seed fixes the synthetic cohort; labels are redrawn for every
  /// replication.
  ScenarioConfig scenario;
  StratumSpec strata = default_strata();
  std::vector<Strategy> strategies{Strategy::random, Strategy::stratified1, Strategy::stratified2,
                                   Strategy::neyman};
  std::vector<IntervalMethod> methods{IntervalMethod::lai, IntervalMethod::bayes};
  StoppingRule rule;
  SamplingPolicy policy;  // strategy field ignored
  double alpha = 0.05;
  RakingConfig raking;
  bool monotone_bands = false;
  std::size_t repetitions = 100;
  std::uint64_t base_seed = 1;
  unsigned threads = 1;

  void validate() const;
};

/// Builds a spec from a flat key = value experiment file.
ExperimentSpec experiment_from_config(const FlatConfig& cfg);

struct SummaryRow {
  Strategy strategy = Strategy::random;
  IntervalMethod method = IntervalMethod::bayes;
  std::size_t runs = 0;
  std::size_t stopped = 0;
  double prop_stopped = 0.0;
  /// Futility stops over all runs, stopped or not.
  double prop_futility = 0.0;
  double prop_above = 0.0;
  double prop_width = 0.0;
  /// Mean batches to stop among stopped runs; NaN when none stopped.
  double mean_batches = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;

  bool operator==(const SummaryRow&) const = default;
};

struct ReplicationOutcome {
  StopStatus status = StopStatus::continue_sampling;
  std::size_t waves = 0;
};

/// Stable per-replication seed from (base seed, strategy, method, index).
std::uint64_t replication_seed(std::uint64_t base_seed, Strategy strategy, IntervalMethod method,
                               std::size_t replication);

/// Hidden labels for one replication of the scenario.
TruthTable replication_truth(const ExperimentSpec& spec, const Cohort& cohort, std::uint64_t seed);

/// Drives one session to termination against the truth table.
Session run_to_termination(const ExperimentSpec& spec, const Cohort& cohort, const TruthTable& truth,
                           Strategy strategy, IntervalMethod method, std::uint64_t seed);

ReplicationOutcome run_replication(const ExperimentSpec& spec, const Cohort& cohort,
                                   Strategy strategy, IntervalMethod method,
                                   std::size_t replication);

SummaryRow summarize(Strategy strategy, IntervalMethod method,
                     const std::vector<ReplicationOutcome>& outcomes);

/// Every (strategy, method) pair, `repetitions` runs each.
std::vector<SummaryRow> run_replications(const ExperimentSpec& spec);

struct Trajectory {
  Strategy strategy = Strategy::random;
  IntervalMethod method = IntervalMethod::bayes;
  std::size_t replication = 0;
  StoppingRule rule;
  std::vector<BandPoint> bands;
  StopDecision final_status;
};

Trajectory emit_trajectory(const ExperimentSpec& spec, Strategy strategy, IntervalMethod method,
                           std::size_t replication = 0);

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
nlohmann::json summary_json(const ExperimentSpec& spec, const std::vector<SummaryRow>& rows);
void write_trajectory_csv(std::ostream& out, const std::vector<Trajectory>& trajectories);
nlohmann::json trajectory_json(const std::vector<Trajectory>& trajectories);

}  // namespace chartwave
