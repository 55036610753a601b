#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chartwave/cohort.hpp"
#include "chartwave/intervals.hpp"
#include "chartwave/raking.hpp"
#include "chartwave/rng.hpp"
#include "chartwave/sampling.hpp"

namespace chartwave {

inline constexpr int kSessionSchemaVersion = 1;

enum class StopMode { thresholds, width, both };

std::string_view to_string(StopMode mode);
StopMode parse_stop_mode(std::string_view text);

/// Stop when the lower band clears tau1, when the upper band drops under tau2
/// (futility), and/or when the band gets narrower than width_limit.
struct StoppingRule {
  std::optional<double> tau1;
  std::optional<double> tau2;
  std::optional<double> width_limit;
  StopMode mode = StopMode::thresholds;

  std::vector<std::string> violations() const;
  bool operator==(const StoppingRule&) const = default;
};

enum class StopStatus { continue_sampling, stop_above, stop_futility, stop_width, exhausted };

std::string_view to_string(StopStatus status);
StopStatus parse_stop_status(std::string_view text);
inline bool is_terminal(StopStatus s) { return s != StopStatus::continue_sampling; }

struct StopDecision {
  StopStatus status = StopStatus::continue_sampling;
  std::size_t wave = 0;
  std::optional<IntervalEstimate> interval;

  bool operator==(const StopDecision&) const = default;
};

/// Classifies a band against the rule. When the band is both above tau1 and
/// below tau2 the point estimate decides: below the threshold midpoint is
/// futility.
StopDecision evaluate_stopping(const IntervalEstimate& interval, const StoppingRule& rule,
                               std::size_t wave = 0);

struct SessionConfig {
  SamplingPolicy policy;
  StoppingRule rule;
  IntervalMethod method = IntervalMethod::bayes;
  double alpha = 0.05;
  RakingConfig raking;
  /// Intersect each band with the previous one instead of recomputing fresh.
  bool monotone_bands = false;
  std::uint64_t seed = 1;

  std::vector<std::string> violations() const;
  bool operator==(const SessionConfig&) const = default;
};

struct ReviewRecord {
  std::string patient_id;
  int label = 0;
};

/// Allocation handed out for review and not yet recorded.
struct PendingWave {
  WaveAllocation allocation;
  std::vector<std::string> patient_ids;

  bool operator==(const PendingWave&) const = default;
};

/// A completed wave: what was allocated and what the reviewers returned,
/// labels aligned with patient_ids.
struct WaveLog {
  WaveAllocation allocation;
  std::vector<std::string> patient_ids;
  std::vector<int> labels;

  bool operator==(const WaveLog&) const = default;
};

/// The band reported after one wave. `estimate` is the raked point estimate;
/// interval.point is the same value clamped into the band.
struct BandPoint {
  std::size_t wave = 0;
  IntervalEstimate interval;
  double estimate = 0.0;
  std::size_t reviewed = 0;
  std::size_t positives = 0;

  bool operator==(const BandPoint&) const = default;
};

/// One multi-wave review study: allocate, record labels, rake, estimate,
/// test stopping, repeat. Mutations must be serialised by the caller.
class Session {
 public:
  /// Throws ValidationError listing every config violation. The cohort must
  /// not contain reviewed patients yet.
  static Session create(SessionConfig config, Cohort cohort);

  const SessionConfig& config() const { return config_; }
  const Cohort& cohort() const { return cohort_; }
  const StopDecision& status() const { return status_; }
  const std::vector<BandPoint>& band_history() const { return bands_; }
  const std::vector<WaveLog>& waves() const { return waves_; }
  const std::optional<PendingWave>& pending() const { return pending_; }
  const std::vector<double>& initial_weights() const { return initial_weights_; }
  /// Raking weights aligned with reviewed_rows().
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<std::size_t>& reviewed_rows() const { return reviewed_rows_; }

  std::size_t completed_waves() const { return waves_.size(); }
  std::size_t reviewed() const { return reviewed_rows_.size(); }
  std::size_t positives() const;
  std::vector<std::size_t> stratum_reviewed() const;
  std::vector<std::size_t> stratum_positives() const;
  Reservoir reservoir() const { return cohort_.unreviewed_counts(); }
  AllocationHistory allocation_history() const;

  /// Allocation for the next wave. Repeated calls return the same pending
  /// allocation until it is recorded. Throws StateError on a stopped session;
  /// an empty or unreachable reservoir moves the session to `exhausted` and
  /// yields an empty allocation.
  const PendingWave& next_allocation();

  /// Ingests the reviewers' labels for the pending wave. Throws RecordError
  /// (with the offending ids) unless the records cover exactly the pending
  /// patients once each with 0/1 labels; throws StateError without a pending
  /// wave or on a stopped session.
  const StopDecision& record_wave(std::span<const ReviewRecord> records);

  nlohmann::json to_json() const;
  static Session from_json(const nlohmann::json& doc);

  /// Rebuilds the session from its config, the unreviewed cohort and the
  /// wave log alone, re-deriving every allocation and band.
  Session replay() const;

 private:
  Session() = default;

  WaveAllocation choose_counts(const Reservoir& reservoir);
  std::vector<double> stratum_sds() const;
  void refresh_estimates();

  SessionConfig config_;
  Cohort cohort_;
  std::vector<double> initial_weights_;
  std::vector<std::size_t> initial_sizes_;
  std::vector<WaveLog> waves_;
  std::optional<PendingWave> pending_;
  std::vector<std::size_t> reviewed_rows_;
  std::vector<double> weights_;
  std::vector<BandPoint> bands_;
  StopDecision status_;
  Rng rng_;
  PendingWave exhausted_allocation_;
};

/// Writes the session document atomically (temp file + rename).
void save_session(const Session& session, const std::filesystem::path& path);
/// Throws LoadError on unreadable, corrupt or version-mismatched files.
Session load_session(const std::filesystem::path& path);

nlohmann::json to_json(const IntervalEstimate& e);
IntervalEstimate interval_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StopDecision& d);
nlohmann::json to_json(const SessionConfig& c);
SessionConfig session_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BandPoint& b);
nlohmann::json to_json(const WaveAllocation& a);

}  // namespace chartwave
