#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chartwave {

/// Cut points of a one-dimensional stratification. Stratum s covers
/// [boundaries[s], boundaries[s+1]) except the last, which also includes its
/// right endpoint.
struct StratumSpec {
  std::vector<double> boundaries;
  std::vector<std::string> labels;

  /// Builds a spec from cut points, generating "[a,b)" style labels when none
  /// are given. Throws InvalidArgumentError on unordered or too few cuts.
  static StratumSpec from_cuts(std::vector<double> cuts, std::vector<std::string> labels = {});

  std::size_t size() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }
  double lower() const { return boundaries.front(); }
  double upper() const { return boundaries.back(); }
  void validate() const;

  bool operator==(const StratumSpec&) const = default;
};

/// Five equal-width strata on [0, 0.5].
StratumSpec default_strata();

std::size_t stratify(double covariate, const StratumSpec& spec);

enum class Skew { left, balanced, right };

std::string_view to_string(Skew skew);
Skew parse_skew(std::string_view text);

struct ScenarioConfig {
  std::size_t n = 6936;
  double ppv = 0.8;
  double linkage_sd = 0.0;
  Skew skew = Skew::balanced;
  std::uint64_t seed = 1;

  void validate() const;
};

struct PatientRow {
  std::string patient_id;
  double covariate = 0.0;
  std::size_t stratum = 0;
  bool reviewed = false;
  std::optional<int> label;

  bool operator==(const PatientRow&) const = default;
};

/// The pool of algorithm-positive patients awaiting (or after) review.
class Cohort {
 public:
  Cohort() = default;
  /// Validates every row against the spec: stratum consistent with the
  /// covariate, unique ids, label present iff reviewed.
  Cohort(StratumSpec spec, std::vector<PatientRow> rows);

  const StratumSpec& spec() const { return spec_; }
  const std::vector<PatientRow>& rows() const { return rows_; }
  const PatientRow& row(std::size_t i) const { return rows_.at(i); }
  std::size_t size() const { return rows_.size(); }
  std::size_t strata() const { return spec_.size(); }

  std::optional<std::size_t> find(std::string_view patient_id) const;

  std::vector<std::size_t> stratum_counts() const;
  std::vector<double> stratum_proportions() const;
  /// Unreviewed patients per stratum.
  std::vector<std::size_t> unreviewed_counts() const;

  void mark_reviewed(std::size_t row, int label);

  bool operator==(const Cohort& other) const {
    return spec_ == other.spec_ && rows_ == other.rows_;
  }

 private:
  StratumSpec spec_;
  std::vector<PatientRow> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Synthetic cohort: covariates follow a Beta shape scaled onto the spec's
/// range (left (1,4), balanced (1,1), right (4,1)). The uniforms feeding the
/// inverse CDF are jittered on an n-point grid and shuffled, so stratum
/// counts track the Beta mass to within one patient.
Cohort gen_cohort(const ScenarioConfig& cfg, const StratumSpec& spec);

/// Hidden reference labels, indexed like the cohort rows.
struct TruthTable {
  std::vector<int> labels;
  std::vector<double> stratum_probabilities;
};

TruthTable gen_labels_nonlinked(const Cohort& cohort, double ppv, std::uint64_t seed);

/// Labels with a stratum-dependent success probability. The probabilities
/// have unweighted (population) standard deviation linkage_sd across strata
/// and stratum-size-weighted mean ppv.
TruthTable gen_labels_linked(const Cohort& cohort, double ppv, double linkage_sd,
                             std::uint64_t seed);

/// Solves for the per-stratum success probabilities used by
/// gen_labels_linked. The pattern is an equally spaced, centred,
/// unit-sd ramp; entries leaving [0.001, 0.999] are clamped and the free
/// entries' offset and scale re-solved, for at most 100 rounds.
std::vector<double> linked_probabilities(std::span<const double> stratum_weights, double ppv,
                                         double linkage_sd);

void write_cohort_csv(std::ostream& out, const Cohort& cohort);
/// Reads `patient_id,covariate,stratum,reviewed,label`. Throws LoadError on a
/// malformed file or rows inconsistent with the spec.
Cohort read_cohort_csv(std::istream& in, const StratumSpec& spec);

}  // namespace chartwave
