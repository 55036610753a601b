#include "chartwave/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "chartwave/errors.hpp"
#include "chartwave/rng.hpp"

namespace chartwave {

namespace {

std::string format_cut(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::string format_exact(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

// Inverse CDF of the Beta shapes used for synthetic covariates.
double skew_quantile(Skew skew, double u) {
  switch (skew) {
    case Skew::left:
      return 1.0 - std::pow(1.0 - u, 0.25);
    case Skew::right:
      return std::pow(u, 0.25);
    case Skew::balanced:
      break;
  }
  return u;
}

}  // namespace

StratumSpec StratumSpec::from_cuts(std::vector<double> cuts, std::vector<std::string> labels) {
  StratumSpec spec;
  spec.boundaries = std::move(cuts);
  if (labels.empty() && spec.boundaries.size() >= 2) {
    const std::size_t m = spec.boundaries.size() - 1;
    for (std::size_t s = 0; s < m; ++s) {
      labels.push_back("[" + format_cut(spec.boundaries[s]) + "," +
                       format_cut(spec.boundaries[s + 1]) + (s + 1 == m ? "]" : ")"));
    }
  }
  spec.labels = std::move(labels);
  spec.validate();
  return spec;
}

void StratumSpec::validate() const {
  if (boundaries.size() < 2) throw InvalidArgumentError("stratum spec needs at least two cut points");
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
    if (!(boundaries[i] < boundaries[i + 1]))
      throw InvalidArgumentError("stratum cut points must be strictly increasing");
  }
  if (labels.size() != size()) throw InvalidArgumentError("one label per stratum required");
}

StratumSpec default_strata() { return StratumSpec::from_cuts({0.0, 0.1, 0.2, 0.3, 0.4, 0.5}); }

std::size_t stratify(double covariate, const StratumSpec& spec) {
  if (!(covariate >= spec.lower() && covariate <= spec.upper()))
    throw OutOfRangeError("covariate " + format_exact(covariate) + " outside [" +
                          format_cut(spec.lower()) + ", " + format_cut(spec.upper()) + "]");
  const auto& b = spec.boundaries;
  // First cut strictly greater than the covariate closes its stratum.
  auto it = std::upper_bound(b.begin(), b.end(), covariate);
  if (it == b.end()) return spec.size() - 1;
  return static_cast<std::size_t>(it - b.begin()) - 1;
}

std::string_view to_string(Skew skew) {
  switch (skew) {
    case Skew::left:
      return "left";
    case Skew::right:
      return "right";
    case Skew::balanced:
      break;
  }
  return "balanced";
}

Skew parse_skew(std::string_view text) {
  if (text == "left") return Skew::left;
  if (text == "balanced") return Skew::balanced;
  if (text == "right") return Skew::right;
  throw InvalidArgumentError("unknown skew '" + std::string(text) + "'");
}

void ScenarioConfig::validate() const {
  std::vector<std::string> v;
  if (n < 1) v.emplace_back("n must be at least 1");
  if (!(ppv >= 0.0 && ppv <= 1.0)) v.emplace_back("ppv must lie in [0,1]");
  if (!(linkage_sd >= 0.0)) v.emplace_back("linkage_sd must be non-negative");
  if (!v.empty()) throw ValidationError(std::move(v));
}

Cohort::Cohort(StratumSpec spec, std::vector<PatientRow> rows)
    : spec_(std::move(spec)), rows_(std::move(rows)) {
  spec_.validate();
  index_.reserve(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    if (r.patient_id.empty() || r.patient_id.find(',') != std::string::npos)
      throw InvalidArgumentError("invalid patient id at row " + std::to_string(i));
    if (!index_.emplace(r.patient_id, i).second)
      throw InvalidArgumentError("duplicate patient id " + r.patient_id);
    if (stratify(r.covariate, spec_) != r.stratum)
      throw InvalidArgumentError("stratum of " + r.patient_id + " disagrees with its covariate");
    if (r.reviewed != r.label.has_value())
      throw InvalidArgumentError("label of " + r.patient_id + " must be present iff reviewed");
    if (r.label && *r.label != 0 && *r.label != 1)
      throw InvalidArgumentError("label of " + r.patient_id + " must be 0 or 1");
  }
}

std::optional<std::size_t> Cohort::find(std::string_view patient_id) const {
  auto it = index_.find(std::string(patient_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> Cohort::stratum_counts() const {
  std::vector<std::size_t> counts(strata(), 0);
  for (const auto& r : rows_) ++counts[r.stratum];
  return counts;
}

std::vector<double> Cohort::stratum_proportions() const {
  auto counts = stratum_counts();
  std::vector<double> p(counts.size(), 0.0);
  if (rows_.empty()) return p;
  for (std::size_t s = 0; s < counts.size(); ++s)
    p[s] = static_cast<double>(counts[s]) / static_cast<double>(rows_.size());
  return p;
}

std::vector<std::size_t> Cohort::unreviewed_counts() const {
  std::vector<std::size_t> counts(strata(), 0);
  for (const auto& r : rows_)
    if (!r.reviewed) ++counts[r.stratum];
  return counts;
}

void Cohort::mark_reviewed(std::size_t row, int label) {
  auto& r = rows_.at(row);
  if (r.reviewed) throw StateError("patient " + r.patient_id + " already reviewed");
  if (label != 0 && label != 1) throw InvalidArgumentError("label must be 0 or 1");
  r.reviewed = true;
  r.label = label;
}

Cohort gen_cohort(const ScenarioConfig& cfg, const StratumSpec& spec) {
  cfg.validate();
  spec.validate();
  Rng rng(derive_seed(cfg.seed, {hash_string("cohort")}));
  const std::size_t n = cfg.n;
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i)
    u[i] = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(n);
  for (std::size_t i = n; i > 1; --i) std::swap(u[i - 1], u[rng.below(i)]);

  const std::size_t width = std::max<std::size_t>(6, std::to_string(n).size());
  std::vector<PatientRow> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = skew_quantile(cfg.skew, u[i]);
    double cov = spec.lower() + (spec.upper() - spec.lower()) * x;
    cov = std::clamp(cov, spec.lower(), spec.upper());
    std::string digits = std::to_string(i + 1);
    std::string id = "P" + std::string(width - std::min<std::size_t>(width, digits.size()), '0') + digits;
    rows.push_back(PatientRow{id, cov, stratify(cov, spec), false, std::nullopt});
  }
  return Cohort(spec, std::move(rows));
}

TruthTable gen_labels_nonlinked(const Cohort& cohort, double ppv, std::uint64_t seed) {
  if (!(ppv >= 0.0 && ppv <= 1.0)) throw InvalidArgumentError("ppv must lie in [0,1]");
  Rng rng(derive_seed(seed, {hash_string("labels")}));
  TruthTable t;
  t.stratum_probabilities.assign(cohort.strata(), ppv);
  t.labels.reserve(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) t.labels.push_back(rng.bernoulli(ppv) ? 1 : 0);
  return t;
}

std::vector<double> linked_probabilities(std::span<const double> w, double ppv, double target_sd) {
  if (!(ppv > 0.0 && ppv < 1.0)) throw InvalidArgumentError("linked ppv must lie in (0,1)");
  if (!(target_sd >= 0.0)) throw InvalidArgumentError("linkage sd must be non-negative");
  const std::size_t m = w.size();
  if (m == 0) throw InvalidArgumentError("no strata");
  constexpr double kLow = 0.001;
  constexpr double kHigh = 0.999;
  constexpr int kMaxRounds = 100;

  std::vector<double> ramp(m, 0.0);
  if (m > 1) {
    const double scale = std::sqrt((static_cast<double>(m) * m - 1.0) / 12.0);
    for (std::size_t s = 0; s < m; ++s)
      ramp[s] = (static_cast<double>(s) - (m - 1) / 2.0) / scale;
  }

  std::vector<bool> fixed(m, false);
  std::vector<double> p(m, ppv);
  const double md = static_cast<double>(m);
  for (int round = 0; round < kMaxRounds; ++round) {
    double wf = 0.0, cf = 0.0, rest = ppv;
    for (std::size_t s = 0; s < m; ++s) {
      if (fixed[s]) {
        rest -= w[s] * p[s];
      } else {
        wf += w[s];
        cf += w[s] * ramp[s];
      }
    }
    if (!(wf > 0.0)) throw InfeasibleError("linked probabilities: no free stratum carries weight");
    // Free entries are base + b * dir; fixed entries stay put.
    const double base = rest / wf;
    std::vector<double> constant(m), dir(m, 0.0);
    for (std::size_t s = 0; s < m; ++s) {
      constant[s] = fixed[s] ? p[s] : base;
      if (!fixed[s]) dir[s] = ramp[s] - cf / wf;
    }
    const double mc = std::accumulate(constant.begin(), constant.end(), 0.0) / md;
    const double md_ = std::accumulate(dir.begin(), dir.end(), 0.0) / md;
    double var_c = 0.0, var_d = 0.0, cov = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
      var_c += (constant[s] - mc) * (constant[s] - mc);
      var_d += (dir[s] - md_) * (dir[s] - md_);
      cov += (constant[s] - mc) * (dir[s] - md_);
    }
    var_c /= md;
    var_d /= md;
    cov /= md;
    const double target_var = target_sd * target_sd;
    double b = 0.0;
    if (var_d > 1e-15) {
      const double disc = cov * cov - var_d * (var_c - target_var);
      if (disc < 0.0) throw InfeasibleError("linked probabilities: sd unreachable");
      b = (-cov + std::sqrt(disc)) / var_d;
      if (b < 0.0) throw InfeasibleError("linked probabilities: sd unreachable");
    } else if (std::abs(var_c - target_var) > 1e-12) {
      throw InfeasibleError("linked probabilities: sd unreachable with every stratum clamped");
    }
    bool clamped = false;
    for (std::size_t s = 0; s < m; ++s) {
      if (fixed[s]) continue;
      p[s] = constant[s] + b * dir[s];
      if (p[s] < kLow || p[s] > kHigh) {
        p[s] = std::clamp(p[s], kLow, kHigh);
        fixed[s] = true;
        clamped = true;
      }
    }
    if (clamped) continue;

    double mean = 0.0, umean = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
      mean += w[s] * p[s];
      umean += p[s];
    }
    umean /= md;
    double var = 0.0;
    for (double x : p) var += (x - umean) * (x - umean);
    const double sd = std::sqrt(var / md);
    if (std::abs(mean - ppv) > 1e-9 || std::abs(sd - target_sd) > 1e-9)
      throw InfeasibleError("linked probabilities: constraints not met after clamping");
    return p;
  }
  throw InfeasibleError("linked probabilities: clamping did not settle");
}

TruthTable gen_labels_linked(const Cohort& cohort, double ppv, double linkage_sd,
                             std::uint64_t seed) {
  TruthTable t;
  const auto weights = cohort.stratum_proportions();
  t.stratum_probabilities = linked_probabilities(weights, ppv, linkage_sd);
  Rng rng(derive_seed(seed, {hash_string("labels")}));
  t.labels.reserve(cohort.size());
  for (const auto& r : cohort.rows())
    t.labels.push_back(rng.bernoulli(t.stratum_probabilities[r.stratum]) ? 1 : 0);
  return t;
}

void write_cohort_csv(std::ostream& out, const Cohort& cohort) {
  out << "patient_id,covariate,stratum,reviewed,label\n";
  for (const auto& r : cohort.rows()) {
    out << r.patient_id << ',' << format_exact(r.covariate) << ',' << r.stratum << ','
        << (r.reviewed ? 1 : 0) << ',';
    if (r.label) out << *r.label;
    out << '\n';
  }
}

Cohort read_cohort_csv(std::istream& in, const StratumSpec& spec) {
  std::string line;
  if (!std::getline(in, line)) throw LoadError("cohort file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "patient_id,covariate,stratum,reviewed,label")
    throw LoadError("unexpected cohort header: " + line);
  std::vector<PatientRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 5) throw LoadError("line " + std::to_string(lineno) + ": expected 5 fields");
    try {
      PatientRow r;
      r.patient_id = f[0];
      std::size_t used = 0;
      r.covariate = std::stod(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("covariate");
      r.stratum = static_cast<std::size_t>(std::stoul(f[2]));
      if (f[3] != "0" && f[3] != "1") throw std::invalid_argument("reviewed");
      r.reviewed = f[3] == "1";
      if (!f[4].empty()) {
        if (f[4] != "0" && f[4] != "1") throw std::invalid_argument("label");
        r.label = f[4] == "1" ? 1 : 0;
      }
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw LoadError("line " + std::to_string(lineno) + ": malformed field");
    }
  }
  try {
    return Cohort(spec, std::move(rows));
  } catch (const Error& e) {
    throw LoadError(std::string("inconsistent cohort file: ") + e.what());
  }
}

}  // namespace chartwave
