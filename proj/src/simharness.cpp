#include "chartwave/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <thread>

#include "chartwave/errors.hpp"

namespace chartwave {

using nlohmann::json;

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

json number_or_null(double x) { return std::isnan(x) ? json(nullptr) : json(x); }

}  // namespace

void ExperimentSpec::validate() const {
  std::vector<std::string> v;
  try {
    scenario.validate();
  } catch (const ValidationError& e) {
    v.insert(v.end(), e.violations().begin(), e.violations().end());
  }
  if (repetitions < 1) v.emplace_back("repetitions must be at least 1");
  if (strategies.empty()) v.emplace_back("no sampling strategies listed");
  if (methods.empty()) v.emplace_back("no interval methods listed");
  SessionConfig probe{policy, rule, IntervalMethod::bayes, alpha, raking, monotone_bands, base_seed};
  auto cv = probe.violations();
  v.insert(v.end(), cv.begin(), cv.end());
  if (!v.empty()) throw ValidationError(std::move(v));
}

ExperimentSpec experiment_from_config(const FlatConfig& cfg) {
  cfg.require_known({"schema_version", "name", "n", "ppv", "linkage_sd", "skew", "cohort_seed",
                     "strata", "strategies", "methods", "tau1", "tau2", "width_limit", "mode",
                     "batch_size", "min_per_stratum", "sd_estimator", "neyman_size_basis", "alpha",
                     "raking_threshold", "weight_cap", "raking_max_iterations",
                     "raking_tolerance", "monotone_bands", "repetitions", "base_seed",
                     "threads"});
  const auto version = cfg.get_uint("schema_version", kExperimentSchemaVersion);
  if (version != kExperimentSchemaVersion)
    throw InvalidArgumentError("unsupported experiment schema_version " + std::to_string(version));

  ExperimentSpec spec;
  spec.name = cfg.get_string("name", spec.name);
  spec.scenario.n = cfg.get_uint("n", spec.scenario.n);
  spec.scenario.ppv = cfg.get_double("ppv", spec.scenario.ppv);
  spec.scenario.linkage_sd = cfg.get_double("linkage_sd", spec.scenario.linkage_sd);
  spec.scenario.skew = parse_skew(cfg.get_string("skew", "balanced"));
  spec.scenario.seed = cfg.get_uint("cohort_seed", spec.scenario.seed);
  if (cfg.has("strata")) {
    std::vector<double> cuts;
    for (const auto& c : cfg.get_list("strata", {})) {
      try {
        cuts.push_back(std::stod(c));
      } catch (const std::logic_error&) {
        throw InvalidArgumentError("strata: not a number: " + c);
      }
    }
    spec.strata = StratumSpec::from_cuts(std::move(cuts));
  }
  if (cfg.has("strategies")) {
    spec.strategies.clear();
    for (const auto& s : cfg.get_list("strategies", {})) spec.strategies.push_back(parse_strategy(s));
  }
  if (cfg.has("methods")) {
    spec.methods.clear();
    for (const auto& m : cfg.get_list("methods", {})) spec.methods.push_back(parse_interval_method(m));
  }
  spec.rule.tau1 = cfg.get_optional_double("tau1");
  spec.rule.tau2 = cfg.get_optional_double("tau2");
  spec.rule.width_limit = cfg.get_optional_double("width_limit");
  spec.rule.mode = parse_stop_mode(cfg.get_string("mode", "thresholds"));
  spec.policy.batch_size = cfg.get_uint("batch_size", spec.policy.batch_size);
  spec.policy.min_per_stratum = cfg.get_uint("min_per_stratum", spec.policy.min_per_stratum);
  spec.policy.sd_estimator = parse_sd_estimator(cfg.get_string("sd_estimator", "mad"));
  spec.policy.neyman_size_basis = parse_size_basis(cfg.get_string("neyman_size_basis", "validated"));
  spec.alpha = cfg.get_double("alpha", spec.alpha);
  spec.raking.discrepancy_threshold = cfg.get_double("raking_threshold", spec.raking.discrepancy_threshold);
  spec.raking.weight_cap = cfg.get_double("weight_cap", spec.raking.weight_cap);
  spec.raking.max_iterations =
      static_cast<int>(cfg.get_uint("raking_max_iterations", spec.raking.max_iterations));
  spec.raking.tolerance = cfg.get_double("raking_tolerance", spec.raking.tolerance);
  spec.monotone_bands = cfg.get_bool("monotone_bands", false);
  spec.repetitions = cfg.get_uint("repetitions", spec.repetitions);
  spec.base_seed = cfg.get_uint("base_seed", spec.base_seed);
  spec.threads = static_cast<unsigned>(cfg.get_uint("threads", 1));
  spec.validate();
  return spec;
}

std::uint64_t replication_seed(std::uint64_t base_seed, Strategy strategy, IntervalMethod method,
                               std::size_t replication) {
  return derive_seed(base_seed, {hash_string(to_string(strategy)), hash_string(to_string(method)),
                                 static_cast<std::uint64_t>(replication)});
}

TruthTable replication_truth(const ExperimentSpec& spec, const Cohort& cohort, std::uint64_t seed) {
  if (spec.scenario.linkage_sd > 0.0)
    return gen_labels_linked(cohort, spec.scenario.ppv, spec.scenario.linkage_sd, seed);
  return gen_labels_nonlinked(cohort, spec.scenario.ppv, seed);
}

Session run_to_termination(const ExperimentSpec& spec, const Cohort& cohort, const TruthTable& truth,
                           Strategy strategy, IntervalMethod method, std::uint64_t seed) {
  SessionConfig cfg;
  cfg.policy = spec.policy;
  cfg.policy.strategy = strategy;
  cfg.rule = spec.rule;
  cfg.method = method;
  cfg.alpha = spec.alpha;
  cfg.raking = spec.raking;
  cfg.monotone_bands = spec.monotone_bands;
  cfg.seed = seed;
  Session session = Session::create(cfg, cohort);
  std::vector<ReviewRecord> records;
  while (!is_terminal(session.status().status)) {
    const auto& pending = session.next_allocation();
    if (is_terminal(session.status().status)) break;
    records.clear();
    for (const auto& id : pending.patient_ids)
      records.push_back({id, truth.labels[*cohort.find(id)]});
    session.record_wave(records);
  }
  return session;
}

ReplicationOutcome run_replication(const ExperimentSpec& spec, const Cohort& cohort,
                                   Strategy strategy, IntervalMethod method,
                                   std::size_t replication) {
  const auto seed = replication_seed(spec.base_seed, strategy, method, replication);
  const auto truth = replication_truth(spec, cohort, seed);
  const auto session = run_to_termination(spec, cohort, truth, strategy, method, seed);
  return {session.status().status, session.completed_waves()};
}

SummaryRow summarize(Strategy strategy, IntervalMethod method,
                     const std::vector<ReplicationOutcome>& outcomes) {
  SummaryRow row;
  row.strategy = strategy;
  row.method = method;
  row.runs = outcomes.size();
  std::size_t futile = 0, above = 0, width = 0;
  std::vector<double> waves;
  for (const auto& o : outcomes) {
    switch (o.status) {
      case StopStatus::stop_futility:
        ++futile;
        break;
      case StopStatus::stop_above:
        ++above;
        break;
      case StopStatus::stop_width:
        ++width;
        break;
      default:
        continue;
    }
    waves.push_back(static_cast<double>(o.waves));
  }
  row.stopped = waves.size();
  const double n = static_cast<double>(outcomes.size());
  if (n > 0) {
    row.prop_stopped = static_cast<double>(row.stopped) / n;
    row.prop_futility = static_cast<double>(futile) / n;
    row.prop_above = static_cast<double>(above) / n;
    row.prop_width = static_cast<double>(width) / n;
  }
  if (waves.empty()) {
    row.mean_batches = row.ci_low = row.ci_high = std::numeric_limits<double>::quiet_NaN();
    return row;
  }
  const double k = static_cast<double>(waves.size());
  double mean = 0.0;
  for (double w : waves) mean += w;
  mean /= k;
  double ss = 0.0;
  for (double w : waves) ss += (w - mean) * (w - mean);
  const double se = waves.size() > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
  row.mean_batches = mean;
  row.ci_low = mean - 1.96 * se;
  row.ci_high = mean + 1.96 * se;
  return row;
}

std::vector<SummaryRow> run_replications(const ExperimentSpec& spec) {
  spec.validate();
  const Cohort cohort = gen_cohort(spec.scenario, spec.strata);
  std::vector<SummaryRow> rows;
  for (Strategy strategy : spec.strategies) {
    for (IntervalMethod method : spec.methods) {
      std::vector<ReplicationOutcome> outcomes(spec.repetitions);
      auto work = [&](std::size_t first, std::size_t step) {
        for (std::size_t r = first; r < outcomes.size(); r += step)
          outcomes[r] = run_replication(spec, cohort, strategy, method, r);
      };
      const unsigned threads =
          std::max(1u, std::min<unsigned>(spec.threads, static_cast<unsigned>(spec.repetitions)));
      if (threads == 1) {
        work(0, 1);
      } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
      }
      rows.push_back(summarize(strategy, method, outcomes));
    }
  }
  return rows;
}

Trajectory emit_trajectory(const ExperimentSpec& spec, Strategy strategy, IntervalMethod method,
                           std::size_t replication) {
  spec.validate();
  const Cohort cohort = gen_cohort(spec.scenario, spec.strata);
  const auto seed = replication_seed(spec.base_seed, strategy, method, replication);
  const auto truth = replication_truth(spec, cohort, seed);
  const auto session = run_to_termination(spec, cohort, truth, strategy, method, seed);
  return Trajectory{strategy, method, replication, spec.rule, session.band_history(),
                    session.status()};
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "strategy,method,runs,stopped,prop_stopped,prop_futility,prop_above,prop_width,"
         "mean_batches,ci_low,ci_high\n";
  for (const auto& r : rows) {
    out << to_string(r.strategy) << ',' << to_string(r.method) << ',' << r.runs << ','
        << r.stopped << ',' << fmt(r.prop_stopped) << ',' << fmt(r.prop_futility) << ','
        << fmt(r.prop_above) << ',' << fmt(r.prop_width) << ',' << fmt(r.mean_batches) << ','
        << fmt(r.ci_low) << ',' << fmt(r.ci_high) << '\n';
  }
}

json summary_json(const ExperimentSpec& spec, const std::vector<SummaryRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back(json{{"strategy", to_string(r.strategy)},
                       {"method", to_string(r.method)},
                       {"runs", r.runs},
                       {"stopped", r.stopped},
                       {"prop_stopped", r.prop_stopped},
                       {"prop_futility", r.prop_futility},
                       {"prop_above", r.prop_above},
                       {"prop_width", r.prop_width},
                       {"mean_batches", number_or_null(r.mean_batches)},
                       {"ci_low", number_or_null(r.ci_low)},
                       {"ci_high", number_or_null(r.ci_high)}});
  }
  return json{{"schema_version", kExperimentSchemaVersion},
              {"experiment", spec.name},
              {"repetitions", spec.repetitions},
              {"base_seed", spec.base_seed},
              {"rows", std::move(out)}};
}

void write_trajectory_csv(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  out << "strategy,method,replication,wave,reviewed,estimate,point,lower,upper,stop_wave,"
         "final_status\n";
  for (const auto& t : trajectories) {
    const bool stopped = is_terminal(t.final_status.status);
    for (const auto& b : t.bands) {
      out << to_string(t.strategy) << ',' << to_string(t.method) << ',' << t.replication << ','
          << b.wave << ',' << b.reviewed << ',' << fmt(b.estimate) << ','
          << fmt(b.interval.point) << ',' << fmt(b.interval.lower) << ','
          << fmt(b.interval.upper) << ',' << (stopped ? std::to_string(t.final_status.wave) : "NA")
          << ',' << to_string(t.final_status.status) << '\n';
    }
  }
}

json trajectory_json(const std::vector<Trajectory>& trajectories) {
  json out = json::array();
  for (const auto& t : trajectories) {
    json bands = json::array();
    for (const auto& b : t.bands) bands.push_back(to_json(b));
    out.push_back(json{{"strategy", to_string(t.strategy)},
                       {"method", to_string(t.method)},
                       {"replication", t.replication},
                       {"tau1", t.rule.tau1 ? json(*t.rule.tau1) : json(nullptr)},
                       {"tau2", t.rule.tau2 ? json(*t.rule.tau2) : json(nullptr)},
                       {"width_limit", t.rule.width_limit ? json(*t.rule.width_limit) : json(nullptr)},
                       {"bands", std::move(bands)},
                       {"final", to_json(t.final_status)}});
  }
  return json{{"schema_version", kExperimentSchemaVersion}, {"trajectories", std::move(out)}};
}

}  // namespace chartwave
