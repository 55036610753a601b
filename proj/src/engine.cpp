#include "chartwave/engine.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "chartwave/errors.hpp"

namespace chartwave {

using nlohmann::json;

namespace {

template <class T>
json optional_to_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> optional_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string_view to_string(StopMode mode) {
  switch (mode) {
    case StopMode::width:
      return "width";
    case StopMode::both:
      return "both";
    case StopMode::thresholds:
      break;
  }
  return "thresholds";
}

StopMode parse_stop_mode(std::string_view text) {
  if (text == "thresholds") return StopMode::thresholds;
  if (text == "width") return StopMode::width;
  if (text == "both") return StopMode::both;
  throw InvalidArgumentError("unknown stopping mode '" + std::string(text) + "'");
}

std::string_view to_string(StopStatus status) {
  switch (status) {
    case StopStatus::stop_above:
      return "stop_above";
    case StopStatus::stop_futility:
      return "stop_futility";
    case StopStatus::stop_width:
      return "stop_width";
    case StopStatus::exhausted:
      return "exhausted";
    case StopStatus::continue_sampling:
      break;
  }
  return "continue";
}

StopStatus parse_stop_status(std::string_view text) {
  if (text == "continue") return StopStatus::continue_sampling;
  if (text == "stop_above") return StopStatus::stop_above;
  if (text == "stop_futility") return StopStatus::stop_futility;
  if (text == "stop_width") return StopStatus::stop_width;
  if (text == "exhausted") return StopStatus::exhausted;
  throw InvalidArgumentError("unknown stop status '" + std::string(text) + "'");
}

std::vector<std::string> StoppingRule::violations() const {
  std::vector<std::string> v;
  const bool uses_thresholds = mode != StopMode::width;
  const bool uses_width = mode != StopMode::thresholds;
  if (uses_thresholds && !tau1 && !tau2) v.emplace_back("threshold mode needs tau1 or tau2");
  if (uses_width && !width_limit) v.emplace_back("width mode needs width_limit");
  for (auto [name, tau] : {std::pair{"tau1", tau1}, std::pair{"tau2", tau2}}) {
    if (tau && !(*tau >= 0.0 && *tau <= 1.0)) v.emplace_back(std::string(name) + " must lie in [0,1]");
  }
  if (tau1 && tau2 && *tau1 > *tau2) v.emplace_back("tau1 must not exceed tau2");
  if (width_limit && !(*width_limit > 0.0)) v.emplace_back("width_limit must be positive");
  return v;
}

StopDecision evaluate_stopping(const IntervalEstimate& interval, const StoppingRule& rule,
                               std::size_t wave) {
  StopDecision d{StopStatus::continue_sampling, wave, interval};
  if (rule.mode != StopMode::width) {
    const bool above = rule.tau1 && interval.lower > *rule.tau1;
    const bool futile = rule.tau2 && interval.upper < *rule.tau2;
    if (above && futile) {
      const double mid = 0.5 * (*rule.tau1 + *rule.tau2);
      d.status = interval.point < mid ? StopStatus::stop_futility : StopStatus::stop_above;
      return d;
    }
    if (above) {
      d.status = StopStatus::stop_above;
      return d;
    }
    if (futile) {
      d.status = StopStatus::stop_futility;
      return d;
    }
  }
  if (rule.mode != StopMode::thresholds && rule.width_limit &&
      interval.width() < *rule.width_limit) {
    d.status = StopStatus::stop_width;
  }
  return d;
}

std::vector<std::string> SessionConfig::violations() const {
  std::vector<std::string> v;
  if (policy.batch_size < 1) v.emplace_back("batch size must be at least 1");
  auto rule_v = rule.violations();
  v.insert(v.end(), rule_v.begin(), rule_v.end());
  if (!(alpha > 0.0 && alpha < 1.0)) v.emplace_back("alpha must lie in (0,1)");
  try {
    raking.validate();
  } catch (const ValidationError& e) {
    v.insert(v.end(), e.violations().begin(), e.violations().end());
  }
  return v;
}

Session Session::create(SessionConfig config, Cohort cohort) {
  auto v = config.violations();
  if (cohort.size() == 0) v.emplace_back("cohort is empty");
  for (const auto& r : cohort.rows()) {
    if (r.reviewed) {
      v.emplace_back("cohort already contains reviewed patients");
      break;
    }
  }
  if (!v.empty()) throw ValidationError(std::move(v));
  Session s;
  s.config_ = std::move(config);
  s.cohort_ = std::move(cohort);
  s.initial_weights_ = s.cohort_.stratum_proportions();
  s.initial_sizes_ = s.cohort_.stratum_counts();
  s.rng_ = Rng(derive_seed(s.config_.seed, {hash_string("session")}));
  return s;
}

std::size_t Session::positives() const {
  std::size_t n = 0;
  for (std::size_t r : reviewed_rows_) n += static_cast<std::size_t>(*cohort_.row(r).label);
  return n;
}

std::vector<std::size_t> Session::stratum_reviewed() const {
  std::vector<std::size_t> n(cohort_.strata(), 0);
  for (std::size_t r : reviewed_rows_) ++n[cohort_.row(r).stratum];
  return n;
}

std::vector<std::size_t> Session::stratum_positives() const {
  std::vector<std::size_t> n(cohort_.strata(), 0);
  for (std::size_t r : reviewed_rows_) n[cohort_.row(r).stratum] += *cohort_.row(r).label;
  return n;
}

AllocationHistory Session::allocation_history() const {
  AllocationHistory h(cohort_.strata());
  for (const auto& w : waves_) h.add(w.allocation.counts);
  return h;
}

std::vector<double> Session::stratum_sds() const {
  std::vector<std::vector<double>> values(cohort_.strata());
  for (std::size_t r : reviewed_rows_)
    values[cohort_.row(r).stratum].push_back(static_cast<double>(*cohort_.row(r).label));
  const std::size_t needed = config_.policy.sd_estimator == SdEstimator::mad ? 1 : 2;
  std::vector<double> sds(values.size(), 0.0);
  for (std::size_t s = 0; s < values.size(); ++s)
    if (values[s].size() >= needed) sds[s] = estimate_stratum_sd(values[s], config_.policy.sd_estimator);
  return sds;
}

WaveAllocation Session::choose_counts(const Reservoir& reservoir) {
  const auto& p = config_.policy;
  switch (p.strategy) {
    case Strategy::random:
      return allocate_random(p.batch_size, reservoir, rng_);
    case Strategy::stratified1:
      return allocate_stratified_equal(p.batch_size, reservoir);
    case Strategy::stratified2:
      return allocate_stratified_proportional(p.batch_size, initial_weights_, reservoir);
    case Strategy::neyman:
      break;
  }
  if (waves_.empty()) {
    auto a = allocate_stratified_proportional(p.batch_size, initial_weights_, reservoir);
    a.source = AllocationSource::first_wave_fallback;
    return a;
  }
  std::vector<double> sizes(cohort_.strata());
  if (p.neyman_size_basis == SizeBasis::validated) {
    const auto n = stratum_reviewed();
    std::transform(n.begin(), n.end(), sizes.begin(), [](std::size_t x) { return double(x); });
  } else {
    std::transform(initial_sizes_.begin(), initial_sizes_.end(), sizes.begin(),
                   [](std::size_t x) { return double(x); });
  }
  return allocate_neyman(allocation_history(), p.batch_size, sizes, stratum_sds(), p, reservoir,
                         initial_weights_);
}

const PendingWave& Session::next_allocation() {
  if (is_terminal(status_.status))
    throw StateError("session has stopped (" + std::string(to_string(status_.status)) + ")");
  if (pending_) return *pending_;

  const Reservoir reservoir = cohort_.unreviewed_counts();
  WaveAllocation alloc;
  const bool empty = std::accumulate(reservoir.begin(), reservoir.end(), std::size_t{0}) == 0;
  if (!empty) alloc = choose_counts(reservoir);
  if (empty || alloc.total() == 0) {
    status_.status = StopStatus::exhausted;
    status_.wave = waves_.size();
    status_.interval = bands_.empty() ? std::nullopt : std::optional(bands_.back().interval);
    alloc.counts.assign(cohort_.strata(), 0);
    alloc.wave = waves_.size() + 1;
    pending_.reset();
    exhausted_allocation_ = PendingWave{alloc, {}};
    return exhausted_allocation_;
  }
  alloc.wave = waves_.size() + 1;

  PendingWave wave;
  wave.allocation = alloc;
  std::vector<std::vector<std::size_t>> pools(cohort_.strata());
  for (std::size_t i = 0; i < cohort_.size(); ++i)
    if (!cohort_.row(i).reviewed) pools[cohort_.row(i).stratum].push_back(i);
  for (std::size_t s = 0; s < pools.size(); ++s) {
    auto& pool = pools[s];
    for (std::size_t j = 0; j < alloc.counts[s]; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng_.below(pool.size() - j));
      std::swap(pool[j], pool[pick]);
      wave.patient_ids.push_back(cohort_.row(pool[j]).patient_id);
    }
  }
  pending_ = std::move(wave);
  return *pending_;
}

void Session::refresh_estimates() {
  const std::size_t m = cohort_.strata();
  RakingFactor factor;
  factor.category_of.reserve(reviewed_rows_.size());
  std::vector<int> labels;
  labels.reserve(reviewed_rows_.size());
  std::vector<double> sampled(m, 0.0);
  for (std::size_t r : reviewed_rows_) {
    factor.category_of.push_back(cohort_.row(r).stratum);
    labels.push_back(*cohort_.row(r).label);
    sampled[cohort_.row(r).stratum] += 1.0;
  }
  // Population target restricted to strata that have been sampled at all.
  factor.population.assign(m, 0.0);
  double covered = 0.0;
  for (std::size_t s = 0; s < m; ++s)
    if (sampled[s] > 0.0) covered += initial_weights_[s];
  for (std::size_t s = 0; s < m; ++s)
    if (sampled[s] > 0.0) factor.population[s] = initial_weights_[s] / covered;
  weights_ = raking_weights(std::span(&factor, 1), config_.raking);

  const auto counts = effective_counts(labels, weights_);
  const double estimate = weighted_ppv(labels, weights_);
  IntervalEstimate band =
      binomial_interval(config_.method, counts.k_eff, counts.s_eff, config_.alpha, waves_.size() - 1);
  if (config_.monotone_bands && !bands_.empty()) {
    const auto& prev = bands_.back().interval;
    const double lo = std::max(prev.lower, band.lower);
    const double hi = std::min(prev.upper, band.upper);
    if (lo <= hi) {
      band.lower = lo;
      band.upper = hi;
    }
  }
  band.point = std::clamp(estimate, band.lower, band.upper);

  BandPoint bp;
  bp.wave = waves_.size();
  bp.interval = band;
  bp.estimate = estimate;
  bp.reviewed = reviewed_rows_.size();
  bp.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  bands_.push_back(bp);
}

const StopDecision& Session::record_wave(std::span<const ReviewRecord> records) {
  if (is_terminal(status_.status))
    throw StateError("session has stopped (" + std::string(to_string(status_.status)) + ")");
  if (!pending_) throw StateError("no pending allocation to record");

  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < pending_->patient_ids.size(); ++i)
    position.emplace(pending_->patient_ids[i], i);
  std::vector<int> labels(pending_->patient_ids.size(), -1);
  std::vector<std::string> unknown, duplicate, bad_label;
  for (const auto& rec : records) {
    auto it = position.find(rec.patient_id);
    if (it == position.end()) {
      unknown.push_back(rec.patient_id);
      continue;
    }
    if (labels[it->second] != -1) {
      duplicate.push_back(rec.patient_id);
      continue;
    }
    if (rec.label != 0 && rec.label != 1) bad_label.push_back(rec.patient_id);
    labels[it->second] = rec.label;
  }
  if (!unknown.empty()) throw RecordError("patient ids not in the pending allocation", unknown);
  if (!duplicate.empty()) throw RecordError("duplicate patient ids", duplicate);
  if (!bad_label.empty()) throw RecordError("labels must be 0 or 1", bad_label);
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == -1) missing.push_back(pending_->patient_ids[i]);
  if (!missing.empty()) throw RecordError("pending patients without a label", missing);

  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t row = *cohort_.find(pending_->patient_ids[i]);
    cohort_.mark_reviewed(row, labels[i]);
    reviewed_rows_.push_back(row);
  }
  waves_.push_back(WaveLog{pending_->allocation, pending_->patient_ids, labels});
  pending_.reset();

  refresh_estimates();
  status_ = evaluate_stopping(bands_.back().interval, config_.rule, waves_.size());
  if (!is_terminal(status_.status)) {
    const auto left = cohort_.unreviewed_counts();
    if (std::accumulate(left.begin(), left.end(), std::size_t{0}) == 0)
      status_.status = StopStatus::exhausted;
  }
  return status_;
}

Session Session::replay() const {
  std::vector<PatientRow> rows = cohort_.rows();
  for (auto& r : rows) {
    r.reviewed = false;
    r.label.reset();
  }
  Session fresh = create(config_, Cohort(cohort_.spec(), std::move(rows)));
  for (const auto& w : waves_) {
    const auto& pending = fresh.next_allocation();
    if (pending.patient_ids != w.patient_ids)
      throw StateError("replay diverged at wave " + std::to_string(w.allocation.wave));
    std::vector<ReviewRecord> recs;
    for (std::size_t i = 0; i < w.patient_ids.size(); ++i)
      recs.push_back({w.patient_ids[i], w.labels[i]});
    fresh.record_wave(recs);
  }
  if (pending_) fresh.next_allocation();
  return fresh;
}

// ---- serialisation ----

json to_json(const IntervalEstimate& e) {
  return json{{"lower", e.lower}, {"upper", e.upper},   {"point", e.point},
              {"method", to_string(e.method)},          {"alpha", e.alpha},
              {"k_eff", e.k_eff}, {"s_eff", e.s_eff}};
}

IntervalEstimate interval_from_json(const json& j) {
  IntervalEstimate e;
  e.lower = j.at("lower").get<double>();
  e.upper = j.at("upper").get<double>();
  e.point = j.at("point").get<double>();
  e.method = parse_interval_method(j.at("method").get<std::string>());
  e.alpha = j.at("alpha").get<double>();
  e.k_eff = j.at("k_eff").get<double>();
  e.s_eff = j.at("s_eff").get<double>();
  return e;
}

json to_json(const StopDecision& d) {
  return json{{"status", to_string(d.status)},
              {"wave", d.wave},
              {"interval", d.interval ? to_json(*d.interval) : json(nullptr)}};
}

static StopDecision decision_from_json(const json& j) {
  StopDecision d;
  d.status = parse_stop_status(j.at("status").get<std::string>());
  d.wave = j.at("wave").get<std::size_t>();
  if (!j.at("interval").is_null()) d.interval = interval_from_json(j.at("interval"));
  return d;
}

json to_json(const SessionConfig& c) {
  return json{
      {"policy",
       {{"strategy", to_string(c.policy.strategy)},
        {"batch_size", c.policy.batch_size},
        {"min_per_stratum", c.policy.min_per_stratum},
        {"sd_estimator", to_string(c.policy.sd_estimator)},
        {"neyman_size_basis", to_string(c.policy.neyman_size_basis)}}},
      {"rule",
       {{"tau1", optional_to_json(c.rule.tau1)},
        {"tau2", optional_to_json(c.rule.tau2)},
        {"width_limit", optional_to_json(c.rule.width_limit)},
        {"mode", to_string(c.rule.mode)}}},
      {"method", to_string(c.method)},
      {"alpha", c.alpha},
      {"raking",
       {{"discrepancy_threshold", c.raking.discrepancy_threshold},
        {"weight_cap", c.raking.weight_cap},
        {"max_iterations", c.raking.max_iterations},
        {"tolerance", c.raking.tolerance}}},
      {"monotone_bands", c.monotone_bands},
      {"seed", c.seed}};
}

SessionConfig session_config_from_json(const json& j) {
  SessionConfig c;
  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    c.policy.strategy = parse_strategy(p.value("strategy", std::string("random")));
    c.policy.batch_size = p.value("batch_size", c.policy.batch_size);
    c.policy.min_per_stratum = p.value("min_per_stratum", c.policy.min_per_stratum);
    c.policy.sd_estimator = parse_sd_estimator(p.value("sd_estimator", std::string("mad")));
    c.policy.neyman_size_basis =
        parse_size_basis(p.value("neyman_size_basis", std::string("validated")));
  }
  if (j.contains("rule")) {
    const auto& r = j.at("rule");
    c.rule.tau1 = optional_double(r, "tau1");
    c.rule.tau2 = optional_double(r, "tau2");
    c.rule.width_limit = optional_double(r, "width_limit");
    c.rule.mode = parse_stop_mode(r.value("mode", std::string("thresholds")));
  }
  c.method = parse_interval_method(j.value("method", std::string("bayes")));
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("raking")) {
    const auto& r = j.at("raking");
    c.raking.discrepancy_threshold = r.value("discrepancy_threshold", c.raking.discrepancy_threshold);
    c.raking.weight_cap = r.value("weight_cap", c.raking.weight_cap);
    c.raking.max_iterations = r.value("max_iterations", c.raking.max_iterations);
    c.raking.tolerance = r.value("tolerance", c.raking.tolerance);
  }
  c.monotone_bands = j.value("monotone_bands", false);
  c.seed = j.value("seed", c.seed);
  return c;
}

json to_json(const WaveAllocation& a) {
  return json{{"wave", a.wave}, {"counts", a.counts}, {"source", to_string(a.source)}};
}

static WaveAllocation allocation_from_json(const json& j) {
  WaveAllocation a;
  a.wave = j.at("wave").get<std::size_t>();
  a.counts = j.at("counts").get<std::vector<std::size_t>>();
  a.source = parse_allocation_source(j.at("source").get<std::string>());
  return a;
}

json to_json(const BandPoint& b) {
  return json{{"wave", b.wave},
              {"interval", to_json(b.interval)},
              {"estimate", b.estimate},
              {"reviewed", b.reviewed},
              {"positives", b.positives}};
}

static BandPoint band_from_json(const json& j) {
  BandPoint b;
  b.wave = j.at("wave").get<std::size_t>();
  b.interval = interval_from_json(j.at("interval"));
  b.estimate = j.at("estimate").get<double>();
  b.reviewed = j.at("reviewed").get<std::size_t>();
  b.positives = j.at("positives").get<std::size_t>();
  return b;
}

json Session::to_json() const {
  json patients = json::array();
  for (const auto& r : cohort_.rows()) patients.push_back(json::array({r.patient_id, r.covariate}));
  json waves = json::array();
  for (const auto& w : waves_)
    waves.push_back({{"allocation", chartwave::to_json(w.allocation)},
                     {"patient_ids", w.patient_ids},
                     {"labels", w.labels}});
  json bands = json::array();
  for (const auto& b : bands_) bands.push_back(chartwave::to_json(b));
  json pending = nullptr;
  if (pending_)
    pending = {{"allocation", chartwave::to_json(pending_->allocation)},
               {"patient_ids", pending_->patient_ids}};
  return json{{"schema_version", kSessionSchemaVersion},
              {"kind", "chartwave.session"},
              {"config", chartwave::to_json(config_)},
              {"strata", {{"boundaries", cohort_.spec().boundaries}, {"labels", cohort_.spec().labels}}},
              {"patients", std::move(patients)},
              {"waves", std::move(waves)},
              {"pending", std::move(pending)},
              {"band_history", std::move(bands)},
              {"weights", weights_},
              {"status", chartwave::to_json(status_)},
              {"rng_state", rng_.state()}};
}

Session Session::from_json(const json& doc) {
  try {
    if (!doc.is_object() || !doc.contains("schema_version"))
      throw LoadError("session document has no schema_version");
    if (doc.at("schema_version").get<int>() != kSessionSchemaVersion)
      throw LoadError("unsupported session schema version " + doc.at("schema_version").dump());
    if (doc.value("kind", std::string()) != "chartwave.session")
      throw LoadError("document is not a session");

    StratumSpec spec;
    spec.boundaries = doc.at("strata").at("boundaries").get<std::vector<double>>();
    spec.labels = doc.at("strata").at("labels").get<std::vector<std::string>>();
    spec.validate();
    std::vector<PatientRow> rows;
    for (const auto& p : doc.at("patients")) {
      PatientRow r;
      r.patient_id = p.at(0).get<std::string>();
      r.covariate = p.at(1).get<double>();
      r.stratum = stratify(r.covariate, spec);
      rows.push_back(std::move(r));
    }
    Session s = create(session_config_from_json(doc.at("config")), Cohort(spec, std::move(rows)));

    for (const auto& w : doc.at("waves")) {
      WaveLog log{allocation_from_json(w.at("allocation")),
                  w.at("patient_ids").get<std::vector<std::string>>(),
                  w.at("labels").get<std::vector<int>>()};
      if (log.labels.size() != log.patient_ids.size() ||
          log.allocation.total() != log.patient_ids.size() ||
          log.allocation.counts.size() != s.cohort_.strata())
        throw LoadError("wave log entry is inconsistent");
      for (std::size_t i = 0; i < log.patient_ids.size(); ++i) {
        auto row = s.cohort_.find(log.patient_ids[i]);
        if (!row) throw LoadError("wave log names unknown patient " + log.patient_ids[i]);
        s.cohort_.mark_reviewed(*row, log.labels[i]);
        s.reviewed_rows_.push_back(*row);
      }
      s.waves_.push_back(std::move(log));
    }
    if (!doc.at("pending").is_null()) {
      const auto& p = doc.at("pending");
      s.pending_ = PendingWave{allocation_from_json(p.at("allocation")),
                               p.at("patient_ids").get<std::vector<std::string>>()};
    }
    for (const auto& b : doc.at("band_history")) s.bands_.push_back(band_from_json(b));
    if (s.bands_.size() != s.waves_.size())
      throw LoadError("band history length differs from the number of waves");
    s.weights_ = doc.at("weights").get<std::vector<double>>();
    if (s.weights_.size() != s.reviewed_rows_.size())
      throw LoadError("weight vector does not match the reviewed patients");
    s.status_ = decision_from_json(doc.at("status"));
    s.rng_.restore(doc.at("rng_state").get<std::string>());
    return s;
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError(std::string("corrupt session document: ") + e.what());
  }
}

void save_session(const Session& session, const std::filesystem::path& path) {
  const std::string text = session.to_json().dump(2) + "\n";
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Session load_session(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open session file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str(), nullptr, false);
  if (doc.is_discarded()) throw LoadError("session file " + path.string() + " is not valid JSON");
  return Session::from_json(doc);
}

}  // namespace chartwave
