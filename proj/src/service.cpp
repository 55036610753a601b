#include "chartwave/service.hpp"

#include <random>
#include <regex>

#include "chartwave/errors.hpp"
#include "chartwave/forecast.hpp"

namespace chartwave {

using nlohmann::json;

namespace {

const std::regex kIdPattern("[A-Za-z0-9_-]{1,64}");

HttpResponse reply(int status, json body) {
  body["schema_version"] = kApiSchemaVersion;
  return {status, std::move(body)};
}

HttpResponse error(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return reply(status, std::move(extra));
}

std::string new_session_id() {
  static std::mt19937_64 gen{std::random_device{}()};
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  char buf[24];
  std::snprintf(buf, sizeof buf, "s%016llx", static_cast<unsigned long long>(gen()));
  return buf;
}

}  // namespace

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.path().extension() != ".json") continue;
    const std::string id = entry.path().stem().string();
    if (!std::regex_match(id, kIdPattern)) continue;
    sessions_.emplace(id, std::make_shared<Entry>(load_session(entry.path())));
  }
}

std::filesystem::path SessionStore::path_for(const std::string& id) const { return dir_ / (id + ".json"); }

std::string SessionStore::create(Session session) {
  std::unique_lock lock(map_mutex_);
  std::string id;
  do {
    id = new_session_id();
  } while (sessions_.count(id));
  save_session(session, path_for(id));
  sessions_.emplace(id, std::make_shared<Entry>(std::move(session)));
  return id;
}

bool SessionStore::contains(const std::string& id) const { return find(id) != nullptr; }

std::vector<std::string> SessionStore::ids() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, e] : sessions_) out.push_back(id);
  return out;
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Cohort cohort_from_json(const json& j) {
  if (j.contains("synthetic")) {
    const auto& g = j.at("synthetic");
    ScenarioConfig cfg;
    cfg.n = g.value("n", cfg.n);
    cfg.skew = parse_skew(g.value("skew", std::string("balanced")));
    cfg.seed = g.value("seed", cfg.seed);
    StratumSpec spec = g.contains("strata")
                           ? StratumSpec::from_cuts(g.at("strata").get<std::vector<double>>())
                           : default_strata();
    return gen_cohort(cfg, spec);
  }
  const auto& c = j.at("cohort");
  StratumSpec spec = StratumSpec::from_cuts(c.at("strata").get<std::vector<double>>());
  std::vector<PatientRow> rows;
  for (const auto& p : c.at("patients")) {
    PatientRow r;
    r.patient_id = p.at("patient_id").get<std::string>();
    r.covariate = p.at("covariate").get<double>();
    r.stratum = stratify(r.covariate, spec);
    rows.push_back(std::move(r));
  }
  return Cohort(spec, std::move(rows));
}

json status_json(const std::string& id, const Session& session) {
  json latest = nullptr;
  if (!session.band_history().empty()) latest = to_json(session.band_history().back());
  json pending = nullptr;
  if (session.pending()) pending = session.pending()->allocation.wave;
  return json{{"schema_version", kApiSchemaVersion},
              {"id", id},
              {"wave", session.completed_waves()},
              {"status", to_json(session.status())},
              {"latest", std::move(latest)},
              {"reviewed", session.reviewed()},
              {"positives", session.positives()},
              {"pending_wave", std::move(pending)},
              {"config", to_json(session.config())}};
}

json allocation_json(const std::string& id, const Session& session, const PendingWave& wave) {
  json patients = json::array();
  for (const auto& pid : wave.patient_ids) {
    const auto row = session.cohort().find(pid);
    patients.push_back({{"patient_id", pid}, {"stratum", session.cohort().row(*row).stratum}});
  }
  return json{{"schema_version", kApiSchemaVersion},
              {"id", id},
              {"wave", session.completed_waves()},
              {"allocation", to_json(wave.allocation)},
              {"strata", session.cohort().spec().labels},
              {"patients", std::move(patients)},
              {"status", to_json(session.status())}};
}

json history_json(const std::string& id, const Session& session) {
  json bands = json::array();
  for (const auto& b : session.band_history()) bands.push_back(to_json(b));
  const auto& rule = session.config().rule;
  return json{{"schema_version", kApiSchemaVersion},
              {"id", id},
              {"wave", session.completed_waves()},
              {"bands", std::move(bands)},
              {"tau1", rule.tau1 ? json(*rule.tau1) : json(nullptr)},
              {"tau2", rule.tau2 ? json(*rule.tau2) : json(nullptr)},
              {"width_limit", rule.width_limit ? json(*rule.width_limit) : json(nullptr)},
              {"status", to_json(session.status())}};
}

Service::Service(std::filesystem::path dir, std::optional<std::string> bearer_token)
    : store_(std::move(dir)), token_(std::move(bearer_token)) {}

HttpResponse Service::handle(const HttpRequest& request) {
  if (token_) {
    auto it = request.headers.find("Authorization");
    if (it == request.headers.end() || it->second != "Bearer " + *token_)
      return error(401, "missing or invalid bearer token");
  }
  static const std::regex kSessionRoute("^/sessions/([^/]+)/([a-z]+)$");
  try {
    if (request.path == "/sessions") {
      if (request.method == "POST") return create_session(request);
      return error(405, "method not allowed");
    }
    std::smatch m;
    if (!std::regex_match(request.path, m, kSessionRoute)) return error(404, "no such route");
    const std::string id = m[1];
    const std::string action = m[2];
    if (!std::regex_match(id, kIdPattern) || !store_.contains(id))
      return error(404, "unknown session " + id);
    if (request.method == "GET") {
      if (action == "status") return get_status(id);
      if (action == "allocation") return get_allocation(id);
      if (action == "history") return get_history(id);
      if (action == "prediction") return get_prediction(id, request);
    } else if (request.method == "POST" && action == "labels") {
      return post_labels(id, request);
    }
    return error(404, "no such route");
  } catch (const json::exception& e) {
    return error(400, std::string("malformed request: ") + e.what());
  } catch (const ValidationError& e) {
    return error(422, e.what(), json{{"violations", e.violations()}});
  } catch (const Error& e) {
    return error(422, e.what());
  }
}

HttpResponse Service::create_session(const HttpRequest& request) {
  const json body = json::parse(request.body);
  SessionConfig cfg = session_config_from_json(body.at("config"));
  Session session = Session::create(cfg, cohort_from_json(body));
  const std::string id = store_.create(std::move(session));
  json out;
  store_.read(id, [&](const Session& s) { out = status_json(id, s); });
  return reply(201, std::move(out));
}

HttpResponse Service::get_status(const std::string& id) {
  json out;
  store_.read(id, [&](const Session& s) { out = status_json(id, s); });
  return reply(200, std::move(out));
}

HttpResponse Service::get_history(const std::string& id) {
  json out;
  store_.read(id, [&](const Session& s) { out = history_json(id, s); });
  return reply(200, std::move(out));
}

HttpResponse Service::get_allocation(const std::string& id) {
  bool stopped = false;
  json status;
  store_.read(id, [&](const Session& s) {
    stopped = is_terminal(s.status().status);
    status = to_json(s.status());
  });
  if (stopped) return error(409, "session has stopped", json{{"status", status}});
  json out;
  store_.mutate(id, [&](Session& s) {
    const PendingWave& wave = s.next_allocation();
    out = allocation_json(id, s, wave);
  });
  return reply(200, std::move(out));
}

HttpResponse Service::post_labels(const std::string& id, const HttpRequest& request) {
  const json body = json::parse(request.body);
  if (!body.contains("wave")) return error(400, "labels payload needs the allocation's wave index");
  const std::size_t wave = body.at("wave").get<std::size_t>();
  std::vector<ReviewRecord> records;
  for (const auto& r : body.at("labels"))
    records.push_back({r.at("patient_id").get<std::string>(), r.at("label").get<int>()});

  std::optional<HttpResponse> conflict;
  json out;
  try {
    store_.mutate(id, [&](Session& s) {
      if (is_terminal(s.status().status)) {
        conflict = error(409, "session has stopped",
                         json{{"wave", s.completed_waves()}, {"status", to_json(s.status())}});
        throw StateError("stopped");
      }
      if (!s.pending() || s.pending()->allocation.wave != wave) {
        conflict = error(409, "stale wave index",
                         json{{"wave", s.completed_waves()},
                              {"pending_wave", s.pending() ? json(s.pending()->allocation.wave)
                                                           : json(nullptr)}});
        throw StateError("stale");
      }
      const StopDecision& d = s.record_wave(records);
      out = json{{"id", id}, {"wave", s.completed_waves()}, {"decision", to_json(d)},
                 {"latest", to_json(s.band_history().back())}};
    });
  } catch (const RecordError& e) {
    return error(422, e.what(), json{{"offending_ids", e.offending_ids()}});
  } catch (const StateError& e) {
    if (conflict) return *conflict;
    return error(409, e.what());
  }
  return reply(200, std::move(out));
}

HttpResponse Service::get_prediction(const std::string& id, const HttpRequest& request) {
  auto param = [&](const std::string& key) -> std::optional<std::string> {
    auto it = request.query.find(key);
    if (it == request.query.end()) return std::nullopt;
    return it->second;
  };
  const ForecastMethod method = parse_forecast_method(param("method").value_or("simulate"));
  json out;
  store_.read(id, [&](const Session& s) {
    ForecastResult r;
    if (method == ForecastMethod::simulate) {
      ForecastOptions opts;
      if (auto v = param("replications")) opts.replications = std::stoul(*v);
      if (auto v = param("seed")) opts.seed = std::stoull(*v);
      r = predict_stopping_sim(s, opts);
    } else {
      std::optional<double> target;
      if (auto v = param("target_width")) target = std::stod(*v);
      r = predict_stopping_rate(s, target);
    }
    out = json{{"id", id}, {"wave", s.completed_waves()}, {"prediction", to_json(r)}};
  });
  return reply(200, std::move(out));
}

}  // namespace chartwave
