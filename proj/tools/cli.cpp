#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "chartwave/errors.hpp"
#include "chartwave/flat_config.hpp"
#include "chartwave/forecast.hpp"
#include "chartwave/service.hpp"
#include "chartwave/simharness.hpp"

namespace chartwave {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> parse_cuts(const std::string& text) {
  std::vector<double> cuts;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      cuts.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw InvalidArgumentError("bad stratum cut point: " + item);
    }
  }
  return cuts;
}

std::optional<double> optional_value(const std::string& text) {
  if (text.empty() || text == "none") return std::nullopt;
  try {
    return std::stod(text);
  } catch (const std::logic_error&) {
    throw InvalidArgumentError("not a number: " + text);
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path);
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

// patient_id,label rows; a header line is required.
std::vector<ReviewRecord> read_labels_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw LoadError("labels file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("patient_id,label", 0) != 0) throw LoadError("labels file needs a patient_id,label header");
  std::vector<ReviewRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw LoadError("line " + std::to_string(lineno) + ": expected patient_id,label");
    std::string label = line.substr(comma + 1);
    if (auto c = label.find(','); c != std::string::npos) label.resize(c);
    int value;
    if (label == "0") value = 0;
    else if (label == "1") value = 1;
    else value = -1;  // rejected by the session along with its id
    records.push_back({line.substr(0, comma), value});
  }
  return records;
}

fs::path default_out_dir() {
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "out";
}

struct SessionFlags {
  std::string session;
  std::string cohort;
  std::string strata;
  std::size_t synthetic_n = 0;
  std::string skew = "balanced";
  std::uint64_t cohort_seed = 1;
  std::string strategy = "neyman";
  std::string method = "bayes";
  std::string tau1, tau2, width_limit;
  std::string mode = "thresholds";
  std::size_t batch_size = 100;
  std::size_t min_per_stratum = 10;
  std::string sd_estimator = "mad";
  std::string size_basis = "validated";
  double alpha = 0.05;
  bool monotone = false;
  std::uint64_t seed = 1;
};

SessionConfig config_from_flags(const SessionFlags& f) {
  SessionConfig c;
  c.policy.strategy = parse_strategy(f.strategy);
  c.policy.batch_size = f.batch_size;
  c.policy.min_per_stratum = f.min_per_stratum;
  c.policy.sd_estimator = parse_sd_estimator(f.sd_estimator);
  c.policy.neyman_size_basis = parse_size_basis(f.size_basis);
  c.rule.tau1 = optional_value(f.tau1);
  c.rule.tau2 = optional_value(f.tau2);
  c.rule.width_limit = optional_value(f.width_limit);
  c.rule.mode = parse_stop_mode(f.mode);
  c.method = parse_interval_method(f.method);
  c.alpha = f.alpha;
  c.monotone_bands = f.monotone;
  c.seed = f.seed;
  return c;
}

Cohort cohort_from_flags(const SessionFlags& f) {
  StratumSpec spec = f.strata.empty() ? default_strata() : StratumSpec::from_cuts(parse_cuts(f.strata));
  if (!f.cohort.empty()) {
    auto in = open_input(f.cohort);
    return read_cohort_csv(in, spec);
  }
  ScenarioConfig cfg;
  cfg.n = f.synthetic_n ? f.synthetic_n : cfg.n;
  cfg.skew = parse_skew(f.skew);
  cfg.seed = f.cohort_seed;
  return gen_cohort(cfg, spec);
}

void run_simulate(const std::string& spec_path, fs::path out_dir, std::size_t repetitions,
                  std::optional<std::uint64_t> seed, unsigned threads, std::ostream& out) {
  auto in = open_input(spec_path);
  std::stringstream text;
  text << in.rdbuf();
  ExperimentSpec spec = experiment_from_config(FlatConfig::parse(text.str()));
  if (repetitions) spec.repetitions = repetitions;
  if (seed) spec.base_seed = *seed;
  if (threads) spec.threads = threads;
  spec.validate();

  const auto rows = run_replications(spec);
  std::vector<Trajectory> trajectories;
  for (auto s : spec.strategies)
    for (auto m : spec.methods) trajectories.push_back(emit_trajectory(spec, s, m));

  fs::create_directories(out_dir);
  {
    auto f = open_output(out_dir / "summary.csv");
    write_summary_csv(f, rows);
  }
  open_output(out_dir / "summary.json") << summary_json(spec, rows).dump(2) << '\n';
  {
    auto f = open_output(out_dir / "trajectories.csv");
    write_trajectory_csv(f, trajectories);
  }
  open_output(out_dir / "trajectories.json") << trajectory_json(trajectories).dump(2) << '\n';
  write_summary_csv(out, rows);
}

json band_report(const Session& s) {
  json bands = json::array();
  for (const auto& b : s.band_history()) bands.push_back(to_json(b));
  return json{{"schema_version", kApiSchemaVersion},
              {"wave", s.completed_waves()},
              {"status", to_json(s.status())},
              {"config", to_json(s.config())},
              {"bands", std::move(bands)}};
}

void write_band_csv(std::ostream& out, const Session& s) {
  out << "wave,reviewed,positives,estimate,lower,upper,width\n";
  for (const auto& b : s.band_history())
    out << b.wave << ',' << b.reviewed << ',' << b.positives << ',' << b.estimate << ','
        << b.interval.lower << ',' << b.interval.upper << ',' << b.interval.width() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive multi-wave chart review sampling", "chartwave"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run an experiment file and write summary tables");
  std::string spec_path, out_dir;
  std::size_t repetitions = 0;
  std::uint64_t sim_seed = 0;
  unsigned threads = 0;
  sim->add_option("--spec", spec_path, "Experiment file")->required();
  sim->add_option("--out", out_dir, "Output directory (default $" + std::string(kOutDirEnv) + " or ./out)");
  sim->add_option("--repetitions", repetitions, "Override the file's repetitions");
  auto* seed_opt = sim->add_option("--seed", sim_seed, "Override the file's base seed");
  sim->add_option("--threads", threads, "Worker threads");

  // session-init
  SessionFlags sf;
  auto* init = app.add_subcommand("session-init", "Create a session file");
  init->add_option("--session", sf.session, "Session file to create")->required();
  auto* cohort_opt = init->add_option("--cohort", sf.cohort, "Cohort CSV");
  auto* synth_opt = init->add_option("--synthetic-n", sf.synthetic_n, "Generate a synthetic cohort of this size");
  cohort_opt->excludes(synth_opt);
  auto* skew_opt = init->add_option("--skew", sf.skew, "left|balanced|right");
  auto* cseed_opt = init->add_option("--cohort-seed", sf.cohort_seed, "Synthetic cohort seed");
  skew_opt->excludes(cohort_opt);
  cseed_opt->excludes(cohort_opt);
  init->add_option("--strata", sf.strata, "Comma-separated stratum cut points");
  init->add_option("--strategy", sf.strategy, "random|stratified1|stratified2|neyman");
  init->add_option("--method", sf.method, "lai|bayes|normal");
  init->add_option("--tau1", sf.tau1, "Lower threshold");
  init->add_option("--tau2", sf.tau2, "Futility threshold");
  init->add_option("--width-limit", sf.width_limit, "Band width limit");
  init->add_option("--mode", sf.mode, "thresholds|width|both");
  init->add_option("--batch-size", sf.batch_size);
  init->add_option("--min-per-stratum", sf.min_per_stratum);
  init->add_option("--sd-estimator", sf.sd_estimator, "mad|sample_sd");
  init->add_option("--size-basis", sf.size_basis, "validated|population");
  init->add_option("--alpha", sf.alpha);
  init->add_flag("--monotone", sf.monotone, "Intersect successive bands");
  init->add_option("--seed", sf.seed, "Session seed");

  // session-alloc
  std::string session_path, alloc_csv;
  auto* alloc = app.add_subcommand("session-alloc", "Draw (or repeat) the pending allocation");
  alloc->add_option("--session", session_path)->required();
  alloc->add_option("--out", alloc_csv, "Also write patient_id,stratum CSV here");

  // session-record
  std::string labels_path;
  auto* record = app.add_subcommand("session-record", "Ingest reviewer labels for the pending wave");
  record->add_option("--session", session_path)->required();
  record->add_option("--labels", labels_path, "CSV of patient_id,label")->required();

  // session-status
  auto* status = app.add_subcommand("session-status", "Print the latest band and stop decision");
  status->add_option("--session", session_path)->required();

  // session-predict
  std::string predict_method = "simulate", target_width;
  std::size_t replications = 200;
  std::uint64_t predict_seed = 1;
  auto* predict = app.add_subcommand("session-predict", "Forecast the batches left until stopping");
  predict->add_option("--session", session_path)->required();
  predict->add_option("--method", predict_method, "simulate|rate");
  predict->add_option("--replications", replications);
  predict->add_option("--seed", predict_seed);
  predict->add_option("--target-width", target_width);

  // report
  std::string format = "json";
  auto* report = app.add_subcommand("report", "Band history of a session");
  report->add_option("--session", session_path)->required();
  report->add_option("--format", format)->check(CLI::IsMember({"json", "csv"}));

  // serve
  std::string dir = "sessions", host = "127.0.0.1", token;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve sessions over HTTP");
  serve->add_option("--dir", dir, "Session directory");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--token", token, "Require this bearer token");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*sim) {
      run_simulate(spec_path, out_dir.empty() ? default_out_dir() : fs::path(out_dir), repetitions,
                   seed_opt->count() ? std::optional<std::uint64_t>(sim_seed) : std::nullopt, threads,
                   out);
    } else if (*init) {
      Session s = Session::create(config_from_flags(sf), cohort_from_flags(sf));
      if (fs::exists(sf.session)) throw Error("refusing to overwrite " + sf.session);
      save_session(s, sf.session);
      out << status_json(fs::path(sf.session).stem().string(), s).dump(2) << '\n';
    } else if (*alloc) {
      Session s = load_session(session_path);
      if (is_terminal(s.status().status)) throw StateError("session has stopped");
      const PendingWave wave = s.next_allocation();
      save_session(s, session_path);
      if (!alloc_csv.empty()) {
        auto f = open_output(alloc_csv);
        f << "patient_id,stratum\n";
        for (const auto& pid : wave.patient_ids)
          f << pid << ',' << s.cohort().row(*s.cohort().find(pid)).stratum << '\n';
      }
      out << allocation_json(fs::path(session_path).stem().string(), s, wave).dump(2) << '\n';
    } else if (*record) {
      Session s = load_session(session_path);
      auto in = open_input(labels_path);
      const auto records = read_labels_csv(in);
      const StopDecision d = s.record_wave(records);
      save_session(s, session_path);
      out << json{{"schema_version", kApiSchemaVersion}, {"wave", s.completed_waves()}, {"decision", to_json(d)}}.dump(2)
          << '\n';
    } else if (*status) {
      const Session s = load_session(session_path);
      out << status_json(fs::path(session_path).stem().string(), s).dump(2) << '\n';
    } else if (*predict) {
      const Session s = load_session(session_path);
      ForecastResult r;
      if (parse_forecast_method(predict_method) == ForecastMethod::simulate) {
        ForecastOptions opts;
        opts.replications = replications;
        opts.seed = predict_seed;
        r = predict_stopping_sim(s, opts);
      } else {
        r = predict_stopping_rate(s, optional_value(target_width));
      }
      out << json{{"schema_version", kApiSchemaVersion}, {"wave", s.completed_waves()}, {"prediction", to_json(r)}}.dump(2)
          << '\n';
    } else if (*report) {
      const Session s = load_session(session_path);
      if (format == "csv") write_band_csv(out, s);
      else out << band_report(s).dump(2) << '\n';
    } else if (*serve) {
      Service service(dir, token.empty() ? std::nullopt : std::optional<std::string>(token));
      err << "listening on " << host << ':' << port << '\n';
      serve_http(service, host, port);
    }
  } catch (const RecordError& e) {
    err << "error: " << e.what() << '\n';
    for (const auto& id : e.offending_ids()) err << "  offending id: " << id << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace chartwave
