#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gmock/gmock.h>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"

using namespace chartwave;
using nlohmann::json;
using ::testing::HasSubstr;

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "chartwave_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path small_spec(const fs::path& dir) {
  auto p = dir / "small.conf";
  std::ofstream(p) << "schema_version = 1\nname = small\nppv = 0.8\ntau1 = 0.75\ntau2 = 0.75\n"
                      "strategies = random, neyman\nmethods = bayes\nrepetitions = 3\nbase_seed = 4\n";
  return p;
}

// Checks the subset of JSON Schema used by the published schemas.
void expect_conforms(const json& value, const json& schema, const std::string& where = "$") {
  if (schema.contains("type")) {
    std::vector<std::string> types;
    if (schema["type"].is_array()) types = schema["type"].get<std::vector<std::string>>();
    else types.push_back(schema["type"]);
    auto matches = [&](const std::string& t) {
      if (t == "object") return value.is_object();
      if (t == "string") return value.is_string();
      if (t == "integer") return value.is_number_integer();
      if (t == "number") return value.is_number();
      if (t == "null") return value.is_null();
      if (t == "array") return value.is_array();
      if (t == "boolean") return value.is_boolean();
      return false;
    };
    bool any = false;
    for (const auto& t : types) any = any || matches(t);
    ASSERT_TRUE(any) << where << " has the wrong type: " << value.dump();
  }
  if (value.is_null()) return;
  if (schema.contains("const")) EXPECT_EQ(value, schema["const"]) << where;
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == value;
    EXPECT_TRUE(found) << where << " = " << value.dump();
  }
  if (schema.contains("minimum")) EXPECT_GE(value.get<double>(), schema["minimum"].get<double>()) << where;
  if (value.is_object()) {
    const json required = schema.value("required", json::array());
    for (const auto& key : required)
      EXPECT_TRUE(value.contains(key.get<std::string>())) << where << " lacks " << key;
    const json properties = schema.value("properties", json::object());
    for (const auto& [key, sub] : properties.items())
      if (value.contains(key)) expect_conforms(value[key], sub, where + "." + key);
  }
}

}  // namespace

TEST(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(cli({"--no-such-flag"}).code, 2);
  auto r = cli({"simulate", "--spec", "x", "--no-such-flag"});
  EXPECT_EQ(r.code, 2);
  EXPECT_THAT(r.err, HasSubstr("Usage"));
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"simulate"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, MutuallyExclusiveCohortSources) {
  auto dir = fresh_dir("exclusive");
  EXPECT_EQ(cli({"session-init", "--session", (dir / "s.json").string(), "--cohort", "c.csv", "--synthetic-n", "50",
                 "--tau1", "0.7", "--tau2", "0.7"})
                .code,
            2);
}

TEST(Cli, MissingFilesAreDomainErrors) {
  auto r = cli({"simulate", "--spec", "/nonexistent/spec.conf", "--out", "/tmp"});
  EXPECT_EQ(r.code, 1);
  EXPECT_THAT(r.err, HasSubstr("cannot open"));
  EXPECT_EQ(cli({"session-status", "--session", "/nonexistent/s.json"}).code, 1);
}

TEST(Cli, SimulateWritesDeterministicOutputs) {
  auto dir = fresh_dir("simulate");
  auto spec = small_spec(dir);
  ASSERT_EQ(cli({"simulate", "--spec", spec.string(), "--out", (dir / "a").string()}).code, 0);
  ASSERT_EQ(cli({"simulate", "--spec", spec.string(), "--out", (dir / "b").string()}).code, 0);
  for (auto name : {"summary.csv", "summary.json", "trajectories.csv", "trajectories.json"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / name)) << name;
    EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name)) << name;
  }
  EXPECT_EQ(json::parse(slurp(dir / "a" / "summary.json")).at("schema_version"), 1);
  ASSERT_EQ(cli({"simulate", "--spec", spec.string(), "--out", (dir / "c").string(), "--seed", "9"}).code, 0);
  EXPECT_NE(slurp(dir / "a" / "summary.csv"), slurp(dir / "c" / "summary.csv"));
}

TEST(Cli, SimulateDefaultsToEnvironmentOutDir) {
  auto dir = fresh_dir("envdir");
  auto spec = small_spec(dir);
  ::setenv(kOutDirEnv, (dir / "from_env").c_str(), 1);
  auto r = cli({"simulate", "--spec", spec.string()});
  ::unsetenv(kOutDirEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "from_env" / "summary.csv"));
}

TEST(Cli, SessionLifecycle) {
  auto dir = fresh_dir("session");
  const auto session = (dir / "study.json").string();
  auto init = cli({"session-init", "--session", session, "--synthetic-n", "800", "--strategy", "stratified1",
                   "--tau1", "0.7", "--tau2", "0.7", "--batch-size", "40"});
  ASSERT_EQ(init.code, 0) << init.err;
  EXPECT_EQ(cli({"session-init", "--session", session, "--synthetic-n", "800", "--tau1", "0.7", "--tau2", "0.7"}).code,
            1);

  const auto alloc_csv = (dir / "alloc.csv").string();
  auto alloc = cli({"session-alloc", "--session", session, "--out", alloc_csv});
  ASSERT_EQ(alloc.code, 0) << alloc.err;
  EXPECT_EQ(json::parse(alloc.out).at("patients").size(), 40u);

  std::ifstream in(alloc_csv);
  std::string line;
  std::getline(in, line);
  ASSERT_EQ(line, "patient_id,stratum");
  std::vector<std::string> ids;
  while (std::getline(in, line)) ids.push_back(line.substr(0, line.find(',')));
  ASSERT_EQ(ids.size(), 40u);

  const auto bad = dir / "bad.csv";
  {
    std::ofstream f(bad);
    f << "patient_id,label\n";
    for (std::size_t i = 1; i < ids.size(); ++i) f << ids[i] << ",1\n";
    f << "P999999,1\n";
  }
  auto rejected = cli({"session-record", "--session", session, "--labels", bad.string()});
  EXPECT_EQ(rejected.code, 1);
  EXPECT_THAT(rejected.err, HasSubstr("P999999"));

  const auto good = dir / "good.csv";
  {
    std::ofstream f(good);
    f << "patient_id,label\n";
    for (std::size_t i = 0; i < ids.size(); ++i) f << ids[i] << ',' << (i % 4 ? 1 : 0) << '\n';
  }
  auto recorded = cli({"session-record", "--session", session, "--labels", good.string()});
  ASSERT_EQ(recorded.code, 0) << recorded.err;
  EXPECT_EQ(json::parse(recorded.out).at("wave"), 1);

  auto status = cli({"session-status", "--session", session});
  ASSERT_EQ(status.code, 0);
  const auto schema = json::parse(slurp(fs::path(CHARTWAVE_SOURCE_DIR) / "schemas" / "session-status.schema.json"));
  expect_conforms(json::parse(status.out), schema);
  EXPECT_EQ(json::parse(status.out).at("latest").at("reviewed"), 40);

  auto predict = cli({"session-predict", "--session", session, "--replications", "20"});
  ASSERT_EQ(predict.code, 0) << predict.err;
  auto p = json::parse(predict.out).at("prediction");
  EXPECT_LE(p.at("band")[0].get<double>(), p.at("remaining_batches").get<double>());

  auto report = cli({"report", "--session", session, "--format", "csv"});
  ASSERT_EQ(report.code, 0);
  EXPECT_THAT(report.out, HasSubstr("wave,reviewed,positives,estimate,lower,upper,width\n1,40,30,"));
  EXPECT_EQ(cli({"report", "--session", session, "--format", "xml"}).code, 2);
}

TEST(Cli, FreshSessionStatusConformsToSchema) {
  auto dir = fresh_dir("fresh");
  const auto session = (dir / "s.json").string();
  ASSERT_EQ(cli({"session-init", "--session", session, "--synthetic-n", "100", "--width-limit", "0.1", "--mode",
                 "width"})
                .code,
            0);
  const auto schema = json::parse(slurp(fs::path(CHARTWAVE_SOURCE_DIR) / "schemas" / "session-status.schema.json"));
  expect_conforms(json::parse(cli({"session-status", "--session", session}).out), schema);
}

TEST(Cli, InitFromCohortCsv) {
  auto dir = fresh_dir("cohortcsv");
  const auto csv = dir / "cohort.csv";
  {
    std::ofstream f(csv);
    f << "patient_id,covariate,stratum,reviewed,label\n";
    for (int i = 0; i < 60; ++i) f << "c" << i << ',' << (i % 2 ? 0.3 : 0.1) << ',' << (i % 2) << ",0,\n";
  }
  auto r = cli({"session-init", "--session", (dir / "s.json").string(), "--cohort", csv.string(), "--strata",
                "0,0.2,0.5", "--tau1", "0.7", "--tau2", "0.7", "--batch-size", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto a = json::parse(cli({"session-alloc", "--session", (dir / "s.json").string()}).out);
  EXPECT_EQ(a.at("patients").size(), 10u);
}
