#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "chartwave/errors.hpp"
#include "chartwave/simharness.hpp"

using namespace chartwave;

namespace {

ExperimentSpec base(double ppv, std::size_t reps) {
  ExperimentSpec spec;
  spec.scenario.ppv = ppv;
  spec.rule.tau1 = 0.75;
  spec.rule.tau2 = 0.75;
  spec.repetitions = reps;
  return spec;
}

}  // namespace

TEST(Harness, LowPpvStopsForFutilityAtOnce) {
  auto rows = run_replications(base(0.4, 10));
  ASSERT_EQ(rows.size(), 8u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.prop_stopped, 1.0);
    EXPECT_EQ(r.prop_futility, 1.0);
    EXPECT_EQ(r.mean_batches, 1.0);
  }
}

TEST(Harness, SingleReplicationDeterministic) {
  auto spec = base(0.8, 1);
  EXPECT_EQ(run_replications(spec), run_replications(spec));
}

TEST(Harness, ThreadCountDoesNotChangeResults) {
  auto spec = base(0.8, 12);
  spec.strategies = {Strategy::neyman};
  auto one = run_replications(spec);
  spec.threads = 3;
  EXPECT_EQ(run_replications(spec), one);
}

TEST(Harness, ProportionsPartitionStoppedRuns) {
  auto spec = base(0.77, 20);
  spec.rule.tau2 = 0.8;
  spec.rule.width_limit = 0.12;
  spec.rule.mode = StopMode::both;
  for (const auto& r : run_replications(spec)) {
    EXPECT_NEAR(r.prop_futility + r.prop_above + r.prop_width, r.prop_stopped, 1e-12);
    EXPECT_LE(r.ci_low, r.mean_batches);
    EXPECT_LE(r.mean_batches, r.ci_high);
    for (double p : {r.prop_stopped, r.prop_futility, r.prop_above, r.prop_width}) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
  }
}

TEST(Harness, MoreRepetitionsNarrowTheInterval) {
  auto spec = base(0.8, 100);
  spec.strategies = {Strategy::random};
  spec.methods = {IntervalMethod::lai};
  const auto small = run_replications(spec).front();
  spec.repetitions = 400;
  const auto large = run_replications(spec).front();
  EXPECT_LT(large.ci_high - large.ci_low, small.ci_high - small.ci_low);
}

TEST(Harness, ReplicationsAreIsolated) {
  auto spec = base(0.8, 5);
  const auto cohort = gen_cohort(spec.scenario, spec.strata);
  const auto direct = run_replication(spec, cohort, Strategy::neyman, IntervalMethod::bayes, 3);
  for (std::size_t r = 0; r < 5; ++r) run_replication(spec, cohort, Strategy::neyman, IntervalMethod::bayes, r);
  const auto again = run_replication(spec, cohort, Strategy::neyman, IntervalMethod::bayes, 3);
  EXPECT_EQ(direct.status, again.status);
  EXPECT_EQ(direct.waves, again.waves);
  EXPECT_NE(replication_seed(1, Strategy::neyman, IntervalMethod::bayes, 3),
            replication_seed(1, Strategy::neyman, IntervalMethod::lai, 3));
}

TEST(Harness, SummarizeFutilityUsesAllRuns) {
  std::vector<ReplicationOutcome> outcomes{{StopStatus::stop_futility, 2},
                                           {StopStatus::stop_above, 4},
                                           {StopStatus::exhausted, 70},
                                           {StopStatus::stop_above, 6}};
  auto r = summarize(Strategy::random, IntervalMethod::lai, outcomes);
  EXPECT_EQ(r.runs, 4u);
  EXPECT_EQ(r.stopped, 3u);
  EXPECT_DOUBLE_EQ(r.prop_futility, 0.25);
  EXPECT_DOUBLE_EQ(r.prop_stopped, 0.75);
  EXPECT_DOUBLE_EQ(r.mean_batches, 4.0);
  const double se = 2.0 / std::sqrt(3.0);
  EXPECT_NEAR(r.ci_low, 4.0 - 1.96 * se, 1e-12);
  EXPECT_NEAR(r.ci_high, 4.0 + 1.96 * se, 1e-12);
}

TEST(Trajectory, LengthAndOrdering) {
  auto spec = base(0.8, 1);
  auto t = emit_trajectory(spec, Strategy::random, IntervalMethod::lai, 2);
  ASSERT_TRUE(is_terminal(t.final_status.status));
  EXPECT_EQ(t.bands.size(), t.final_status.wave);
  for (const auto& b : t.bands) {
    EXPECT_LE(b.interval.lower, b.interval.point);
    EXPECT_LE(b.interval.point, b.interval.upper);
  }
}

TEST(Trajectory, WidthRuleEndsNarrow) {
  ExperimentSpec spec;
  spec.scenario.ppv = 0.8;
  spec.scenario.linkage_sd = 0.1;
  spec.rule.width_limit = 0.05;
  spec.rule.mode = StopMode::width;
  auto t = emit_trajectory(spec, Strategy::neyman, IntervalMethod::bayes);
  ASSERT_EQ(t.final_status.status, StopStatus::stop_width);
  EXPECT_LT(t.bands.back().interval.width(), 0.05);
}

TEST(Output, SummaryCsvColumnOrder) {
  std::ostringstream out;
  SummaryRow r;
  r.mean_batches = std::nan("");
  write_summary_csv(out, {r});
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header,
            "strategy,method,runs,stopped,prop_stopped,prop_futility,prop_above,prop_width,mean_batches,ci_low,ci_high");
  EXPECT_NE(row.find("NA"), std::string::npos);
}

TEST(Output, JsonIsVersioned) {
  auto spec = base(0.4, 2);
  auto j = summary_json(spec, run_replications(spec));
  EXPECT_EQ(j.at("schema_version"), kExperimentSchemaVersion);
  EXPECT_EQ(j.at("rows").size(), 8u);
  auto tj = trajectory_json({emit_trajectory(spec, Strategy::random, IntervalMethod::bayes)});
  EXPECT_EQ(tj.at("schema_version"), kExperimentSchemaVersion);
}

TEST(ExperimentFile, ParsesAndRejectsUnknownKeys) {
  auto spec = experiment_from_config(FlatConfig::parse(
      "schema_version = 1\nname = t\nppv = 0.4\ntau1 = 0.75\ntau2 = 0.75\nstrategies = random\n"
      "methods = lai, bayes\nrepetitions = 3\nlinkage_sd = 0.05\nskew = left\n"));
  EXPECT_EQ(spec.name, "t");
  EXPECT_EQ(spec.scenario.ppv, 0.4);
  EXPECT_EQ(spec.scenario.skew, Skew::left);
  EXPECT_EQ(spec.strategies.size(), 1u);
  EXPECT_EQ(spec.methods.size(), 2u);
  EXPECT_EQ(spec.repetitions, 3u);
  EXPECT_THROW(experiment_from_config(FlatConfig::parse("schema_version = 1\nbogus = 1\n")), Error);
  EXPECT_THROW(experiment_from_config(FlatConfig::parse("schema_version = 2\ntau1 = 0.7\ntau2=0.7\n")), Error);
  EXPECT_THROW(experiment_from_config(FlatConfig::parse("schema_version = 1\ntau1 = 0.7\ntau2=0.7\nrepetitions = 0\n")),
               Error);
}
