#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "cvecchia/experiments.hpp"

namespace cvecchia {
namespace {

Json kl_config() {
  return Json::parse(R"({
    "experiment": "kl-sweep", "id": "t", "seed": 5, "replicates": 2,
    "scenario": {"name": "random-2d", "n": 40},
    "model": {"family": "anisotropic", "params": {"a": 4.0}},
    "strategies": ["C-MM+C-NN", "E-MM+E-NN", "exact"],
    "m": [1, 5, 39]
  })");
}

std::vector<const ExperimentRecord*> rows(const ExperimentResult& r, const std::string& strategy, const std::string& metric) {
  std::vector<const ExperimentRecord*> out;
  for (const auto& rec : r.records) {
    if (rec.strategy == strategy && rec.metric == metric) out.push_back(&rec);
  }
  return out;
}

std::string without_wall_time(std::vector<ExperimentRecord> recs) {
  for (auto& r : recs) r.wall_time = 0.0;
  std::ostringstream os;
  write_records(os, recs);
  return os.str();
}

TEST(Config, SmokeSectionIsMergedAndDropped) {
  Json c = kl_config();
  c["smoke"] = Json::parse(R"({"replicates": 1, "scenario": {"n": 10}})");
  const Json full = resolve_config(c, false), smoke = resolve_config(c, true);
  EXPECT_FALSE(full.contains("smoke"));
  EXPECT_EQ(full["replicates"], 2);
  EXPECT_EQ(smoke["replicates"], 1);
  EXPECT_EQ(smoke["scenario"]["n"], 10);
  EXPECT_EQ(smoke["scenario"]["name"], "random-2d");
}

TEST(Config, ValidationErrors) {
  EXPECT_NO_THROW(validate_config(kl_config()));
  Json c = kl_config();
  c["experiment"] = "bake";
  EXPECT_THROW(validate_config(c), UnknownIdentifier);
  c = kl_config();
  c["strategies"] = {"C-MM+Z-NN"};
  EXPECT_THROW(validate_config(c), UnknownIdentifier);
  c = kl_config();
  c["model"]["family"] = "nope";
  EXPECT_THROW(validate_config(c), UnknownIdentifier);
  c = kl_config();
  c["scenario"]["name"] = "nowhere";
  EXPECT_THROW(validate_config(c), UnknownIdentifier);
  c = kl_config();
  c["m"] = {-1};
  EXPECT_THROW(validate_config(c), InvalidParameter);
  c = kl_config();
  c["replicates"] = 0;
  EXPECT_THROW(validate_config(c), InvalidParameter);
  c = kl_config();
  c["experiment"] = "estimate";
  EXPECT_THROW(validate_config(c), InvalidParameter);  // no estimate section
}

TEST(KlSweep, RowCountsAndFullConditioning) {
  const ExperimentResult r = run_experiment(kl_config());
  // 2 replicates x (2 strategies x 3 m + exact).
  EXPECT_EQ(r.records.size(), 14u);
  EXPECT_EQ(r.failed_cells, 0u);
  for (const auto* rec : rows(r, "C-MM+C-NN", "kl")) {
    ASSERT_TRUE(rec->value.has_value());
    if (rec->m == "39") EXPECT_LT(std::fabs(*rec->value), 1e-8);
  }
  for (const auto* rec : rows(r, "exact", "kl")) {
    EXPECT_EQ(rec->m, "n");
    EXPECT_LT(std::fabs(*rec->value), 1e-8);
  }
  ASSERT_EQ(r.seed_log.size(), 3u);
  EXPECT_EQ(r.seed_log[1].second, replicate_seed(5, 0));
  std::set<std::string> seeds;
  for (const auto& rec : r.records) seeds.insert(rec.seed);
  EXPECT_EQ(seeds, (std::set<std::string>{std::to_string(replicate_seed(5, 0)), std::to_string(replicate_seed(5, 1))}));
}

TEST(KlSweep, RerunsAreIdentical) {
  EXPECT_EQ(without_wall_time(run_experiment(kl_config()).records), without_wall_time(run_experiment(kl_config()).records));
  Json other = kl_config();
  other["seed"] = 6;
  EXPECT_NE(without_wall_time(run_experiment(kl_config()).records), without_wall_time(run_experiment(other).records));
}

TEST(KlSweep, ParameterSweepLabelsScenario) {
  Json c = kl_config();
  c["replicates"] = 1;
  c["strategies"] = {"C-MM+C-NN"};
  c["m"] = {3};
  c["sweep"] = Json::parse(R"({"parameter": "a", "values": [2, 30]})");
  const ExperimentResult r = run_experiment(c);
  std::set<std::string> scenarios;
  for (const auto& rec : r.records) scenarios.insert(rec.scenario);
  EXPECT_EQ(scenarios, (std::set<std::string>{"random-2d[a=2]", "random-2d[a=30]"}));
}

TEST(KlSweep, FailingCellsAreIsolated) {
  const Json c = Json::parse(R"({
    "experiment": "kl-sweep", "seed": 1, "replicates": 1,
    "scenario": {"name": "tree", "depth": 5},
    "model": {"family": "tree"},
    "strategies": ["C-MM+C-NN", "E-MM+E-NN"], "m": [3]
  })");
  const ExperimentResult r = run_experiment(c);
  EXPECT_EQ(r.failed_cells, 1u);
  const auto good = rows(r, "C-MM+C-NN", "kl");
  const auto bad = rows(r, "E-MM+E-NN", "kl");
  ASSERT_EQ(good.size(), 1u);
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_TRUE(good[0]->value.has_value());
  EXPECT_FALSE(bad[0]->value.has_value());
  EXPECT_EQ(bad[0]->params.rfind("error=", 0), 0u);
  std::ostringstream os;
  write_records(os, r.records);
  EXPECT_NE(os.str().find(",failed,"), std::string::npos);
}

TEST(Estimate, ExactAndAggregateRows) {
  const Json c = Json::parse(R"({
    "experiment": "estimate", "seed": 3, "replicates": 2,
    "scenario": {"name": "station", "stations": 12, "times": 4},
    "model": {"family": "spacetime-exponential"},
    "estimate": {"free": ["sigma2", "range_space"], "max_iter": 60, "schedule": "doubling"},
    "strategies": ["exact", "C-MM+C-NN"], "m": [47]
  })");
  const ExperimentResult r = run_experiment(c);
  EXPECT_EQ(r.failed_cells, 0u);
  const auto kl_exact = rows(r, "exact", "kl");
  ASSERT_EQ(kl_exact.size(), 2u);
  for (const auto* rec : kl_exact) EXPECT_GE(*rec->value, 0.0);
  for (const auto* rec : rows(r, "exact", "converged")) EXPECT_EQ(*rec->value, 1.0);
  // Full conditioning reproduces the exact estimates.
  const auto rmsd = rows(r, "C-MM+C-NN", "rmsd:range_space");
  ASSERT_EQ(rmsd.size(), 1u);
  EXPECT_EQ(rmsd[0]->seed, "all");
  EXPECT_LT(*rmsd[0]->value, 1e-4);
}

TEST(Predict, FullConditioningMatchesExact) {
  const Json c = Json::parse(R"({
    "experiment": "predict", "seed": 4, "replicates": 1,
    "scenario": {"name": "random-spacetime", "n": 60},
    "model": {"family": "spacetime-exponential"},
    "split": {"protocol": "holdout-random", "test": 10},
    "strategies": ["exact", "C-MM+C-NN"], "m": [60]
  })");
  const ExperimentResult r = run_experiment(c);
  for (const char* metric : {"logscore", "marginal_logscore", "rmspe"}) {
    const auto e = rows(r, "exact", metric), v = rows(r, "C-MM+C-NN", metric);
    ASSERT_EQ(e.size(), 1u);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_NEAR(*v[0]->value, *e[0]->value, 1e-6) << metric;
  }
}

TEST(Predict, NoisyObservationsUseLatentPrediction) {
  const Json c = Json::parse(R"({
    "experiment": "predict", "seed": 4, "replicates": 1,
    "scenario": {"name": "random-spacetime", "n": 60},
    "model": {"family": "spacetime-exponential"},
    "noise": {"variance": 0.3},
    "split": {"test": 10},
    "strategies": ["exact", "C-MM+C-NN"], "m": [60]
  })");
  const ExperimentResult r = run_experiment(c);
  EXPECT_NEAR(*rows(r, "C-MM+C-NN", "rmspe")[0]->value, *rows(r, "exact", "rmspe")[0]->value, 1e-6);
}

TEST(Posterior, RowsPerAxisPointAndDeviation) {
  const Json c = Json::parse(R"({
    "experiment": "posterior", "seed": 2, "replicates": 1,
    "scenario": {"name": "random-spacetime", "n": 50},
    "model": {"family": "spacetime-exponential"},
    "noise": {"variance": 0.4, "paths": ["ic"]},
    "posterior": {"axes": [{"name": "range_space", "points": 5}, {"name": "sigma2", "median": 1.0, "points": 4}]},
    "strategies": ["C-MM+C-NN"], "m": [49]
  })");
  const ExperimentResult r = run_experiment(c);
  EXPECT_EQ(r.failed_cells, 0u);
  EXPECT_EQ(rows(r, "exact", "density:range_space:004").size(), 1u);
  EXPECT_EQ(rows(r, "exact", "density:sigma2:003").size(), 1u);
  const auto dev = rows(r, "C-MM+C-NN/ic", "max_dev");
  ASSERT_EQ(dev.size(), 1u);
  EXPECT_LT(*dev[0]->value, 1e-6);
  // 5 + 4 density rows per cell, plus joint and marginal deviations for the approximation.
  EXPECT_EQ(r.records.size(), 9u + 11u);
}

TEST(FitPredict, SyntheticExternalData) {
  const Json c = Json::parse(R"({
    "experiment": "fit-predict-external", "seed": 1, "replicates": 1,
    "data": {"synthetic": {"grid": 6, "times": 3, "components": 2, "seed": 3, "params": {"beta0": 2.0, "beta1": -1.0}}},
    "model": {"family": "matern-ard", "nugget": 0.01},
    "split": {"protocol": "spacetime-cube", "per_slice": 1, "space_radius": 1, "time_radius": 0},
    "estimate": {"free": ["sigma2", "range_x1"], "max_iter": 10, "schedule": "never"},
    "strategies": ["C-MM+C-NN"], "m": [5, 15]
  })");
  const ExperimentResult r = run_experiment(c);
  EXPECT_EQ(r.failed_cells, 0u);
  for (const auto* rec : rows(r, "C-MM+C-NN", "rmspe")) {
    ASSERT_TRUE(rec->value.has_value());
    EXPECT_TRUE(std::isfinite(*rec->value));
    EXPECT_EQ(rec->scenario, "synthetic");
  }
  EXPECT_EQ(rows(r, "C-MM+C-NN", "est:range_x1").size(), 2u);
}

TEST(FitPredict, SyntheticCsvLayout) {
  std::stringstream ss;
  write_synthetic_external(ss, Json::parse(R"({"grid": 3, "times": 2, "components": 2})"));
  const CsvTable t = parse_csv(ss);
  EXPECT_EQ(t.header, (std::vector<std::string>{"x1", "x2", "t", "component", "value"}));
  EXPECT_EQ(t.rows.size(), 36u);
  EXPECT_EQ(t.rows.front()[3], "0");
  EXPECT_EQ(t.rows.back()[3], "1");
  EXPECT_THROW(write_synthetic_external(ss, Json::parse(R"({"grid": 0})")), InvalidShape);
}

TEST(Manifest, EchoesConfigAndSeeds) {
  const Json c = kl_config();
  const ExperimentResult r = run_experiment(c);
  const Json m = make_manifest(c, r);
  EXPECT_EQ(m["version"], kLibraryVersion);
  EXPECT_EQ(m["config"], c);
  EXPECT_EQ(m["records"], r.records.size());
  EXPECT_EQ(m["failed_cells"], 0);
  EXPECT_EQ(m["seeds"][0]["label"], "base");
  EXPECT_EQ(m["seeds"][0]["seed"], 5);
  EXPECT_EQ(m["columns"].size(), record_columns().size());
}

TEST(Seeds, ReplicateSeedsAreChildStreams) {
  EXPECT_EQ(replicate_seed(9, 3), Rng(9).child(3).seed());
  EXPECT_NE(replicate_seed(9, 3), replicate_seed(9, 4));
}

}  // namespace
}  // namespace cvecchia
