#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cvecchia/scenarios.hpp"
#include "test_support.hpp"

namespace cvecchia {
namespace {

ScenarioSpec named(const std::string& name) {
  ScenarioSpec s;
  s.name = name;
  return s;
}

TEST(Scenarios, GriddedCellCentersAndTimes) {
  const InputSet in = generate_inputs(named("gridded"), 1);
  ASSERT_EQ(in.size(), 900u);
  std::set<double> xs, ts;
  for (std::size_t i = 0; i < in.size(); ++i) {
    xs.insert(in.coord(i, 0));
    ts.insert(in.time(i));
  }
  ASSERT_EQ(xs.size(), 10u);
  std::size_t k = 0;
  for (double x : xs) EXPECT_NEAR(x, (static_cast<double>(k++) + 0.5) / 10.0, 1e-15);
  ASSERT_EQ(ts.size(), 9u);
  k = 1;
  for (double t : ts) EXPECT_NEAR(t, static_cast<double>(k++) / 9.0, 1e-15);
  // Time-major: the first 100 items share the first time.
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(in.time(i), 1.0 / 9.0);
}

TEST(Scenarios, SizesMatchSpecification) {
  for (const auto& name : scenario_names()) {
    ScenarioSpec s = named(name);
    s.depth = 6;
    EXPECT_EQ(generate_inputs(s, 3).size(), s.expected_size()) << name;
  }
  EXPECT_EQ(generate_inputs(named("tree"), 0).size(), 4096u);
  EXPECT_EQ(named("station").expected_size(), 900u);
  EXPECT_EQ(named("satellite").expected_size(), 900u);
  EXPECT_EQ(named("multivariate-aligned").expected_size(), 800u);
}

TEST(Scenarios, DeterministicInSeed) {
  for (const char* name : {"random-2d", "random-spacetime", "station", "multivariate-misaligned"}) {
    const InputSet a = generate_inputs(named(name), 5), b = generate_inputs(named(name), 5), c = generate_inputs(named(name), 6);
    EXPECT_EQ(a.coords(), b.coords()) << name;
    EXPECT_NE(a.coords(), c.coords()) << name;
  }
}

TEST(Scenarios, AlignedComponentsShareSites) {
  const InputSet al = generate_inputs(named("multivariate-aligned"), 2);
  const InputSet mis = generate_inputs(named("multivariate-misaligned"), 2);
  EXPECT_EQ(al.coords().topRows(400), al.coords().bottomRows(400));
  EXPECT_NE(mis.coords().topRows(400), mis.coords().bottomRows(400));
  EXPECT_EQ(al.component(0), 0);
  EXPECT_EQ(al.component(799), 1);
}

TEST(Scenarios, SatelliteCoversEveryCell) {
  const InputSet in = generate_inputs(named("satellite"), 0);
  std::set<std::pair<int, int>> cells;
  for (std::size_t i = 0; i < in.size(); ++i) {
    cells.emplace(static_cast<int>(in.coord(i, 0) * 10), static_cast<int>(in.coord(i, 1) * 10));
    EXPECT_GE(in.coord(i, 1), 0.0);
    EXPECT_LT(in.coord(i, 1), 1.0);
  }
  EXPECT_EQ(cells.size(), 100u);
  // Time increases along the traversals.
  for (std::size_t i = 1; i < in.size(); ++i) EXPECT_GT(in.time(i), in.time(i - 1));
  EXPECT_NEAR(in.time(in.size() - 1), 1.0, 1e-15);
}

TEST(Scenarios, InvalidShapesAndNames) {
  ScenarioSpec s = named("gridded");
  s.grid = 0;
  EXPECT_THROW(generate_inputs(s, 0), InvalidShape);
  EXPECT_THROW(generate_inputs(named("moon"), 0), UnknownIdentifier);
}

TEST(SimulateExact, MomentsMatchSmallCovariance) {
  DenseMatrix k(3, 3);
  k << 2.0, 0.6, -0.3, 0.6, 1.0, 0.2, -0.3, 0.2, 0.5;
  const ModelPtr model = matrix_model(k);
  Rng rng(8);
  DenseMatrix acc = DenseMatrix::Zero(3, 3);
  const int reps = 5000;
  for (int r = 0; r < reps; ++r) {
    const Vector y = simulate_exact(*model, rng);
    acc += y * y.transpose();
  }
  acc /= reps;
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(acc(i, i), k(i, i), 0.05 * k(i, i));
  EXPECT_NEAR(acc(0, 1), 0.6, 0.05 * std::sqrt(2.0));
}

TEST(SimulateExact, SampleCovarianceWithinStandardErrors) {
  const auto c = testing::catalog(10, 4)[4];
  const DenseMatrix k = eval_matrix(*c.model);
  Rng rng(9);
  const int reps = 2000;
  DenseMatrix acc = DenseMatrix::Zero(10, 10);
  for (int r = 0; r < reps; ++r) {
    const Vector y = simulate_exact(*c.model, rng);
    acc += y * y.transpose();
  }
  acc /= reps;
  for (Eigen::Index i = 0; i < 10; ++i)
    for (Eigen::Index j = 0; j < 10; ++j) {
      const double se = std::sqrt((k(i, j) * k(i, j) + k(i, i) * k(j, j)) / reps);
      EXPECT_LT(std::fabs(acc(i, j) - k(i, j)), 3.0 * se + 1e-12) << i << "," << j;
    }
}

TEST(SimulateExact, VanishingVarianceGivesVanishingDraws) {
  auto in = testing::random_spacetime(50, 2);
  const auto& fam = model_family("spacetime-exponential");
  ParamVector p = fam.defaults;
  p.set("sigma2", 1e-12);
  EXPECT_LT(simulate_exact(*fam.bind(in, p), 3).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Splits, HoldoutPartitions) {
  Rng rng(3);
  const Split s = holdout_random(900, 100, rng);
  EXPECT_EQ(s.test.size(), 100u);
  EXPECT_EQ(s.train.size(), 800u);
  std::vector<char> seen(900, 0);
  for (auto i : s.test) ++seen[i];
  for (auto i : s.train) ++seen[i];
  for (char c : seen) EXPECT_EQ(c, 1);
  EXPECT_TRUE(std::is_sorted(s.test.begin(), s.test.end()));
  EXPECT_THROW(holdout_random(10, 0, rng), EmptyTestSet);
  EXPECT_THROW(holdout_random(10, 11, rng), InvalidShape);
}

TEST(Splits, SpaceTimeCubeNeighborhoods) {
  ScenarioSpec spec = named("gridded");
  spec.grid = 12;
  spec.times = 5;
  const InputSet in = generate_inputs(spec, 1);
  Rng rng(4);
  const Split s = spacetime_cube_split(in, 1, rng, 1, 0);
  EXPECT_EQ(s.test.size() + s.train.size(), in.size());
  // One pick per slice with radius 1 in space and 0 in time: at most 9 cells per slice.
  std::map<double, std::size_t> per_slice;
  for (auto i : s.test) ++per_slice[in.time(i)];
  for (const auto& [t, c] : per_slice) {
    EXPECT_GE(c, 4u);
    EXPECT_LE(c, 9u);
  }
  // Wider neighborhoods and more picks only add test items.
  Rng rng2(4);
  const Split big = spacetime_cube_split(in, 3, rng2, 2, 1);
  EXPECT_GT(big.test.size(), s.test.size());
}

TEST(Splits, SpaceTimeCubeRequiresSpaceTime) {
  Rng rng(1);
  EXPECT_THROW(spacetime_cube_split(generate_inputs(named("random-2d"), 1), 2, rng), InvalidShape);
  ScenarioSpec spec = named("gridded");
  EXPECT_THROW(spacetime_cube_split(generate_inputs(spec, 1), 0, rng), EmptyTestSet);
}

TEST(RngStreams, ChildrenAreStableAndDistinct) {
  Rng root(42);
  const std::uint64_t c1 = root.child(1).seed();
  root.uniform();
  root.normal();
  EXPECT_EQ(root.child(1).seed(), c1);
  EXPECT_NE(root.child(0).seed(), root.child(1).seed());
  EXPECT_EQ(stream(Rng(42), Stream::Data).seed(), c1);
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.uniform(), b.uniform());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(a.index(7), 7u);
  }
}

TEST(RngStreams, NormalMoments) {
  Rng rng(5);
  const Vector z = rng.normal_vector(20000);
  EXPECT_NEAR(z.mean(), 0.0, 0.03);
  EXPECT_NEAR(z.squaredNorm() / 20000.0, 1.0, 0.04);
}

}  // namespace
}  // namespace cvecchia
