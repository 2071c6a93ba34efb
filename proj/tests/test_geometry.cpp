#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cvecchia/geometry.hpp"
#include "cvecchia/strategy.hpp"
#include "test_support.hpp"

namespace cvecchia {
namespace {

MetricPtr line_metric(std::initializer_list<double> xs) {
  DenseMatrix p(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) p(i++, 0) = x;
  return euclidean_metric(p);
}

// Brute-force maximin with the smallest-index tie rule.
std::vector<std::size_t> brute_maximin(const Metric& metric) {
  const std::size_t n = metric.size();
  std::vector<std::size_t> order{0};
  std::vector<char> used(n, 0);
  used[0] = 1;
  while (order.size() < n) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (used[j]) continue;
      double d = std::numeric_limits<double>::infinity();
      for (auto i : order) d = std::min(d, metric.distance(i, j));
      if (d > best_d) {
        best_d = d;
        best = j;
      }
    }
    used[best] = 1;
    order.push_back(best);
  }
  return order;
}

std::vector<std::size_t> brute_nearest(const Metric& metric, std::size_t target, std::vector<std::size_t> cand,
                                       std::size_t m) {
  std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    const double da = metric.distance(target, a), db = metric.distance(target, b);
    return da != db ? da < db : a < b;
  });
  cand.resize(std::min(m, cand.size()));
  return cand;
}

TEST(Metrics, DistanceExamples) {
  DenseMatrix p(2, 2);
  p << 0, 0, 3, 4;
  EXPECT_DOUBLE_EQ(euclidean_metric(p)->distance(0, 1), 5.0);

  DenseMatrix k(2, 2);
  k << 4, 1, 1, 1;  // rho = 0.5
  const MetricPtr c = correlation_metric(matrix_model(k));
  EXPECT_NEAR(c->distance(0, 1), std::sqrt(0.5), 1e-15);
  EXPECT_EQ(c->distance(1, 1), 0.0);
  EXPECT_NEAR(c->rank_key(0, 1), std::log(2.0), 1e-15);

  DenseMatrix s(2, 2);
  s << 0, 0, 0.3, 0.4;
  const InputSet st = InputSet::spatiotemporal(s, {0.1, 0.3});
  EXPECT_NEAR(time_space_metric(st)->distance(0, 1), 0.2 * 1e3 + 0.5, 1e-9);

  const MetricPtr r = random_metric(10, 4);
  EXPECT_EQ(r->distance(3, 7), r->distance(7, 3));
  EXPECT_GE(r->distance(3, 7), 0.0);
  EXPECT_LT(r->distance(3, 7), 1.0);
  EXPECT_NE(r->distance(3, 7), random_metric(10, 5)->distance(3, 7));
}

TEST(Metrics, NegativeCorrelationUsesMagnitude) {
  DenseMatrix k(2, 2);
  k << 1, -0.8, -0.8, 1;
  EXPECT_NEAR(correlation_metric(matrix_model(k))->distance(0, 1), std::sqrt(0.2), 1e-15);
}

TEST(Metrics, CorrelationDistanceSatisfiesTriangleInequality) {
  for (const auto& c : testing::catalog(60, 3)) {
    const MetricPtr d = correlation_metric(c.model);
    Rng rng(17);
    const std::size_t n = d->size();
    for (int t = 0; t < 1000; ++t) {
      const std::size_t i = rng.index(n), j = rng.index(n), k = rng.index(n);
      EXPECT_LE(d->distance(i, k), d->distance(i, j) + d->distance(j, k) + 1e-12) << c.name;
    }
  }
}

TEST(Maximin, SmallExample) {
  EXPECT_EQ(maximin_order(*line_metric({0.0, 1.0, 10.0})), (std::vector<std::size_t>{0, 2, 1}));
}

TEST(Maximin, TiesGoToSmallestIndex) {
  // Items 1 and 2 are both at distance 1 from item 0.
  EXPECT_EQ(maximin_order(*line_metric({0.0, -1.0, 1.0})), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(maximin_order(*line_metric({0.0, 1.0, -1.0, 5.0, 5.0})), (std::vector<std::size_t>{0, 3, 1, 2, 4}));
}

TEST(Maximin, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto in = testing::random_spatial(12, seed);
    const MetricPtr m = euclidean_metric(*in);
    EXPECT_EQ(maximin_order(*m), brute_maximin(*m)) << seed;
  }
}

TEST(Maximin, IsPermutationWithRequestedStart) {
  auto in = testing::random_spacetime(80, 2);
  auto order = maximin_order(*euclidean_metric(*in), 13);
  EXPECT_EQ(order.front(), 13u);
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
}

TEST(NearestNeighbors, EmptyAndFullConditioning) {
  auto in = testing::random_spatial(30, 1);
  const MetricPtr m = euclidean_metric(*in);
  const auto order = maximin_order(*m);
  const OrderedApprox none = nearest_neighbors(*m, order, 0);
  for (const auto& c : none.neighbors) EXPECT_TRUE(c.empty());
  const OrderedApprox full = nearest_neighbors(*m, order, 29);
  for (std::size_t i = 0; i < 30; ++i) {
    std::vector<std::size_t> all(i);
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(full.neighbors[i], all);
  }
  EXPECT_NO_THROW(full.validate());
}

TEST(NearestNeighbors, MatchesBruteForce) {
  auto in = testing::random_spacetime(60, 5);
  const MetricPtr m = euclidean_metric(*in);
  const auto order = maximin_order(*m);
  const OrderedApprox nn = nearest_neighbors(*m, order, 6);
  nn.validate();
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::vector<std::size_t> prev(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(i));
    auto expect = brute_nearest(*m, order[i], prev, 6);
    std::vector<std::size_t> got;
    for (auto pos : nn.neighbors[i]) got.push_back(order[pos]);
    std::sort(expect.begin(), expect.end());
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, expect) << i;
  }
}

TEST(NearestNeighbors, ChosenDominateExcluded) {
  for (const auto& c : testing::catalog(80, 9)) {
    const MetricPtr m = correlation_metric(c.model);
    const auto order = maximin_order(*m);
    const OrderedApprox nn = nearest_neighbors(*m, order, 5);
    for (std::size_t i = 6; i < order.size(); ++i) {
      double worst_in = 0.0;
      for (auto p : nn.neighbors[i]) worst_in = std::max(worst_in, m->rank_key(order[i], order[p]));
      for (std::size_t p = 0; p < i; ++p) {
        if (std::binary_search(nn.neighbors[i].begin(), nn.neighbors[i].end(), p)) continue;
        EXPECT_GE(m->rank_key(order[i], order[p]), worst_in) << c.name;
      }
    }
  }
}

TEST(NearestNeighbors, SelectNearestTieRule) {
  const MetricPtr m = line_metric({0.0, 1.0, -1.0, 2.0});
  const std::vector<std::size_t> cand{3, 2, 1};
  EXPECT_EQ(select_nearest(*m, 0, cand, 1), (std::vector<std::size_t>{1}));
  EXPECT_EQ(select_nearest(*m, 0, cand, 2), (std::vector<std::size_t>{1, 2}));
}

TEST(GroupedNeighbors, SeparateAndDividedQuotas) {
  auto in = testing::random_multivariate(90, 3, 4);
  const MetricPtr m = euclidean_metric(*in);
  const auto& labels = in->components();
  const auto order = maximin_order(*m);
  const OrderedApprox sep = grouped_neighbors(*m, order, 5, labels, GroupMode::Separate);
  const OrderedApprox div = grouped_neighbors(*m, order, 5, labels, GroupMode::Divided);
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::array<std::size_t, 3> avail{}, got{};
    for (std::size_t p = 0; p < i; ++p) ++avail[static_cast<std::size_t>(labels[order[p]])];
    for (auto p : sep.neighbors[i]) EXPECT_EQ(labels[order[p]], labels[order[i]]);
    EXPECT_EQ(sep.neighbors[i].size(), std::min<std::size_t>(5, avail[static_cast<std::size_t>(labels[order[i]])]));
    for (auto p : div.neighbors[i]) ++got[static_cast<std::size_t>(labels[order[p]])];
    // floor(5/3) = 1 per label, the remainder 2 to labels 0 and 1; no redistribution.
    EXPECT_EQ(got[0], std::min<std::size_t>(2, avail[0]));
    EXPECT_EQ(got[1], std::min<std::size_t>(2, avail[1]));
    EXPECT_EQ(got[2], std::min<std::size_t>(1, avail[2]));
  }
}

TEST(RestrictedOrder, MatchesBruteForce) {
  auto in = testing::random_spatial(40, 6);
  const MetricPtr m = euclidean_metric(*in);
  const std::size_t n_obs = 30, n_pred = 10;
  const auto got = restricted_order(*m, n_obs, n_pred);
  std::vector<std::size_t> taken(n_obs);
  std::iota(taken.begin(), taken.end(), 0);
  std::vector<char> used(n_pred, 0);
  for (std::size_t step = 0; step < n_pred; ++step) {
    std::size_t best = n_pred;
    double best_d = -1;
    for (std::size_t k = 0; k < n_pred; ++k) {
      if (used[k]) continue;
      double d = std::numeric_limits<double>::infinity();
      for (auto t : taken) d = std::min(d, m->distance(t, n_obs + k));
      if (d > best_d) {
        best_d = d;
        best = k;
      }
    }
    EXPECT_EQ(got[step], best) << step;
    used[best] = 1;
    taken.push_back(n_obs + best);
  }
}

TEST(JointNeighbors, MatchesBruteForce) {
  auto in = testing::random_spacetime(50, 8);
  const MetricPtr m = euclidean_metric(*in);
  const std::size_t n_obs = 40;
  const auto pred_order = restricted_order(*m, n_obs, 10);
  const JointNeighbors jn = joint_neighbors(*m, n_obs, pred_order, 7);
  std::vector<std::size_t> cand(n_obs);
  std::iota(cand.begin(), cand.end(), 0);
  for (std::size_t k = 0; k < pred_order.size(); ++k) {
    auto expect = brute_nearest(*m, n_obs + pred_order[k], cand, 7);
    std::vector<std::size_t> got = jn.observed[k];
    for (auto q : jn.unobserved[k]) {
      EXPECT_LT(q, k);
      got.push_back(n_obs + pred_order[q]);
    }
    std::sort(got.begin(), got.end());
    std::sort(expect.begin(), expect.end());
    EXPECT_EQ(got, expect) << k;
    cand.push_back(n_obs + pred_order[k]);
  }
}

// Correlation-based skeletons coincide with Euclidean skeletons on inputs
// transformed so that the correlation is a decreasing function of distance.
void expect_equivalent(ModelPtr model, DenseMatrix transformed, std::size_t m) {
  const StrategyContext ctx{std::make_shared<const InputSet>(InputSet::spatial(transformed)), model, 0};
  const OrderedApprox c = build_skeleton(parse_strategy("C-MM+C-NN"), ctx, m);
  const OrderedApprox e = build_skeleton(parse_strategy("E-MM+E-NN"), ctx, m);
  EXPECT_EQ(c.order, e.order);
  EXPECT_EQ(c.neighbors, e.neighbors);
}

TEST(Equivalence, AnisotropicMatchesScaledEuclidean) {
  for (double a : {2.0, 10.0}) {
    auto in = testing::random_spatial(150, 3);
    ParamVector p = model_family("anisotropic").defaults;
    p.set("a", a);
    DenseMatrix t = in->coords();
    t.col(0) *= a / 0.1;
    t.col(1) /= 0.1;
    expect_equivalent(model_family("anisotropic").bind(in, p), t, 10);
  }
}

TEST(Equivalence, SpaceTimeAndMultivariate) {
  auto st = testing::random_spacetime(150, 4);
  DenseMatrix t = st->spacetime_points();
  t.leftCols(2) /= 0.1;
  expect_equivalent(model_family("spacetime-exponential").bind(st, model_family("spacetime-exponential").defaults), t, 10);

  auto mv = testing::random_multivariate(150, 2, 5);
  DenseMatrix u(150, 3);
  u.leftCols(2) = mv->coords();
  for (std::size_t i = 0; i < 150; ++i) u(static_cast<Eigen::Index>(i), 2) = 0.4 * mv->component(i);
  expect_equivalent(model_family("multivariate-latent").bind(mv, model_family("multivariate-latent").defaults), u, 10);
}

TEST(Invariance, NoiseDoesNotChangeCorrelationSkeletonBeyondDiagonal) {
  // A constant nugget rescales every off-diagonal correlation by the same
  // factor, so rankings (hence orderings and conditioning sets) are unchanged.
  for (const auto& c : testing::catalog(100, 12)) {
    const StrategyContext clean{c.inputs, c.model, 0};
    const OrderedApprox base = build_skeleton(parse_strategy("C-MM+C-NN"), clean, 8);
    for (double d : {0.4, 10.0}) {
      const StrategyContext noisy{c.inputs, with_constant_noise(c.model, d), 0};
      EXPECT_EQ(build_skeleton(parse_strategy("C-MM+C-NN"), noisy, 8), base) << c.name << " d=" << d;
    }
  }
}

TEST(Invariance, VarianceScaleDoesNotChangeSkeleton) {
  for (const auto& c : testing::catalog(100, 13)) {
    const ModelFamily& fam = model_family(c.name);
    ParamVector p = fam.defaults;
    p.set("sigma2", 7.5);
    const StrategyContext a{c.inputs, c.model, 0}, b{c.inputs, fam.bind(c.inputs, p), 0};
    EXPECT_EQ(build_skeleton(parse_strategy("C-MM+C-NN"), a, 6), build_skeleton(parse_strategy("C-MM+C-NN"), b, 6))
        << c.name;
  }
}

}  // namespace
}  // namespace cvecchia
