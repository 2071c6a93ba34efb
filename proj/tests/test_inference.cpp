#include <gtest/gtest.h>

#include <cmath>

#include "cvecchia/inference.hpp"
#include "cvecchia/scenarios.hpp"
#include "test_support.hpp"

namespace cvecchia {
namespace {

const Strategy kCMM{"C-MM", "C-NN"};

struct ScoreCase {
  std::string family;
  InputsPtr inputs;
  std::vector<std::string> free;
};

std::vector<ScoreCase> score_cases() {
  return {
      {"spacetime-exponential", testing::random_spacetime(60, 1), {"sigma2", "range_space", "range_time"}},
      {"multivariate-latent", testing::random_multivariate(60, 2, 2), {"sigma2", "range", "delta"}},
      {"anisotropic", testing::random_spatial(60, 3), {"sigma2", "a"}},
      {"matern-ard", testing::random_multivariate(60, 2, 4, true), {"sigma2", "range_x1", "range_time", "range_latent"}},
      {"tree", std::make_shared<const InputSet>(InputSet::tree(6)), {"sigma2"}},
  };
}

TEST(Score, MatchesFiniteDifferenceOfLoglik) {
  int count = 0;
  for (const auto& c : score_cases()) {
    const auto& fam = model_family(c.family);
    const ModelFactory make = family_factory(fam, c.inputs);
    for (std::size_t m : {2, 5, 10, 63}) {
      const auto sk = build_skeleton(kCMM, {c.inputs, make(fam.defaults), 0}, m);
      const Vector y = gather(simulate_exact(*make(fam.defaults), 7 + m), sk.order);
      const ScoreResult s = score_and_fisher(sk, make, fam.defaults, c.free, y);
      for (std::size_t j = 0; j < c.free.size(); ++j) {
        const double h = 1e-4;
        ParamVector p = fam.defaults, q = fam.defaults;
        p.set_optimization_value(c.free[j], fam.defaults.optimization_value(c.free[j]) + h);
        q.set_optimization_value(c.free[j], fam.defaults.optimization_value(c.free[j]) - h);
        const double fd = (loglik(build_factor(sk, *make(p)), y) - loglik(build_factor(sk, *make(q)), y)) / (2 * h);
        const double g = s.gradient(static_cast<Eigen::Index>(j));
        EXPECT_NEAR(g, fd, 1e-4 * std::max(1.0, std::fabs(fd))) << c.family << " " << c.free[j] << " m=" << m;
      }
      EXPECT_NEAR(s.loglik, loglik(build_factor(sk, *make(fam.defaults)), y), 1e-8);
      ++count;
    }
  }
  EXPECT_EQ(count, 20);
}

TEST(Score, VarianceScoreClosedForm) {
  auto in = testing::random_spacetime(80, 5);
  const auto& fam = model_family("spacetime-exponential");
  const ModelFactory make = family_factory(fam, in);
  const Vector y = simulate_exact(*make(fam.defaults), 9);
  const DenseMatrix k = eval_matrix(*make(fam.defaults));
  const double q = y.dot(Eigen::LLT<DenseMatrix>(k).solve(y));
  const ScoreResult e = exact_score_and_fisher(make, fam.defaults, {"sigma2"}, y);
  EXPECT_NEAR(e.gradient(0), 0.5 * (-80.0 + q), 1e-6);
  EXPECT_NEAR(e.information(0, 0), 40.0, 1e-6);

  const auto sk = build_skeleton(kCMM, {in, make(fam.defaults), 0}, 6);
  const Vector yo = gather(y, sk.order);
  const SparseFactor u = build_factor(sk, *make(fam.defaults));
  const double qv = sparse_factor_apply(u, yo, true).squaredNorm();
  const ScoreResult v = score_and_fisher(sk, make, fam.defaults, {"sigma2"}, yo);
  EXPECT_NEAR(v.gradient(0), 0.5 * (-80.0 + qv), 1e-6);
  EXPECT_NEAR(v.information(0, 0), 40.0, 1e-6);
}

TEST(Information, SymmetricPositiveSemidefinite) {
  for (const auto& c : score_cases()) {
    const auto& fam = model_family(c.family);
    const ModelFactory make = family_factory(fam, c.inputs);
    const auto sk = build_skeleton(kCMM, {c.inputs, make(fam.defaults), 0}, 5);
    const Vector y = gather(simulate_exact(*make(fam.defaults), 3), sk.order);
    const ScoreResult s = score_and_fisher(sk, make, fam.defaults, c.free, y);
    EXPECT_LT((s.information - s.information.transpose()).norm(), 1e-12 * s.information.norm());
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(s.information);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * s.information.norm()) << c.family;
  }
}

TEST(Score, UnbiasedUnderTheModel) {
  auto in = testing::random_spacetime(40, 6);
  const auto& fam = model_family("spacetime-exponential");
  const ModelFactory make = family_factory(fam, in);
  const std::vector<std::string> free{"sigma2", "range_space"};
  const int reps = 400;
  Rng rng(10);
  Vector sum = Vector::Zero(2), sumsq = Vector::Zero(2);
  DenseMatrix info;
  for (int r = 0; r < reps; ++r) {
    const Vector y = simulate_exact(*make(fam.defaults), rng);
    const ScoreResult s = exact_score_and_fisher(make, fam.defaults, free, y);
    sum += s.gradient;
    sumsq += s.gradient.cwiseProduct(s.gradient);
    info = s.information;
  }
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double mean = sum(j) / reps;
    const double se = std::sqrt(info(j, j) / reps);
    EXPECT_LT(std::fabs(mean), 4.0 * se) << j;
    // Variance of the score equals the information.
    EXPECT_NEAR(sumsq(j) / reps, info(j, j), 0.25 * info(j, j)) << j;
  }
}

EstimationProblem station_problem(std::size_t stations, std::size_t times, std::uint64_t seed, Vector& y) {
  ScenarioSpec spec;
  spec.name = "station";
  spec.stations = stations;
  spec.times = times;
  auto in = std::make_shared<const InputSet>(generate_inputs(spec, seed));
  const auto& fam = model_family("spacetime-exponential");
  EstimationProblem prob;
  prob.make_model = family_factory(fam, in);
  prob.params = fam.defaults;
  prob.free = {"sigma2", "range_space", "range_time"};
  prob.inputs = in;
  y = simulate_exact(*prob.make_model(fam.defaults), seed + 1);
  return prob;
}

TEST(FisherScoring, ExactPathConverges) {
  Vector y;
  EstimationProblem prob = station_problem(25, 6, 3, y);
  prob.params.set("sigma2", 0.5);
  prob.params.set("range_space", 0.2);
  const FisherResult r = fisher_scoring(prob, y, parse_strategy("exact"), 0);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.final_grad_norm, 1e-4);
  for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_GE(r.trace[k].loglik, r.trace[k - 1].loglik - 1e-8);
}

TEST(FisherScoring, VecchiaPathConvergesWithDoublingRefresh) {
  Vector y;
  EstimationProblem prob = station_problem(25, 6, 4, y);
  FisherOptions opt;
  opt.schedule = RefreshSchedule::Doubling;
  opt.max_iter = 100;
  const FisherResult r = fisher_scoring(prob, y, kCMM, 10, opt);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.final_grad_norm, 1e-4);
  EXPECT_EQ(r.skeleton.size(), 150u);
  for (const auto& it : r.trace) EXPECT_EQ(it.refreshed, refresh_at(RefreshSchedule::Doubling, it.k));
}

TEST(FisherScoring, NaturalScaleVarianceIsOneStep) {
  Vector y;
  EstimationProblem prob = station_problem(20, 5, 5, y);
  prob.free = {"sigma2"};
  prob.params.set_log_scale("sigma2", false);
  prob.params.set("sigma2", 3.0);
  const FisherResult r = fisher_scoring(prob, y, parse_strategy("exact"), 0);
  ParamVector unit = prob.params;
  unit.set("sigma2", 1.0);
  const DenseMatrix k0 = eval_matrix(*prob.make_model(unit));
  const double expect = y.dot(Eigen::LLT<DenseMatrix>(k0).solve(y)) / static_cast<double>(y.size());
  ASSERT_GE(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].halvings, 0u);
  EXPECT_NEAR(r.estimate["sigma2"], expect, 1e-6 * expect);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.trace.size(), 3u);
}

TEST(RefreshSchedules, Membership) {
  for (std::size_t k : {1, 2, 3, 4, 5, 8, 12, 16}) {
    EXPECT_TRUE(refresh_at(RefreshSchedule::Every, k));
    EXPECT_EQ(refresh_at(RefreshSchedule::Doubling, k), k == 1 || k == 2 || k == 4 || k == 8 || k == 16) << k;
    EXPECT_EQ(refresh_at(RefreshSchedule::Never, k), k == 1);
  }
  EXPECT_EQ(parse_schedule("doubling"), RefreshSchedule::Doubling);
  EXPECT_THROW(parse_schedule("weekly"), UnknownIdentifier);
}

TEST(Refresh, SkeletonIsIdempotentAtFixedParameters) {
  const auto c = testing::catalog(120, 3)[4];
  const StrategyContext ctx{c.inputs, c.model, 0};
  EXPECT_EQ(build_skeleton(kCMM, ctx, 7), build_skeleton(kCMM, ctx, 7));
}

TEST(Gls, ProfiledMeanDominatesFixedMean) {
  auto in = testing::random_multivariate(120, 2, 8, true);
  const auto& fam = model_family("matern-ard");
  EstimationProblem prob;
  prob.make_model = family_factory(fam, in, 0.05);
  prob.params = fam.defaults;
  prob.free = {"sigma2"};
  prob.design = mean_design(*in);
  prob.mean_names = fam.mean_parameters;
  prob.inputs = in;
  Vector beta(2);
  beta << 1.5, -0.7;
  const Vector y = simulate_exact(*prob.make_model(fam.defaults), 2) + prob.design * beta;
  const auto sk = build_skeleton(kCMM, {in, prob.make_model(fam.defaults), 0}, 10);
  const double prof = profile_loglik(prob, prob.params, sk, y, true);
  for (double b0 : {-1.0, 0.0, 1.5, 3.0}) {
    ParamVector p = prob.params;
    p.set("beta0", b0);
    p.set("beta1", -0.7);
    EXPECT_GE(prof, profile_loglik(prob, p, sk, y, false) - 1e-9) << b0;
  }
  const Vector dense = gls_coefficients_dense(eval_matrix(*prob.make_model(fam.defaults)), prob.design, y);
  const SparseFactor u = build_factor(sk, *prob.make_model(fam.defaults));
  DenseMatrix xo(prob.design.rows(), 2);
  for (std::size_t k = 0; k < sk.size(); ++k) xo.row(static_cast<Eigen::Index>(k)) = prob.design.row(static_cast<Eigen::Index>(sk.order[k]));
  const Vector vb = gls_coefficients(u, xo, gather(y, sk.order));
  EXPECT_LT((vb - dense).norm(), 0.1 * dense.norm());
}

TEST(FisherScoring, DivergenceIsReported) {
  Vector y;
  EstimationProblem prob = station_problem(10, 4, 6, y);
  prob.free = {"range_space"};
  const auto base = prob.make_model;
  const double start = prob.params["range_space"];
  prob.make_model = [base, start](const ParamVector& p) -> ModelPtr {
    if (std::fabs(p["range_space"] - start) > 1e-3 * start) throw NotPositiveDefinite("refused");
    return base(p);
  };
  prob.params.set("range_space", start);
  y *= 3.0;  // far from the start, so a real step is needed
  EXPECT_THROW(fisher_scoring(prob, y, parse_strategy("exact"), 0), DivergenceDetected);
}

PosteriorRequest posterior_request(InputsPtr in, NoisePath path, double noise, std::size_t m, std::size_t points) {
  const auto& fam = model_family("spacetime-exponential");
  PosteriorRequest req;
  req.make_latent = family_factory(fam, in);
  req.theta_hat = fam.defaults;
  req.priors = {{"range_space", std::log(0.1), 0.6}, {"sigma2", 0.0, 0.6}};
  req.axes = {default_axis(req.priors[0], points), default_axis(req.priors[1], points)};
  req.m = m;
  req.noise_path = path;
  req.noise = noise;
  req.inputs = in;
  return req;
}

TEST(Posterior, SinglePointHasDensityOne) {
  auto in = testing::random_spacetime(40, 1);
  auto req = posterior_request(in, NoisePath::None, 0.0, 5, 1);
  const Vector z = simulate_exact(*req.make_latent(req.theta_hat), 2);
  const PosteriorGrid g = posterior_grid(req, z);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_DOUBLE_EQ(g.density[0], 1.0);
}

TEST(Posterior, NormalizedAndMarginalsIntegrateToOne) {
  auto in = testing::random_spacetime(80, 2);
  auto req = posterior_request(in, NoisePath::IC, 0.4, 8, 11);
  const Vector z = simulate_exact(*with_constant_noise(req.make_latent(req.theta_hat), 0.4), 3);
  const PosteriorGrid g = posterior_grid(req, z);
  EXPECT_NEAR(g.integral(), 1.0, 1e-6);
  for (std::size_t a = 0; a < 2; ++a) {
    const auto w = trapezoid_weights(g.axes[a].values);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * g.marginals[a][i];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Posterior, FullConditioningMatchesExact) {
  auto in = testing::random_spacetime(60, 4);
  auto vec = posterior_request(in, NoisePath::None, 0.0, 59, 7);
  auto ex = posterior_request(in, NoisePath::Exact, 0.0, 59, 7);
  const Vector z = simulate_exact(*vec.make_latent(vec.theta_hat), 5);
  const PosteriorGrid a = posterior_grid(vec, z), b = posterior_grid(ex, z);
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_NEAR(a.density[t], b.density[t], 1e-6 * (1.0 + b.density[t]));
}

TEST(Posterior, IcPathNeedsNoise) {
  auto in = testing::random_spacetime(30, 4);
  auto req = posterior_request(in, NoisePath::IC, 0.0, 5, 3);
  EXPECT_THROW(posterior_grid(req, Vector::Zero(30)), ZeroNoise);
}

TEST(Helpers, RmsdTrapezoidAndAxes) {
  Vector a = Vector::Zero(2), b(2);
  b << 3, 4;
  EXPECT_NEAR(rmsd(a, b), 3.5355339, 1e-7);
  EXPECT_EQ(trapezoid_weights({0.0, 1.0, 3.0}), (std::vector<double>{0.5, 1.5, 1.0}));
  EXPECT_EQ(trapezoid_weights({2.0}), (std::vector<double>{1.0}));
  const GridAxis ax = default_axis({"range", 1.0, 0.5}, 61);
  ASSERT_EQ(ax.values.size(), 61u);
  EXPECT_DOUBLE_EQ(ax.values.front(), -0.5);
  EXPECT_DOUBLE_EQ(ax.values.back(), 2.5);
  EXPECT_NEAR(ax.values[30], 1.0, 1e-15);
  const LogNormalPrior pr{"x", 0.0, 1.0};
  EXPECT_NEAR(pr.log_density(0.0), -0.9189385, 1e-7);
  EXPECT_EQ(parse_noise_path("ic"), NoisePath::IC);
  EXPECT_EQ(to_string(NoisePath::Naive), "naive");
  EXPECT_THROW(parse_noise_path("loud"), UnknownIdentifier);
}

}  // namespace
}  // namespace cvecchia
