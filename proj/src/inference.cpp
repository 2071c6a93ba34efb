#include "cvecchia/inference.hpp"

#include <limits>
#include <numbers>
#include <numeric>

namespace cvecchia {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct PerturbedModels {
  ModelPtr base;
  std::vector<ModelPtr> plus, minus;
  std::vector<double> step;
};

PerturbedModels perturb(const ModelFactory& make_model, const ParamVector& params,
                        const std::vector<std::string>& free) {
  PerturbedModels out;
  out.base = make_model(params);
  const Vector theta = params.pack(free);
  for (std::size_t j = 0; j < free.size(); ++j) {
    const double h = fd_step(theta[static_cast<Eigen::Index>(j)]);
    Vector tp = theta, tm = theta;
    tp[static_cast<Eigen::Index>(j)] += h;
    tm[static_cast<Eigen::Index>(j)] -= h;
    out.plus.push_back(make_model(params.unpack(free, tp)));
    out.minus.push_back(make_model(params.unpack(free, tm)));
    out.step.push_back(h);
  }
  return out;
}

// Adds sign * (score, information, log density) of N(0, B) at yb, where B
// and dB are the leading s x s blocks.
void add_block(const DenseMatrix& b_full, const std::vector<DenseMatrix>& db_full, const Vector& y_full,
               Eigen::Index s, double sign, ScoreResult& acc) {
  if (s == 0) return;
  const DenseMatrix b = b_full.topLeftCorner(s, s);
  Eigen::LLT<DenseMatrix> llt(b);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("score_and_fisher: block is not positive definite");
  const Vector yb = y_full.head(s);
  const Vector alpha = llt.solve(yb);
  const std::size_t p = db_full.size();
  std::vector<DenseMatrix> pj(p);
  for (std::size_t j = 0; j < p; ++j) {
    const DenseMatrix db = db_full[j].topLeftCorner(s, s);
    pj[j] = llt.solve(db);
    acc.gradient[static_cast<Eigen::Index>(j)] += sign * (-0.5 * pj[j].trace() + 0.5 * alpha.dot(db * alpha));
  }
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t k = j; k < p; ++k) {
      const double t = 0.5 * (pj[j].array() * pj[k].transpose().array()).sum();
      acc.information(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) += sign * t;
      if (k != j) acc.information(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) += sign * t;
    }
  }
  const DenseMatrix& l = llt.matrixLLT();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) logdet += 2.0 * std::log(l(i, i));
  acc.loglik += sign * (-0.5 * logdet - 0.5 * static_cast<double>(s) * kLog2Pi - 0.5 * yb.dot(alpha));
}

void flag_singular(ScoreResult& r) {
  const auto p = r.information.rows();
  if (p == 0) return;
  Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(r.information, Eigen::EigenvaluesOnly);
  const double trace = r.information.trace();
  r.singular = !(eig.eigenvalues().minCoeff() > 1e-12 * std::max(std::fabs(trace), 1e-300));
}

Vector mean_coefficients(const EstimationProblem& problem, const ParamVector& params) {
  Vector beta(static_cast<Eigen::Index>(problem.mean_names.size()));
  for (std::size_t k = 0; k < problem.mean_names.size(); ++k) beta[static_cast<Eigen::Index>(k)] = params[problem.mean_names[k]];
  return beta;
}

DenseMatrix gather_rows(const DenseMatrix& x, std::span<const std::size_t> order) {
  DenseMatrix out(x.rows(), x.cols());
  for (std::size_t k = 0; k < order.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(order[k]));
  return out;
}

bool has_mean(const EstimationProblem& problem) { return problem.design.size() != 0 && !problem.mean_names.empty(); }

// Profiles beta into params (when a mean is present) and returns the residual y - X beta.
Vector vecchia_residual(const EstimationProblem& problem, ParamVector& params, const OrderedApprox& skeleton,
                        const SparseFactor& u, const Vector& y, bool profile) {
  if (!has_mean(problem)) return y;
  Vector beta = mean_coefficients(problem, params);
  if (profile) {
    beta = gls_coefficients(u, gather_rows(problem.design, skeleton.order), gather(y, skeleton.order));
    for (std::size_t k = 0; k < problem.mean_names.size(); ++k) params.set(problem.mean_names[k], beta[static_cast<Eigen::Index>(k)]);
  }
  return y - problem.design * beta;
}

Vector exact_residual(const EstimationProblem& problem, ParamVector& params, const DenseMatrix& k, const Vector& y) {
  if (!has_mean(problem)) return y;
  const Vector beta = gls_coefficients_dense(k, problem.design, y);
  for (std::size_t j = 0; j < problem.mean_names.size(); ++j) params.set(problem.mean_names[j], beta[static_cast<Eigen::Index>(j)]);
  return y - problem.design * beta;
}

double exact_profile_loglik(const EstimationProblem& problem, ParamVector params, const Vector& y) {
  const DenseMatrix k = eval_matrix(*problem.make_model(params));
  const Vector r = exact_residual(problem, params, k, y);
  return exact_loglik(k, r);
}

}  // namespace

ModelFactory family_factory(const ModelFamily& family, InputsPtr inputs, double nugget) {
  if (nugget < 0.0) throw NegativeNoise("family_factory: negative nugget");
  return [&family, inputs = std::move(inputs), nugget](const ParamVector& p) -> ModelPtr {
    ModelPtr m = family.bind(inputs, p);
    return nugget > 0.0 ? with_constant_noise(std::move(m), nugget) : m;
  };
}

ScoreResult score_and_fisher(const OrderedApprox& skeleton, const ModelFactory& make_model, const ParamVector& params,
                             const std::vector<std::string>& free, const Vector& y_ordered) {
  const std::size_t n = skeleton.size();
  if (static_cast<std::size_t>(y_ordered.size()) != n) throw DimensionMismatch("score_and_fisher: data length");
  const auto models = perturb(make_model, params, free);
  const auto p = static_cast<Eigen::Index>(free.size());
  ScoreResult acc;
  acc.gradient = Vector::Zero(p);
  acc.information = DenseMatrix::Zero(p, p);
  std::vector<DenseMatrix> db(free.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> orig;
    Vector yb(static_cast<Eigen::Index>(skeleton.neighbors[i].size() + 1));
    for (std::size_t k = 0; k < skeleton.neighbors[i].size(); ++k) {
      orig.push_back(skeleton.order[skeleton.neighbors[i][k]]);
      yb[static_cast<Eigen::Index>(k)] = y_ordered[static_cast<Eigen::Index>(skeleton.neighbors[i][k])];
    }
    orig.push_back(skeleton.order[i]);
    yb[yb.size() - 1] = y_ordered[static_cast<Eigen::Index>(i)];
    const DenseMatrix b = eval_block(*models.base, orig);
    for (std::size_t j = 0; j < free.size(); ++j) {
      db[j] = (eval_block(*models.plus[j], orig) - eval_block(*models.minus[j], orig)) / (2.0 * models.step[j]);
    }
    const auto s = static_cast<Eigen::Index>(orig.size());
    add_block(b, db, yb, s, 1.0, acc);
    add_block(b, db, yb, s - 1, -1.0, acc);
  }
  flag_singular(acc);
  return acc;
}

ScoreResult exact_score_and_fisher(const ModelFactory& make_model, const ParamVector& params,
                                   const std::vector<std::string>& free, const Vector& y) {
  const auto models = perturb(make_model, params, free);
  const std::size_t n = models.base->size();
  check_dense_limit(n, "exact_score_and_fisher");
  if (static_cast<std::size_t>(y.size()) != n) throw DimensionMismatch("exact_score_and_fisher: data length");
  const auto p = static_cast<Eigen::Index>(free.size());
  ScoreResult acc;
  acc.gradient = Vector::Zero(p);
  acc.information = DenseMatrix::Zero(p, p);
  std::vector<DenseMatrix> db(free.size());
  for (std::size_t j = 0; j < free.size(); ++j) {
    db[j] = (eval_matrix(*models.plus[j]) - eval_matrix(*models.minus[j])) / (2.0 * models.step[j]);
  }
  add_block(eval_matrix(*models.base), db, y, static_cast<Eigen::Index>(n), 1.0, acc);
  flag_singular(acc);
  return acc;
}

Vector gls_coefficients(const SparseFactor& u, const DenseMatrix& x_ordered, const Vector& y_ordered) {
  const auto q = x_ordered.cols();
  DenseMatrix ux(x_ordered.rows(), q);
  for (Eigen::Index c = 0; c < q; ++c) ux.col(c) = sparse_factor_apply(u, x_ordered.col(c), true);
  const Vector uy = sparse_factor_apply(u, y_ordered, true);
  const DenseMatrix a = ux.transpose() * ux;
  Eigen::LDLT<DenseMatrix> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw SingularMatrix("gls_coefficients: singular normal equations");
  return ldlt.solve(ux.transpose() * uy);
}

Vector gls_coefficients_dense(const DenseMatrix& k, const DenseMatrix& x, const Vector& y) {
  const DenseMatrix l = cholesky(k);
  const DenseMatrix lx = solve_triangular(l, x, Triangle::Lower);
  const Vector ly = solve_triangular(l, y, Triangle::Lower);
  Eigen::LDLT<DenseMatrix> ldlt(DenseMatrix(lx.transpose() * lx));
  if (ldlt.info() != Eigen::Success) throw SingularMatrix("gls_coefficients_dense: singular normal equations");
  return ldlt.solve(lx.transpose() * ly);
}

bool refresh_at(RefreshSchedule schedule, std::size_t iteration) {
  if (iteration == 1) return true;
  switch (schedule) {
    case RefreshSchedule::Every: return true;
    case RefreshSchedule::Doubling: return (iteration & (iteration - 1)) == 0;
    case RefreshSchedule::Never: return false;
  }
  return false;
}

RefreshSchedule parse_schedule(const std::string& text) {
  if (text == "every") return RefreshSchedule::Every;
  if (text == "doubling") return RefreshSchedule::Doubling;
  if (text == "never") return RefreshSchedule::Never;
  throw UnknownIdentifier("unknown refresh schedule '" + text + "'");
}

double profile_loglik(const EstimationProblem& problem, const ParamVector& params, const OrderedApprox& skeleton,
                      const Vector& y, bool profile) {
  ParamVector pv = params;
  const SparseFactor u = build_factor(skeleton, *problem.make_model(pv));
  const Vector r = vecchia_residual(problem, pv, skeleton, u, y, profile);
  return loglik(u, gather(r, skeleton.order));
}

FisherResult fisher_scoring(const EstimationProblem& problem, const Vector& y, const Strategy& strategy, std::size_t m,
                            const FisherOptions& options) {
  const bool exact = strategy.exact();
  ParamVector params = problem.params;
  Vector theta = params.pack(problem.free);
  FisherResult result;
  OrderedApprox skeleton;
  bool small_step = false;
  double last_grad = std::numeric_limits<double>::infinity();

  for (std::size_t k = 1; k <= options.max_iter; ++k) {
    FisherIteration it;
    it.k = k;
    it.theta = theta;
    bool skeleton_changed = false;
    if (!exact && refresh_at(options.schedule, k)) {
      StrategyContext ctx{problem.inputs, problem.make_model(params), problem.seed};
      OrderedApprox fresh = build_skeleton(strategy, ctx, m);
      skeleton_changed = k > 1 && !(fresh == skeleton);
      skeleton = std::move(fresh);
      it.refreshed = true;
    }

    ScoreResult s;
    if (exact) {
      const DenseMatrix kmat = eval_matrix(*problem.make_model(params));
      const Vector r = exact_residual(problem, params, kmat, y);
      s = exact_score_and_fisher(problem.make_model, params, problem.free, r);
    } else {
      const SparseFactor u = build_factor(skeleton, *problem.make_model(params));
      const Vector r = vecchia_residual(problem, params, skeleton, u, y, true);
      s = score_and_fisher(skeleton, problem.make_model, params, problem.free, gather(r, skeleton.order));
    }
    it.loglik = s.loglik;
    it.grad_norm = s.gradient.norm();
    last_grad = it.grad_norm;
    result.loglik = s.loglik;
    if (it.grad_norm < options.grad_tol || (small_step && !skeleton_changed)) {
      result.converged = true;
      result.trace.push_back(it);
      break;
    }

    DenseMatrix info = s.information;
    Eigen::LLT<DenseMatrix> llt(info);
    if (s.singular || llt.info() != Eigen::Success) {
      const double p = static_cast<double>(info.rows());
      info.diagonal().array() += 1e-8 * std::fabs(info.trace()) / p;
      llt.compute(info);
      it.regularized = true;
      if (llt.info() != Eigen::Success) throw SingularMatrix("fisher_scoring: information matrix not invertible");
    }
    const Vector step = llt.solve(s.gradient);

    // Damping: halve the step while the likelihood (same skeleton) decreases.
    const double slack = 1e-10 * (1.0 + std::fabs(s.loglik));
    double lambda = 1.0;
    bool accepted = false;
    ParamVector trial;
    for (std::size_t h = 0; h <= options.max_halvings; ++h) {
      try {
        trial = params.unpack(problem.free, theta + lambda * step);
        const double ll = exact ? exact_profile_loglik(problem, trial, y) : profile_loglik(problem, trial, skeleton, y);
        if (std::isfinite(ll) && ll >= s.loglik - slack) {
          accepted = true;
          it.halvings = h;
          break;
        }
      } catch (const InvalidParameter&) {
      } catch (const NotPositiveDefinite&) {
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      result.trace.push_back(it);
      throw DivergenceDetected("fisher_scoring: log-likelihood decreased for every damped step at iteration " +
                               std::to_string(k));
    }
    theta += lambda * step;
    params = trial;
    it.step_norm = lambda * step.norm();
    small_step = it.step_norm < options.step_tol;
    result.trace.push_back(it);
  }

  if (has_mean(problem)) {
    // Report the coefficients profiled at the final parameters.
    if (exact) {
      exact_residual(problem, params, eval_matrix(*problem.make_model(params)), y);
    } else {
      const SparseFactor u = build_factor(skeleton, *problem.make_model(params));
      vecchia_residual(problem, params, skeleton, u, y, true);
    }
  }
  result.estimate = params;
  result.skeleton = std::move(skeleton);
  result.final_grad_norm = last_grad;
  return result;
}

double LogNormalPrior::log_density(double theta) const {
  const double z = (theta - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLog2Pi;
}

GridAxis default_axis(const LogNormalPrior& prior, std::size_t points) {
  GridAxis axis{prior.name, {}};
  if (points <= 1) {
    axis.values.push_back(prior.mean);
    return axis;
  }
  for (std::size_t k = 0; k < points; ++k) {
    axis.values.push_back(prior.mean - 3.0 * prior.sd + 6.0 * prior.sd * static_cast<double>(k) / static_cast<double>(points - 1));
  }
  return axis;
}

NoisePath parse_noise_path(const std::string& text) {
  if (text == "none") return NoisePath::None;
  if (text == "naive") return NoisePath::Naive;
  if (text == "ic") return NoisePath::IC;
  if (text == "exact") return NoisePath::Exact;
  throw UnknownIdentifier("unknown noise path '" + text + "'");
}

std::string to_string(NoisePath path) {
  switch (path) {
    case NoisePath::None: return "none";
    case NoisePath::Naive: return "naive";
    case NoisePath::IC: return "ic";
    case NoisePath::Exact: return "exact";
  }
  return "unknown";
}

std::vector<double> trapezoid_weights(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<double> w(n, 1.0);
  if (n <= 1) return w;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = values[i == 0 ? 0 : i - 1];
    const double hi = values[i + 1 == n ? n - 1 : i + 1];
    w[i] = 0.5 * (hi - lo);
  }
  return w;
}

double PosteriorGrid::integral() const {
  if (axes.size() == 1) {
    const auto w = trapezoid_weights(axes[0].values);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * density[i];
    return s;
  }
  const auto w0 = trapezoid_weights(axes[0].values);
  const auto w1 = trapezoid_weights(axes[1].values);
  double s = 0.0;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    for (std::size_t j = 0; j < w1.size(); ++j) s += w0[i] * w1[j] * density[i * w1.size() + j];
  }
  return s;
}

PosteriorGrid posterior_grid(const PosteriorRequest& request, const Vector& z) {
  const std::size_t naxes = request.axes.size();
  if (naxes < 1 || naxes > 2) throw InvalidShape("posterior_grid: one or two axes supported");
  if (request.priors.size() != naxes) throw InvalidShape("posterior_grid: one prior per axis");
  const ModelPtr latent_hat = request.make_latent(request.theta_hat);
  const std::size_t n = latent_hat->size();
  if (static_cast<std::size_t>(z.size()) != n) throw DimensionMismatch("posterior_grid: data length");
  const bool noisy = request.noise_path != NoisePath::None;
  if (noisy && request.noise_path != NoisePath::Exact && request.noise_path != NoisePath::Naive && request.noise <= 0.0) {
    throw ZeroNoise("posterior_grid: the IC path needs positive noise");
  }

  // The skeleton is fixed at theta_hat for the whole grid.
  OrderedApprox skeleton;
  if (request.noise_path != NoisePath::Exact) {
    ModelPtr metric_model = latent_hat;
    if (request.noise_path == NoisePath::Naive && request.noise > 0.0) {
      metric_model = with_constant_noise(latent_hat, request.noise);
    }
    skeleton = build_skeleton(request.strategy, StrategyContext{request.inputs, metric_model, request.seed}, request.m);
  }
  const Vector z_ord = skeleton.size() ? gather(z, skeleton.order) : z;

  auto evaluate = [&](const ParamVector& pv) {
    const ModelPtr latent = request.make_latent(pv);
    if (request.reorder_per_theta && request.noise_path != NoisePath::Exact) {
      // Demonstration only: a skeleton per grid point gives unstable posteriors.
      ModelPtr metric_model = latent;
      if (request.noise_path == NoisePath::Naive && request.noise > 0.0) metric_model = with_constant_noise(latent, request.noise);
      const OrderedApprox local = build_skeleton(request.strategy, StrategyContext{request.inputs, metric_model, request.seed}, request.m);
      const Vector zl = gather(z, local.order);
      switch (request.noise_path) {
        case NoisePath::None:
          return loglik(build_factor(local, *latent), zl);
        case NoisePath::Naive:
          return loglik(build_factor(local, *with_constant_noise(latent, request.noise)), zl);
        default: {
          const VecchiaApprox approx{local, latent, build_factor(local, *latent)};
          return loglik_noisy_ic(approx, Vector::Constant(static_cast<Eigen::Index>(n), request.noise), zl);
        }
      }
    }
    switch (request.noise_path) {
      case NoisePath::None:
        return loglik(build_factor(skeleton, *latent), z_ord);
      case NoisePath::Naive:
        return loglik(build_factor(skeleton, *with_constant_noise(latent, request.noise)), z_ord);
      case NoisePath::IC: {
        const VecchiaApprox approx{skeleton, latent, build_factor(skeleton, *latent)};
        return loglik_noisy_ic(approx, Vector::Constant(static_cast<Eigen::Index>(n), request.noise), z_ord);
      }
      case NoisePath::Exact: {
        DenseMatrix k = eval_matrix(*latent);
        k.diagonal().array() += request.noise;
        return exact_loglik(k, z);
      }
    }
    return 0.0;
  };

  PosteriorGrid grid;
  grid.axes = request.axes;
  const std::size_t n0 = request.axes[0].values.size();
  const std::size_t n1 = naxes == 2 ? request.axes[1].values.size() : 1;
  grid.log_prior.resize(n0 * n1);
  grid.log_lik.resize(n0 * n1);
  // Grid points are independent; the skeleton is shared read-only.
  std::vector<std::string> failures(n0 * n1);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(n0 * n1); ++t) {
    const std::size_t i = static_cast<std::size_t>(t) / n1, j = static_cast<std::size_t>(t) % n1;
    try {
      ParamVector pv = request.theta_hat;
      pv.set_optimization_value(request.axes[0].name, request.axes[0].values[i]);
      double lp = request.priors[0].log_density(request.axes[0].values[i]);
      if (naxes == 2) {
        pv.set_optimization_value(request.axes[1].name, request.axes[1].values[j]);
        lp += request.priors[1].log_density(request.axes[1].values[j]);
      }
      grid.log_prior[i * n1 + j] = lp;
      grid.log_lik[i * n1 + j] = evaluate(pv);
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(t)] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw Error("posterior_grid: " + f);
  }

  double max_lp = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < grid.log_lik.size(); ++t) max_lp = std::max(max_lp, grid.log_prior[t] + grid.log_lik[t]);
  grid.density.resize(grid.log_lik.size());
  for (std::size_t t = 0; t < grid.density.size(); ++t) grid.density[t] = std::exp(grid.log_prior[t] + grid.log_lik[t] - max_lp);
  const double z_norm = grid.integral();
  for (auto& d : grid.density) d /= z_norm;

  if (naxes == 1) {
    grid.marginals.push_back(grid.density);
  } else {
    const auto w0 = trapezoid_weights(request.axes[0].values);
    const auto w1 = trapezoid_weights(request.axes[1].values);
    std::vector<double> m0(n0, 0.0), m1(n1, 0.0);
    for (std::size_t i = 0; i < n0; ++i) {
      for (std::size_t j = 0; j < n1; ++j) {
        m0[i] += w1[j] * grid.density[i * n1 + j];
        m1[j] += w0[i] * grid.density[i * n1 + j];
      }
    }
    grid.marginals = {m0, m1};
  }
  return grid;
}

double rmsd(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionMismatch("rmsd: lengths differ");
  if (a.size() == 0) return 0.0;
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

}  // namespace cvecchia
