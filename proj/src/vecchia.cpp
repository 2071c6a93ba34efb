#include "cvecchia/vecchia.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "cvecchia/incomplete_cholesky.hpp"

namespace cvecchia {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> order) {
  std::vector<std::size_t> inv(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) inv[order[k]] = k;
  return inv;
}

// log N(y_idx; 0, K[idx, idx]) with idx given as original indices.
double block_logdensity(const CovarianceModel& model, std::span<const std::size_t> orig, const Vector& yb) {
  if (orig.empty()) return 0.0;
  const DenseMatrix l = cholesky(eval_block(model, orig));
  const Vector w = solve_triangular(l, yb, Triangle::Lower);
  return -0.5 * logdet_from_cholesky(l) - 0.5 * static_cast<double>(orig.size()) * kLog2Pi - 0.5 * w.squaredNorm();
}

}  // namespace

void check_dense_limit(std::size_t n, const char* what) {
  if (n > kDenseLimit) {
    throw DenseLimitExceeded(std::string(what) + ": dense computation limited to " + std::to_string(kDenseLimit) +
                             " items");
  }
}

SparseFactor build_factor(const OrderedApprox& skeleton, const CovarianceModel& model) {
  const std::size_t n = skeleton.size();
  if (model.size() != n) throw DimensionMismatch("build_factor: model size differs from skeleton size");
  if (skeleton.neighbors.size() != n) throw DimensionMismatch("build_factor: neighbor list count");
  SparseFactor u(n);
  std::atomic<std::size_t> failed{std::numeric_limits<std::size_t>::max()};
#pragma omp parallel for schedule(dynamic, 32)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    if (failed.load() != std::numeric_limits<std::size_t>::max()) continue;
    std::vector<std::size_t> rows = skeleton.neighbors[i];
    rows.push_back(i);
    std::vector<std::size_t> orig(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) orig[k] = skeleton.order[rows[k]];
    DenseMatrix l = eval_block(model, orig);
    if (!cholesky_in_place(l)) {
      std::size_t expected = std::numeric_limits<std::size_t>::max();
      failed.compare_exchange_strong(expected, i);
      continue;
    }
    // Column = L^{-T} e_last, by back substitution.
    const auto k = static_cast<Eigen::Index>(rows.size());
    std::vector<double> values(rows.size());
    values[static_cast<std::size_t>(k - 1)] = 1.0 / l(k - 1, k - 1);
    for (Eigen::Index j = k - 2; j >= 0; --j) {
      double acc = 0.0;
      for (Eigen::Index r = j + 1; r < k; ++r) acc += l(r, j) * values[static_cast<std::size_t>(r)];
      values[static_cast<std::size_t>(j)] = -acc / l(j, j);
    }
    u.set_column(i, std::move(rows), std::move(values));
  }
  if (failed.load() != std::numeric_limits<std::size_t>::max()) {
    const std::size_t col = failed.load();
    throw NotPositiveDefinite("build_factor: conditioning block of column " + std::to_string(col) +
                                  " is not positive definite",
                              col);
  }
  return u;
}

VecchiaApprox make_approx(OrderedApprox skeleton, ModelPtr model) {
  SparseFactor u = build_factor(skeleton, *model);
  return {std::move(skeleton), std::move(model), std::move(u)};
}

double loglik(const SparseFactor& u, const Vector& y_ordered) {
  if (static_cast<std::size_t>(y_ordered.size()) != u.size()) throw DimensionMismatch("loglik: data length");
  double logdiag = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) logdiag += std::log(u.diagonal(i));
  const Vector w = sparse_factor_apply(u, y_ordered, true);
  return logdiag - 0.5 * static_cast<double>(u.size()) * kLog2Pi - 0.5 * w.squaredNorm();
}

double loglik(const VecchiaApprox& approx, const Vector& y_ordered) { return loglik(approx.factor, y_ordered); }

double loglik_conditional_sum(const OrderedApprox& skeleton, const CovarianceModel& model, const Vector& y_ordered) {
  const std::size_t n = skeleton.size();
  if (static_cast<std::size_t>(y_ordered.size()) != n) throw DimensionMismatch("loglik_conditional_sum: data length");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = skeleton.neighbors[i];
    std::vector<std::size_t> orig;
    Vector yb(static_cast<Eigen::Index>(c.size() + 1));
    for (std::size_t k = 0; k < c.size(); ++k) {
      orig.push_back(skeleton.order[c[k]]);
      yb[static_cast<Eigen::Index>(k)] = y_ordered[static_cast<Eigen::Index>(c[k])];
    }
    const double with_c = block_logdensity(model, orig, yb.head(static_cast<Eigen::Index>(c.size())));
    orig.push_back(skeleton.order[i]);
    yb[static_cast<Eigen::Index>(c.size())] = y_ordered[static_cast<Eigen::Index>(i)];
    total += block_logdensity(model, orig, yb) - with_c;
  }
  return total;
}

DenseMatrix ordered_covariance(const CovarianceModel& model, std::span<const std::size_t> order) {
  check_dense_limit(order.size(), "ordered_covariance");
  return eval_block(model, order);
}

double kl_divergence(const VecchiaApprox& approx, const CovarianceModel& exact_model) {
  const std::size_t n = approx.size();
  check_dense_limit(n, "kl_divergence");
  if (exact_model.size() != n) throw DimensionMismatch("kl_divergence: model size");
  const DenseMatrix l = cholesky(ordered_covariance(exact_model, approx.skeleton.order));
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    kl += -std::log(approx.factor.diagonal(i)) - std::log(l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
  }
  return kl;
}

double gaussian_kl(const SparseFactor& u, const DenseMatrix& k_ordered) {
  const std::size_t n = u.size();
  check_dense_limit(n, "gaussian_kl");
  if (static_cast<std::size_t>(k_ordered.rows()) != n) throw DimensionMismatch("gaussian_kl: size");
  double trace = 0.0, logdiag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& col = u.column(i);
    for (std::size_t a = 0; a < col.rows.size(); ++a) {
      for (std::size_t b = 0; b < col.rows.size(); ++b) {
        trace += col.values[a] * col.values[b] *
                 k_ordered(static_cast<Eigen::Index>(col.rows[a]), static_cast<Eigen::Index>(col.rows[b]));
      }
    }
    logdiag += std::log(u.diagonal(i));
  }
  const double logdet_k = logdet_from_cholesky(cholesky(k_ordered));
  return 0.5 * (trace - static_cast<double>(n) - 2.0 * logdiag - logdet_k);
}

double gaussian_kl(const DenseMatrix& k0, const DenseMatrix& k1) {
  check_dense_limit(static_cast<std::size_t>(k0.rows()), "gaussian_kl");
  if (k0.rows() != k1.rows() || k0.cols() != k1.cols()) throw DimensionMismatch("gaussian_kl: size");
  const DenseMatrix l0 = cholesky(k0);
  const DenseMatrix l1 = cholesky(k1);
  // tr(K1^{-1} K0) = ||L1^{-1} L0||_F^2
  const DenseMatrix x = solve_triangular(l1, l0, Triangle::Lower);
  return 0.5 * (x.squaredNorm() - static_cast<double>(k0.rows()) + logdet_from_cholesky(l1) -
                logdet_from_cholesky(l0));
}

double exact_loglik(const DenseMatrix& k, const Vector& y) {
  check_dense_limit(static_cast<std::size_t>(k.rows()), "exact_loglik");
  if (k.rows() != y.size()) throw DimensionMismatch("exact_loglik: data length");
  const DenseMatrix l = cholesky(k);
  const Vector w = solve_triangular(l, y, Triangle::Lower);
  return -0.5 * logdet_from_cholesky(l) - 0.5 * static_cast<double>(y.size()) * kLog2Pi - 0.5 * w.squaredNorm();
}

// ---------------------------------------------------------------------------

DenseMatrix PredictiveDistribution::covariance() const {
  const auto n = static_cast<Eigen::Index>(size());
  DenseMatrix pos;
  if (representation == Representation::PrecisionFactor) {
    const DenseMatrix finv = solve_triangular(factor, DenseMatrix(DenseMatrix::Identity(n, n)), Triangle::Upper);
    pos = finv.transpose() * finv;
  } else {
    pos = factor * factor.transpose();
  }
  DenseMatrix out(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (Eigen::Index q = 0; q < n; ++q) {
      out(static_cast<Eigen::Index>(order[static_cast<std::size_t>(p)]),
          static_cast<Eigen::Index>(order[static_cast<std::size_t>(q)])) = pos(p, q);
    }
  }
  return out;
}

DenseMatrix PredictiveDistribution::precision() const {
  const auto n = static_cast<Eigen::Index>(size());
  DenseMatrix pos;
  if (representation == Representation::PrecisionFactor) {
    pos = factor * factor.transpose();
  } else {
    const DenseMatrix finv = solve_triangular(factor, DenseMatrix(DenseMatrix::Identity(n, n)), Triangle::Lower);
    pos = finv.transpose() * finv;
  }
  DenseMatrix out(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (Eigen::Index q = 0; q < n; ++q) {
      out(static_cast<Eigen::Index>(order[static_cast<std::size_t>(p)]),
          static_cast<Eigen::Index>(order[static_cast<std::size_t>(q)])) = pos(p, q);
    }
  }
  return out;
}

Vector PredictiveDistribution::marginal_variances() const { return covariance().diagonal(); }

OrderedApprox joint_skeleton(const PredictionSkeleton& pred, std::size_t n_obs) {
  if (pred.observed.size() != n_obs) throw DimensionMismatch("joint_skeleton: observed skeleton size");
  const std::size_t n_pred = pred.pred_order.size();
  const auto inv_obs = inverse_permutation(pred.observed.order);
  OrderedApprox joint;
  joint.order = pred.observed.order;
  joint.neighbors = pred.observed.neighbors;
  joint.m = pred.observed.m;
  for (std::size_t q = 0; q < n_pred; ++q) {
    joint.order.push_back(n_obs + pred.pred_order[q]);
    std::vector<std::size_t> c;
    for (auto j : pred.conditioning.observed[q]) c.push_back(inv_obs[j]);
    for (auto p : pred.conditioning.unobserved[q]) c.push_back(n_obs + p);
    std::sort(c.begin(), c.end());
    joint.m = std::max(joint.m, c.size());
    joint.neighbors.push_back(std::move(c));
  }
  return joint;
}

PredictiveDistribution predict(const CovarianceModel& model_all, const PredictionSkeleton& skeleton,
                               const Vector& y_obs) {
  const std::size_t n_obs = skeleton.observed.size();
  const std::size_t n_pred = skeleton.pred_order.size();
  if (static_cast<std::size_t>(y_obs.size()) != n_obs) throw DimensionMismatch("predict: data length");
  if (model_all.size() != n_obs + n_pred) throw DimensionMismatch("predict: model size");
  const OrderedApprox joint = joint_skeleton(skeleton, n_obs);
  const SparseFactor u = build_factor(joint, model_all);
  const Vector y_ord = gather(y_obs, skeleton.observed.order);

  const auto np = static_cast<Eigen::Index>(n_pred);
  DenseMatrix w = DenseMatrix::Zero(np, np);
  Vector v = Vector::Zero(np);  // V^T y
  for (std::size_t q = 0; q < n_pred; ++q) {
    const auto& col = u.column(n_obs + q);
    for (std::size_t k = 0; k < col.rows.size(); ++k) {
      const std::size_t r = col.rows[k];
      if (r < n_obs) {
        v[static_cast<Eigen::Index>(q)] += col.values[k] * y_ord[static_cast<Eigen::Index>(r)];
      } else {
        w(static_cast<Eigen::Index>(r - n_obs), static_cast<Eigen::Index>(q)) = col.values[k];
      }
    }
  }
  const Vector mu_pos = solve_triangular(DenseMatrix(w.transpose()), Vector(-v), Triangle::Lower);
  PredictiveDistribution out;
  out.representation = PredictiveDistribution::Representation::PrecisionFactor;
  out.factor = std::move(w);
  out.order = skeleton.pred_order;
  out.mean = scatter(mu_pos, out.order);
  return out;
}

PredictiveDistribution predict_noisy(const CovarianceModel& model_all, const PredictionSkeleton& skeleton,
                                     const Vector& noise_obs, const Vector& z_obs) {
  const std::size_t n_obs = skeleton.observed.size();
  const std::size_t n_pred = skeleton.pred_order.size();
  const std::size_t n = n_obs + n_pred;
  if (static_cast<std::size_t>(z_obs.size()) != n_obs || static_cast<std::size_t>(noise_obs.size()) != n_obs) {
    throw DimensionMismatch("predict_noisy: data or noise length");
  }
  if (model_all.size() != n) throw DimensionMismatch("predict_noisy: model size");
  const OrderedApprox joint = joint_skeleton(skeleton, n_obs);
  const SparseFactor u = build_factor(joint, model_all);

  Vector extra = Vector::Zero(static_cast<Eigen::Index>(n));
  Vector b = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t p = 0; p < n_obs; ++p) {
    const double d = noise_obs[static_cast<Eigen::Index>(skeleton.observed.order[p])];
    if (d < 0.0) throw NegativeNoise("predict_noisy: negative noise variance");
    if (d == 0.0) throw ZeroNoise("predict_noisy: zero noise variance; use the noise-free path");
    extra[static_cast<Eigen::Index>(p)] = 1.0 / d;
    b[static_cast<Eigen::Index>(p)] = z_obs[static_cast<Eigen::Index>(skeleton.observed.order[p])] / d;
  }
  const auto ic = IncompleteCholesky::factor(u, extra);
  const Vector mean_all = ic.solve(b);

  const auto np = static_cast<Eigen::Index>(n_pred);
  DenseMatrix x(static_cast<Eigen::Index>(n), np);
  for (Eigen::Index q = 0; q < np; ++q) {
    Vector e = Vector::Zero(static_cast<Eigen::Index>(n));
    e[static_cast<Eigen::Index>(n_obs) + q] = 1.0;
    x.col(q) = ic.solve_factor(e);
  }
  const DenseMatrix cov_pos = x.transpose() * x;
  PredictiveDistribution out;
  out.representation = PredictiveDistribution::Representation::CovarianceCholesky;
  out.factor = cholesky(cov_pos);
  out.order = skeleton.pred_order;
  out.mean = scatter(Vector(mean_all.tail(np)), out.order);
  return out;
}

PredictiveDistribution exact_predict(const CovarianceModel& model_all, std::size_t n_obs, const Vector& y_obs,
                                     const Vector& noise_obs) {
  const std::size_t n = model_all.size();
  check_dense_limit(n, "exact_predict");
  if (n_obs > n || static_cast<std::size_t>(y_obs.size()) != n_obs) throw DimensionMismatch("exact_predict: sizes");
  if (noise_obs.size() != 0 && static_cast<std::size_t>(noise_obs.size()) != n_obs) {
    throw DimensionMismatch("exact_predict: noise length");
  }
  const DenseMatrix k = eval_matrix(model_all);
  const auto no = static_cast<Eigen::Index>(n_obs);
  const auto np = static_cast<Eigen::Index>(n - n_obs);
  DenseMatrix koo = k.topLeftCorner(no, no);
  if (noise_obs.size() != 0) koo.diagonal() += noise_obs;
  const DenseMatrix l = cholesky(koo);
  const DenseMatrix a = solve_triangular(l, DenseMatrix(k.topRightCorner(no, np)), Triangle::Lower);
  const Vector w = solve_triangular(l, y_obs, Triangle::Lower);
  PredictiveDistribution out;
  out.representation = PredictiveDistribution::Representation::CovarianceCholesky;
  out.mean = a.transpose() * w;
  out.factor = cholesky(DenseMatrix(k.bottomRightCorner(np, np) - a.transpose() * a));
  out.order.resize(static_cast<std::size_t>(np));
  for (std::size_t q = 0; q < out.order.size(); ++q) out.order[q] = q;
  return out;
}

double logscore(const PredictiveDistribution& pred, const Vector& y_test) {
  if (static_cast<std::size_t>(y_test.size()) != pred.size()) throw DimensionMismatch("logscore: data length");
  const Vector r = gather(y_test - pred.mean, pred.order);
  const auto n = static_cast<double>(pred.size());
  double logdiag = 0.0;
  for (Eigen::Index i = 0; i < pred.factor.rows(); ++i) logdiag += std::log(pred.factor(i, i));
  if (pred.representation == PredictiveDistribution::Representation::PrecisionFactor) {
    const Vector w = pred.factor.transpose() * r;
    return -logdiag + 0.5 * n * kLog2Pi + 0.5 * w.squaredNorm();
  }
  const Vector w = solve_triangular(pred.factor, r, Triangle::Lower);
  return logdiag + 0.5 * n * kLog2Pi + 0.5 * w.squaredNorm();
}

double marginal_logscore(const PredictiveDistribution& pred, const Vector& y_test) {
  if (static_cast<std::size_t>(y_test.size()) != pred.size()) throw DimensionMismatch("marginal_logscore: data length");
  const Vector v = pred.marginal_variances();
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double r = y_test[i] - pred.mean[i];
    total += 0.5 * (kLog2Pi + std::log(v[i])) + 0.5 * r * r / v[i];
  }
  return total;
}

double rmspe(const PredictiveDistribution& pred, const Vector& y_test) {
  if (static_cast<std::size_t>(y_test.size()) != pred.size()) throw DimensionMismatch("rmspe: data length");
  if (y_test.size() == 0) return 0.0;
  return std::sqrt((y_test - pred.mean).squaredNorm() / static_cast<double>(y_test.size()));
}

double loglik_noisy_naive(const OrderedApprox& skeleton, ModelPtr model, const Vector& noise, const Vector& z_ordered) {
  const auto sigma = with_noise(std::move(model), noise);
  return loglik(build_factor(skeleton, *sigma), z_ordered);
}

double loglik_noisy_ic(const VecchiaApprox& approx, const Vector& noise_ordered, const Vector& z_ordered) {
  const std::size_t n = approx.size();
  if (static_cast<std::size_t>(noise_ordered.size()) != n || static_cast<std::size_t>(z_ordered.size()) != n) {
    throw DimensionMismatch("loglik_noisy_ic: noise or data length");
  }
  Vector inv_d(static_cast<Eigen::Index>(n));
  double logdet_d = 0.0;
  for (Eigen::Index i = 0; i < inv_d.size(); ++i) {
    const double d = noise_ordered[i];
    if (d < 0.0) throw NegativeNoise("loglik_noisy_ic: negative noise variance");
    if (d == 0.0) throw ZeroNoise("loglik_noisy_ic: zero noise variance; use the naive path");
    inv_d[i] = 1.0 / d;
    logdet_d += std::log(d);
  }
  double logdet_q = 0.0;
  for (std::size_t i = 0; i < n; ++i) logdet_q += 2.0 * std::log(approx.factor.diagonal(i));
  const auto ic = IncompleteCholesky::factor(approx.factor, inv_d);
  const Vector b = inv_d.cwiseProduct(z_ordered);
  const double quad = z_ordered.dot(b) - ic.solve_factor(b).squaredNorm();
  return -0.5 * (logdet_d - logdet_q + ic.logdet() + quad + static_cast<double>(n) * kLog2Pi);
}

}  // namespace cvecchia
