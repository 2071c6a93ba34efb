#ifndef CVECCHIA_VECCHIA_HPP_
#define CVECCHIA_VECCHIA_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "cvecchia/covmodels.hpp"
#include "cvecchia/geometry.hpp"
#include "cvecchia/linalg.hpp"
#include "cvecchia/strategy.hpp"

namespace cvecchia {

/// Dense work (exact oracles, KL) is refused above this many items.
inline constexpr std::size_t kDenseLimit = 5000;
void check_dense_limit(std::size_t n, const char* what);

/// Skeleton + model + factor. The model is indexed by original item index;
/// the factor and all vectors passed with it are in ordered indexing.
struct VecchiaApprox {
  OrderedApprox skeleton;
  ModelPtr model;
  SparseFactor factor;

  std::size_t size() const { return skeleton.size(); }
};

/// Column i of U from the block K[c~(i), c~(i)] (i placed last), evaluated
/// at original indices skeleton.order[...]. Throws NotPositiveDefinite with
/// the offending column.
SparseFactor build_factor(const OrderedApprox& skeleton, const CovarianceModel& model);
VecchiaApprox make_approx(OrderedApprox skeleton, ModelPtr model);

/// log N(y; 0, (U U^T)^{-1}) with y in ordered indexing.
double loglik(const SparseFactor& u, const Vector& y_ordered);
double loglik(const VecchiaApprox& approx, const Vector& y_ordered);
/// The same density as sum_i [log N(y_c~(i)) - log N(y_c(i))] from dense blocks.
double loglik_conditional_sum(const OrderedApprox& skeleton, const CovarianceModel& model,
                              const Vector& y_ordered);

/// KL(N(0, K) || Vecchia) as the conditional-variance-ratio sum, with K the
/// exact covariance of `exact_model` (original indexing).
double kl_divergence(const VecchiaApprox& approx, const CovarianceModel& exact_model);
/// Generic Gaussian form 1/2 [tr(U U^T K) - n - 2 sum log U_ii - log det K],
/// K given in ordered indexing. Used for KL(truth || fitted approximation).
double gaussian_kl(const SparseFactor& u, const DenseMatrix& k_ordered);
/// KL(N(0, k0) || N(0, k1)) for dense covariances.
double gaussian_kl(const DenseMatrix& k0, const DenseMatrix& k1);

/// Dense log N(y; 0, K).
double exact_loglik(const DenseMatrix& k, const Vector& y);

/// K[order, order].
DenseMatrix ordered_covariance(const CovarianceModel& model, std::span<const std::size_t> order);

/// Posterior N(mean, cov) of the predictions, stored through a triangular
/// factor in joint (position) order.
struct PredictiveDistribution {
  enum class Representation {
    PrecisionFactor,     // precision = F F^T, F upper triangular
    CovarianceCholesky,  // covariance = F F^T, F lower triangular
  };

  Vector mean;                     // caller prediction indexing
  Representation representation = Representation::CovarianceCholesky;
  DenseMatrix factor;              // position indexing
  std::vector<std::size_t> order;  // position q holds prediction index order[q]

  std::size_t size() const { return static_cast<std::size_t>(mean.size()); }
  /// Both in caller prediction indexing.
  DenseMatrix covariance() const;
  DenseMatrix precision() const;
  Vector marginal_variances() const;
};

/// Joint skeleton over (observed, predictions) in joint positions.
OrderedApprox joint_skeleton(const PredictionSkeleton& pred, std::size_t n_obs);

/// Vecchia prediction; `model_all` spans observed items then predictions.
PredictiveDistribution predict(const CovarianceModel& model_all, const PredictionSkeleton& skeleton,
                               const Vector& y_obs);
/// Latent prediction from noisy observations z = y + e, e ~ N(0, diag(noise)),
/// through the incomplete-Cholesky posterior of the latent joint field.
PredictiveDistribution predict_noisy(const CovarianceModel& model_all, const PredictionSkeleton& skeleton,
                                     const Vector& noise_obs, const Vector& z_obs);

/// Dense kriging; noise_obs may be empty (noise-free).
PredictiveDistribution exact_predict(const CovarianceModel& model_all, std::size_t n_obs, const Vector& y_obs,
                                     const Vector& noise_obs = Vector());

/// Joint negative log density of y_test (caller indexing).
double logscore(const PredictiveDistribution& pred, const Vector& y_test);
/// Sum over predictions of the marginal negative log densities.
double marginal_logscore(const PredictiveDistribution& pred, const Vector& y_test);
double rmspe(const PredictiveDistribution& pred, const Vector& y_test);

/// Naive noisy path: the skeleton is expected to come from the metric of K + D.
double loglik_noisy_naive(const OrderedApprox& skeleton, ModelPtr model, const Vector& noise, const Vector& z_ordered);

/// Incomplete-Cholesky path for log N(z; 0, K^ + D) with K^ the Vecchia
/// approximation of the latent covariance. Noise in ordered indexing; throws
/// ZeroNoise on a zero variance.
double loglik_noisy_ic(const VecchiaApprox& approx, const Vector& noise_ordered, const Vector& z_ordered);

}  // namespace cvecchia

#endif  // CVECCHIA_VECCHIA_HPP_
