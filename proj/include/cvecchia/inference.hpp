#ifndef CVECCHIA_INFERENCE_HPP_
#define CVECCHIA_INFERENCE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cvecchia/covmodels.hpp"
#include "cvecchia/geometry.hpp"
#include "cvecchia/params.hpp"
#include "cvecchia/strategy.hpp"
#include "cvecchia/vecchia.hpp"

namespace cvecchia {

/// Builds a covariance model at a parameter value (inputs already bound).
using ModelFactory = std::function<ModelPtr(const ParamVector&)>;

/// Binds a registry family to inputs, plus an optional constant nugget.
ModelFactory family_factory(const ModelFamily& family, InputsPtr inputs, double nugget = 0.0);

/// Model parameters to estimate: `free` are optimized on the optimization
/// scale; with a design matrix, `mean_names` coefficients are profiled by GLS.
struct EstimationProblem {
  ModelFactory make_model;
  ParamVector params;               // starting / fixed values
  std::vector<std::string> free;    // Fisher-scored parameters
  DenseMatrix design;               // n x q mean design (original indexing); empty = zero mean
  std::vector<std::string> mean_names;
  InputsPtr inputs;                 // for non-correlation strategies
  std::uint64_t seed = 0;           // for random strategies
};

struct ScoreResult {
  Vector gradient;
  DenseMatrix information;
  double loglik = 0.0;
  bool singular = false;
};

/// Score and Fisher information of the Vecchia likelihood (sum over c~ blocks
/// minus c blocks) on the optimization scale, by central differences of the
/// covariance. y is in ordered indexing (mean already removed).
ScoreResult score_and_fisher(const OrderedApprox& skeleton, const ModelFactory& make_model, const ParamVector& params,
                             const std::vector<std::string>& free, const Vector& y_ordered);
/// Dense exact-likelihood counterpart (the "exact" strategy); y in original indexing.
ScoreResult exact_score_and_fisher(const ModelFactory& make_model, const ParamVector& params,
                                   const std::vector<std::string>& free, const Vector& y);

/// Finite-difference step on the optimization scale.
inline double fd_step(double theta) { return 1e-5 * std::max(1.0, std::fabs(theta)); }

/// GLS coefficients (X^T Q X)^{-1} X^T Q y with Q = U U^T; X, y ordered.
Vector gls_coefficients(const SparseFactor& u, const DenseMatrix& x_ordered, const Vector& y_ordered);
Vector gls_coefficients_dense(const DenseMatrix& k, const DenseMatrix& x, const Vector& y);

enum class RefreshSchedule {
  Every,     // G = {1, 2, 3, ...}
  Doubling,  // G = {1, 2, 4, 8, ...}
  Never,     // G = {1}
};

bool refresh_at(RefreshSchedule schedule, std::size_t iteration);
RefreshSchedule parse_schedule(const std::string& text);

struct FisherOptions {
  std::size_t max_iter = 50;
  double step_tol = 1e-8;
  double grad_tol = 1e-6;
  RefreshSchedule schedule = RefreshSchedule::Every;
  std::size_t max_halvings = 5;
};

struct FisherIteration {
  std::size_t k = 0;
  Vector theta;          // optimization scale, at the start of the iteration
  double loglik = 0.0;
  double grad_norm = 0.0;
  double step_norm = 0.0;
  std::size_t halvings = 0;
  bool refreshed = false;
  bool regularized = false;
};

struct FisherResult {
  ParamVector estimate;
  std::vector<FisherIteration> trace;
  OrderedApprox skeleton;  // last skeleton (empty for the exact strategy)
  bool converged = false;
  double final_grad_norm = 0.0;
  double loglik = 0.0;
};

/// Fisher scoring with skeleton refresh (new ordering and conditioning at the
/// current parameters) at the iterations in the schedule. The exact strategy
/// uses the dense likelihood. y in original indexing.
FisherResult fisher_scoring(const EstimationProblem& problem, const Vector& y, const Strategy& strategy, std::size_t m,
                            const FisherOptions& options = {});

/// log N(y - X beta) of the Vecchia approximation with beta profiled (or fixed
/// when `profile` is false, using params' mean coefficients). y original.
double profile_loglik(const EstimationProblem& problem, const ParamVector& params, const OrderedApprox& skeleton,
                      const Vector& y, bool profile = true);

/// Normal prior on the optimization scale of one parameter.
struct LogNormalPrior {
  std::string name;
  double mean = 0.0;  // of log(value) for log-scale parameters
  double sd = 1.0;
  double log_density(double theta) const;
};

struct GridAxis {
  std::string name;
  std::vector<double> values;  // optimization scale
};

/// Default grid: `points` values spanning mean +- 3 sd of the prior.
GridAxis default_axis(const LogNormalPrior& prior, std::size_t points = 61);

enum class NoisePath { None, Naive, IC, Exact };
NoisePath parse_noise_path(const std::string& text);
std::string to_string(NoisePath path);

struct PosteriorGrid {
  std::vector<GridAxis> axes;
  std::vector<double> log_prior;  // row-major over axes (first axis slowest)
  std::vector<double> log_lik;
  std::vector<double> density;    // normalized joint density
  std::vector<std::vector<double>> marginals;  // per axis

  std::size_t size() const { return density.size(); }
  /// Trapezoidal integral of `density` over the grid.
  double integral() const;
};

/// Trapezoidal weights along one axis (a single point has weight 1).
std::vector<double> trapezoid_weights(const std::vector<double>& values);

struct PosteriorRequest {
  ModelFactory make_latent;              // noise-free model K_theta
  ParamVector theta_hat;                 // skeleton parameters (held fixed)
  std::vector<LogNormalPrior> priors;    // one per axis
  std::vector<GridAxis> axes;            // 1 or 2 axes
  Strategy strategy{"C-MM", "C-NN"};
  std::size_t m = 10;
  NoisePath noise_path = NoisePath::None;
  double noise = 0.0;                    // constant noise variance d
  InputsPtr inputs;
  std::uint64_t seed = 0;
  /// Rebuild the skeleton at every grid point instead of holding it at
  /// theta_hat. Off by default: it yields unstable, wiggly posteriors.
  bool reorder_per_theta = false;
};

PosteriorGrid posterior_grid(const PosteriorRequest& request, const Vector& z);

double rmsd(const Vector& a, const Vector& b);

}  // namespace cvecchia

#endif  // CVECCHIA_INFERENCE_HPP_
