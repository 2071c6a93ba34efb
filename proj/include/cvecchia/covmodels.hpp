#ifndef CVECCHIA_COVMODELS_HPP_
#define CVECCHIA_COVMODELS_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cvecchia/inputs.hpp"
#include "cvecchia/linalg.hpp"
#include "cvecchia/params.hpp"

namespace cvecchia {

/// A covariance evaluator over a fixed set of n items: the only interface the
/// ordering, factorization and inference code consumes.
///
/// `operator()` forwards to `evaluate` with (min, max) arguments, so every
/// model is bitwise symmetric regardless of how `evaluate` is written.
class CovarianceModel {
 public:
  virtual ~CovarianceModel() = default;

  virtual std::size_t size() const = 0;
  virtual std::string id() const = 0;

  double operator()(std::size_t i, std::size_t j) const {
    return i <= j ? evaluate(i, j) : evaluate(j, i);
  }

 protected:
  /// Called with i <= j.
  virtual double evaluate(std::size_t i, std::size_t j) const = 0;
};

using ModelPtr = std::shared_ptr<const CovarianceModel>;

inline double eval_pair(const CovarianceModel& model, std::size_t i, std::size_t j) {
  return model(i, j);
}

DenseMatrix eval_matrix(const CovarianceModel& model, std::span<const std::size_t> rows,
                        std::span<const std::size_t> cols);
/// Full n x n matrix.
DenseMatrix eval_matrix(const CovarianceModel& model);
/// Symmetric block K[idx, idx].
DenseMatrix eval_block(const CovarianceModel& model, std::span<const std::size_t> idx);

/// Sigma = K + diag(noise). Throws NegativeNoise / DimensionMismatch.
ModelPtr with_noise(ModelPtr model, Vector noise_variances);
ModelPtr with_constant_noise(ModelPtr model, double noise_variance);

/// View of `model` restricted to (and reindexed by) `indices`.
ModelPtr indexed_view(ModelPtr model, std::vector<std::size_t> indices);

/// Explicit covariance matrix as a model (symmetrized on construction).
ModelPtr matrix_model(DenseMatrix k);

// ---------------------------------------------------------------------------
// Nonstationary Matern (anisotropy and smoothness fields in the plane).

enum class AnisotropyPreset { Anisotropic, VaryingSmoothness, VaryingRotation };

/// The three 2-D fields: constant 1e-2 diag(a^-2, 1) with nu = 0.5; constant
/// 1e-2 I with nu(x) = 0.2 + 1.3 x_1; rotated 1e-4/1e-2 axes at angle
/// pi x_1 / 2 with nu = 0.5.
struct AnisotropyField {
  AnisotropyPreset preset = AnisotropyPreset::Anisotropic;
  double a = 1.0;

  Eigen::Matrix2d anisotropy(const Eigen::Vector2d& x) const;
  double smoothness(const Eigen::Vector2d& x) const;
};

/// sigma2 |A(x)|^{1/4} |A(x')|^{1/4} / |A~|^{1/2} M_{nu~}(Q^{1/2}) with
/// A~ = (A(x) + A(x'))/2, nu~ the mean smoothness, Q = d^T A~^{-1} d.
double nonstationary_matern(const Eigen::Vector2d& x, const Eigen::Vector2d& xp, double sigma2,
                            const AnisotropyField& field);

class NonstationaryMaternModel final : public CovarianceModel {
 public:
  NonstationaryMaternModel(InputsPtr inputs, double sigma2, AnisotropyField field);
  std::size_t size() const override { return n_; }
  std::string id() const override;
  const AnisotropyField& field() const { return field_; }

 protected:
  double evaluate(std::size_t i, std::size_t j) const override;

 private:
  std::size_t n_;
  double sigma2_;
  AnisotropyField field_;
  bool constant_smoothness_;
  // per item: x1, x2, A11, A12, A22, |A|^{1/4}, nu
  std::vector<std::array<double, 7>> items_;
};

/// Multivariate latent-dimension exponential: component c sits at latent
/// coordinate c * delta; K = sigma2 exp(-||x~ - x~'|| / range).
class LatentMultivariateModel final : public CovarianceModel {
 public:
  LatentMultivariateModel(InputsPtr inputs, double sigma2, double range, double delta);
  std::size_t size() const override { return n_; }
  std::string id() const override { return "multivariate-latent"; }

 protected:
  double evaluate(std::size_t i, std::size_t j) const override;

 private:
  std::size_t n_;
  std::size_t dim_;
  double sigma2_, range_;
  std::vector<double> points_;  // row-major, dim_ + 1 per item (last = latent)
};

/// Space-time exponential sigma2 exp(-||A^{-1}(x - x')||), A = diag(r_s, r_s, r_t).
class SpaceTimeExponentialModel final : public CovarianceModel {
 public:
  SpaceTimeExponentialModel(InputsPtr inputs, double sigma2, double range_space, double range_time);
  std::size_t size() const override { return n_; }
  std::string id() const override { return "spacetime-exponential"; }

 protected:
  double evaluate(std::size_t i, std::size_t j) const override;

 private:
  std::size_t n_;
  std::size_t dim_;
  double sigma2_;
  std::vector<double> points_;  // scaled by 1/r_s (space) and 1/r_t (time)
};

/// Hierarchical normal model over binary-tree leaves: cov = sum_{r=0}^{alpha}
/// sigma_r^2 where alpha is the depth of the deepest common ancestor.
class HierarchicalTreeModel final : public CovarianceModel {
 public:
  HierarchicalTreeModel(InputsPtr inputs, std::vector<double> level_variances);
  std::size_t size() const override { return leaves_.size(); }
  std::string id() const override { return "tree"; }

 protected:
  double evaluate(std::size_t i, std::size_t j) const override;

 private:
  std::size_t depth_;
  std::vector<std::uint64_t> leaves_;
  std::vector<double> cumulative_;  // cumulative_[a] = sum_{r<=a} sigma_r^2
};

/// Matern with a separate range per input dimension: coordinates, time (if
/// present) and a latent dimension separating components.
class MaternArdModel final : public CovarianceModel {
 public:
  MaternArdModel(InputsPtr inputs, double sigma2, double nu, std::vector<double> ranges,
                 double range_latent);
  std::size_t size() const override { return n_; }
  std::string id() const override { return "matern-ard"; }

 protected:
  double evaluate(std::size_t i, std::size_t j) const override;

 private:
  std::size_t n_;
  std::size_t dim_;
  double sigma2_, nu_;
  std::vector<double> points_;
};

// ---------------------------------------------------------------------------
// Family registry: a model id plus a parameter schema, bindable to inputs.

struct ModelFamily {
  std::string id;
  ParamVector defaults;
  /// Regression mean X beta with X from `mean_design`; beta names below.
  std::vector<std::string> mean_parameters;
  std::function<ModelPtr(const InputsPtr&, const ParamVector&)> bind;
};

const ModelFamily& model_family(std::string_view id);
std::vector<std::string> model_family_ids();

/// Intercept plus one indicator column per component label >= 1.
DenseMatrix mean_design(const InputSet& inputs);

}  // namespace cvecchia

#endif  // CVECCHIA_COVMODELS_HPP_
