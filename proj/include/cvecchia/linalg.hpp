#ifndef CVECCHIA_LINALG_HPP_
#define CVECCHIA_LINALG_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cvecchia/errors.hpp"

namespace cvecchia {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;

enum class Triangle { Lower, Upper };

/// Relative pivot tolerance: a pivot below kPivotTolerance * max(diag(A))
/// is treated as loss of positive definiteness.
inline constexpr double kPivotTolerance = 1e-12;

/// Lower Cholesky factor of (A + A^T) / 2. Throws NotPositiveDefinite.
DenseMatrix cholesky(const DenseMatrix& a);

/// In-place variant used on hot paths; `a` is overwritten by its lower factor
/// (strict upper part is left unspecified). Returns false instead of throwing.
bool cholesky_in_place(DenseMatrix& a);

/// Solves T x = b for triangular T. Throws SingularMatrix on a zero diagonal.
Vector solve_triangular(const DenseMatrix& t, const Vector& b, Triangle side);
DenseMatrix solve_triangular(const DenseMatrix& t, const DenseMatrix& b, Triangle side);

/// Solves A x = b given the lower Cholesky factor L of A.
Vector cholesky_solve(const DenseMatrix& l, const Vector& b);

/// log det(A) = 2 sum log L_ii for A = L L^T.
double logdet_from_cholesky(const DenseMatrix& l);

/// Column-sparse upper-triangular factor U, typically with U U^T = K^-1.
///
/// Column i stores sorted row indices, all <= i, with the diagonal entry last.
class SparseFactor {
 public:
  struct Column {
    std::vector<std::size_t> rows;
    std::vector<double> values;
  };

  SparseFactor() = default;
  explicit SparseFactor(std::size_t n) : columns_(n) {}

  std::size_t size() const { return columns_.size(); }

  /// Validates the column (sorted, upper triangular, positive diagonal).
  void set_column(std::size_t i, std::vector<std::size_t> rows, std::vector<double> values);

  const Column& column(std::size_t i) const { return columns_[i]; }
  double diagonal(std::size_t i) const { return columns_[i].values.back(); }

  /// Largest number of strictly-upper entries across columns.
  std::size_t max_offdiagonal() const;
  std::size_t nonzeros() const;

  DenseMatrix to_dense() const;

 private:
  std::vector<Column> columns_;
};

/// U x (transpose == false) or U^T x (transpose == true) from stored entries.
Vector sparse_factor_apply(const SparseFactor& u, const Vector& x, bool transpose);

/// Applies a permutation: out[k] = x[order[k]].
Vector gather(const Vector& x, std::span<const std::size_t> order);
/// Inverse of gather: out[order[k]] = x[k].
Vector scatter(const Vector& x, std::span<const std::size_t> order);

}  // namespace cvecchia

#endif  // CVECCHIA_LINALG_HPP_
