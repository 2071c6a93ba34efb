#ifndef CVECCHIA_INCOMPLETE_CHOLESKY_HPP_
#define CVECCHIA_INCOMPLETE_CHOLESKY_HPP_

#include <cstddef>
#include <vector>

#include "cvecchia/linalg.hpp"

namespace cvecchia {

/// Incomplete factorization Lambda ~= R R^T of Lambda = U U^T + diag(extra),
/// with R upper triangular restricted to the symbolic pattern of U U^T (the
/// union of the c~(i) x c~(i) cliques of U's columns); fill outside it is
/// dropped.
///
/// The factorization runs in reverse index order, which is an up-looking
/// lower Cholesky of the reversed matrix: reversing a maximin ordering is the
/// ordering under which the precision factor stays sparse. A pattern that is
/// complete reproduces the exact factor.
class IncompleteCholesky {
 public:
  /// Throws NotPositiveDefinite if a pivot fails after three diagonal boosts
  /// (each at most 1e-10 of the diagonal entry).
  static IncompleteCholesky factor(const SparseFactor& u, const Vector& extra_diag);

  std::size_t size() const { return n_; }
  double logdet() const;
  /// x = R^{-1} b.
  Vector solve_factor(const Vector& b) const;
  /// x = R^{-T} b.
  Vector solve_factor_transpose(const Vector& b) const;
  /// Lambda~^{-1} b.
  Vector solve(const Vector& b) const { return solve_factor_transpose(solve_factor(b)); }
  int boosts() const { return boosts_; }
  std::size_t nonzeros() const { return values_.size(); }
  /// Dense R (upper triangular).
  DenseMatrix to_dense() const;

 private:
  // Row r of the reversed lower factor L (r = n-1-a); columns ascending,
  // diagonal last.
  std::size_t n_ = 0;
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> cols_;
  std::vector<double> values_;
  int boosts_ = 0;
};

}  // namespace cvecchia

#endif  // CVECCHIA_INCOMPLETE_CHOLESKY_HPP_
