#include "cvecchia/linalg.hpp"

#include <cmath>
#include <sstream>

namespace cvecchia {

namespace {

// Unblocked right-looking Cholesky on the lower triangle. Faster than LLT for
// the small conditioning blocks that dominate factor construction.
bool cholesky_small(DenseMatrix& a, double tolerance) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= a(j, k) * a(j, k);
    if (!(pivot >= tolerance) || pivot <= 0.0) return false;
    const double ljj = std::sqrt(pivot);
    a(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / ljj;
    }
  }
  return true;
}

}  // namespace

bool cholesky_in_place(DenseMatrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) return false;
  const double max_diag = a.diagonal().maxCoeff();
  if (!(max_diag > 0.0)) return false;
  const double tolerance = kPivotTolerance * max_diag;
  if (a.rows() <= 64) return cholesky_small(a, tolerance);

  Eigen::LLT<Eigen::Ref<DenseMatrix>, Eigen::Lower> llt(a);
  if (llt.info() != Eigen::Success) return false;
  const double root_tol = std::sqrt(tolerance);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (!(a(i, i) >= root_tol)) return false;
  }
  return true;
}

DenseMatrix cholesky(const DenseMatrix& a) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("cholesky: matrix is not square");
  }
  if (a.rows() == 0) throw DimensionMismatch("cholesky: empty matrix");
  DenseMatrix l = 0.5 * (a + a.transpose());
  if (!cholesky_in_place(l)) {
    throw NotPositiveDefinite("cholesky: pivot below tolerance");
  }
  l.triangularView<Eigen::StrictlyUpper>().setZero();
  return l;
}

namespace {

void check_triangular_diagonal(const DenseMatrix& t) {
  if (t.rows() != t.cols()) throw DimensionMismatch("solve_triangular: matrix is not square");
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    if (t(i, i) == 0.0) {
      std::ostringstream msg;
      msg << "solve_triangular: zero diagonal at " << i;
      throw SingularMatrix(msg.str());
    }
  }
}

}  // namespace

Vector solve_triangular(const DenseMatrix& t, const Vector& b, Triangle side) {
  check_triangular_diagonal(t);
  if (t.rows() != b.size()) throw DimensionMismatch("solve_triangular: rhs size");
  if (side == Triangle::Lower) return t.triangularView<Eigen::Lower>().solve(b);
  return t.triangularView<Eigen::Upper>().solve(b);
}

DenseMatrix solve_triangular(const DenseMatrix& t, const DenseMatrix& b, Triangle side) {
  check_triangular_diagonal(t);
  if (t.rows() != b.rows()) throw DimensionMismatch("solve_triangular: rhs rows");
  if (side == Triangle::Lower) return t.triangularView<Eigen::Lower>().solve(b);
  return t.triangularView<Eigen::Upper>().solve(b);
}

Vector cholesky_solve(const DenseMatrix& l, const Vector& b) {
  if (l.rows() != b.size()) throw DimensionMismatch("cholesky_solve: rhs size");
  Vector x = l.triangularView<Eigen::Lower>().solve(b);
  l.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  return x;
}

double logdet_from_cholesky(const DenseMatrix& l) {
  return 2.0 * l.diagonal().array().log().sum();
}

void SparseFactor::set_column(std::size_t i, std::vector<std::size_t> rows,
                              std::vector<double> values) {
  if (i >= columns_.size()) throw DimensionMismatch("SparseFactor: column out of range");
  if (rows.size() != values.size() || rows.empty()) {
    throw DimensionMismatch("SparseFactor: rows/values size");
  }
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (rows[k - 1] >= rows[k]) throw InvalidParameter("SparseFactor: rows not strictly sorted");
  }
  if (rows.back() != i) throw InvalidParameter("SparseFactor: diagonal entry missing");
  if (!(values.back() > 0.0)) throw NotPositiveDefinite("SparseFactor: nonpositive diagonal", i);
  columns_[i].rows = std::move(rows);
  columns_[i].values = std::move(values);
}

std::size_t SparseFactor::max_offdiagonal() const {
  std::size_t best = 0;
  for (const auto& c : columns_) best = std::max(best, c.rows.empty() ? 0 : c.rows.size() - 1);
  return best;
}

std::size_t SparseFactor::nonzeros() const {
  std::size_t total = 0;
  for (const auto& c : columns_) total += c.rows.size();
  return total;
}

DenseMatrix SparseFactor::to_dense() const {
  const auto n = static_cast<Eigen::Index>(columns_.size());
  DenseMatrix d = DenseMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = columns_[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < c.rows.size(); ++k) {
      d(static_cast<Eigen::Index>(c.rows[k]), i) = c.values[k];
    }
  }
  return d;
}

Vector sparse_factor_apply(const SparseFactor& u, const Vector& x, bool transpose) {
  const std::size_t n = u.size();
  if (static_cast<std::size_t>(x.size()) != n) {
    throw DimensionMismatch("sparse_factor_apply: vector length differs from factor size");
  }
  Vector out = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = u.column(i);
    if (transpose) {
      double s = 0.0;
      for (std::size_t k = 0; k < c.rows.size(); ++k) s += c.values[k] * x[c.rows[k]];
      out[i] = s;
    } else {
      const double xi = x[i];
      for (std::size_t k = 0; k < c.rows.size(); ++k) out[c.rows[k]] += c.values[k] * xi;
    }
  }
  return out;
}

Vector gather(const Vector& x, std::span<const std::size_t> order) {
  Vector out(static_cast<Eigen::Index>(order.size()));
  for (std::size_t k = 0; k < order.size(); ++k) out[k] = x[order[k]];
  return out;
}

Vector scatter(const Vector& x, std::span<const std::size_t> order) {
  Vector out(static_cast<Eigen::Index>(order.size()));
  for (std::size_t k = 0; k < order.size(); ++k) out[order[k]] = x[k];
  return out;
}

}  // namespace cvecchia
