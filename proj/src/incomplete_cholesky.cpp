#include "cvecchia/incomplete_cholesky.hpp"

#include <algorithm>
#include <cmath>

namespace cvecchia {

IncompleteCholesky IncompleteCholesky::factor(const SparseFactor& u, const Vector& extra_diag) {
  const std::size_t n = u.size();
  if (static_cast<std::size_t>(extra_diag.size()) != n) {
    throw DimensionMismatch("IncompleteCholesky: diagonal length differs from factor size");
  }
  auto rev = [n](std::size_t a) { return n - 1 - a; };

  // Symbolic pattern: reversed lower triangle of the clique union.
  std::vector<std::vector<std::size_t>> pattern(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& rows = u.column(k).rows;
    for (std::size_t p = 0; p < rows.size(); ++p) {
      for (std::size_t q = p; q < rows.size(); ++q) pattern[rev(rows[p])].push_back(rev(rows[q]));
    }
  }
  IncompleteCholesky ic;
  ic.n_ = n;
  ic.row_start_.assign(n + 1, 0);
  for (std::size_t r = 0; r < n; ++r) {
    auto& row = pattern[r];
    row.push_back(r);
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    ic.row_start_[r + 1] = ic.row_start_[r] + row.size();
  }
  ic.cols_.reserve(ic.row_start_[n]);
  for (auto& row : pattern) {
    ic.cols_.insert(ic.cols_.end(), row.begin(), row.end());
    std::vector<std::size_t>().swap(row);
  }
  ic.values_.assign(ic.cols_.size(), 0.0);

  auto slot = [&ic](std::size_t r, std::size_t s) {
    const auto first = ic.cols_.begin() + static_cast<std::ptrdiff_t>(ic.row_start_[r]);
    const auto last = ic.cols_.begin() + static_cast<std::ptrdiff_t>(ic.row_start_[r + 1]);
    return static_cast<std::size_t>(std::lower_bound(first, last, s) - ic.cols_.begin());
  };

  // Numeric values of Lambda on the pattern.
  for (std::size_t k = 0; k < n; ++k) {
    const auto& col = u.column(k);
    for (std::size_t p = 0; p < col.rows.size(); ++p) {
      for (std::size_t q = p; q < col.rows.size(); ++q) {
        ic.values_[slot(rev(col.rows[p]), rev(col.rows[q]))] += col.values[p] * col.values[q];
      }
    }
  }
  for (std::size_t a = 0; a < n; ++a) ic.values_[ic.row_start_[rev(a) + 1] - 1] += extra_diag[static_cast<Eigen::Index>(a)];

  // Up-looking factorization; w holds row r (Lambda values, then L values).
  std::vector<double> w(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t begin = ic.row_start_[r], end = ic.row_start_[r + 1];
    const std::size_t diag = end - 1;
    for (std::size_t t = begin; t < end; ++t) w[ic.cols_[t]] = ic.values_[t];
    const double lambda_rr = w[r];
    double sumsq = 0.0;
    for (std::size_t t = begin; t < diag; ++t) {
      const std::size_t s = ic.cols_[t];
      double acc = 0.0;
      const std::size_t sb = ic.row_start_[s], sd = ic.row_start_[s + 1] - 1;
      for (std::size_t v = sb; v < sd; ++v) acc += ic.values_[v] * w[ic.cols_[v]];
      const double l = (w[s] - acc) / ic.values_[sd];
      w[s] = l;
      ic.values_[t] = l;
      sumsq += l * l;
    }
    double d = lambda_rr - sumsq;
    int attempt = 0;
    while (!(d > kPivotTolerance * std::fabs(lambda_rr))) {
      if (++attempt > 3) {
        throw NotPositiveDefinite("incomplete Cholesky: pivot failed after diagonal boosting", rev(r));
      }
      d = lambda_rr + 1e-10 * std::fabs(lambda_rr) * std::pow(10.0, attempt - 3) - sumsq;
      ++ic.boosts_;
    }
    ic.values_[diag] = std::sqrt(d);
    for (std::size_t t = begin; t < end; ++t) w[ic.cols_[t]] = 0.0;
  }
  return ic;
}

double IncompleteCholesky::logdet() const {
  double s = 0.0;
  for (std::size_t r = 0; r < n_; ++r) s += std::log(values_[row_start_[r + 1] - 1]);
  return 2.0 * s;
}

Vector IncompleteCholesky::solve_factor(const Vector& b) const {
  if (static_cast<std::size_t>(b.size()) != n_) throw DimensionMismatch("IncompleteCholesky::solve_factor");
  std::vector<double> x(n_);
  for (std::size_t r = 0; r < n_; ++r) {
    const std::size_t diag = row_start_[r + 1] - 1;
    double acc = b[static_cast<Eigen::Index>(n_ - 1 - r)];
    for (std::size_t t = row_start_[r]; t < diag; ++t) acc -= values_[t] * x[cols_[t]];
    x[r] = acc / values_[diag];
  }
  Vector out(static_cast<Eigen::Index>(n_));
  for (std::size_t r = 0; r < n_; ++r) out[static_cast<Eigen::Index>(n_ - 1 - r)] = x[r];
  return out;
}

Vector IncompleteCholesky::solve_factor_transpose(const Vector& b) const {
  if (static_cast<std::size_t>(b.size()) != n_) throw DimensionMismatch("IncompleteCholesky::solve_factor_transpose");
  std::vector<double> x(n_);
  for (std::size_t r = 0; r < n_; ++r) x[r] = b[static_cast<Eigen::Index>(n_ - 1 - r)];
  for (std::size_t r = n_; r-- > 0;) {
    const std::size_t diag = row_start_[r + 1] - 1;
    x[r] /= values_[diag];
    for (std::size_t t = row_start_[r]; t < diag; ++t) x[cols_[t]] -= values_[t] * x[r];
  }
  Vector out(static_cast<Eigen::Index>(n_));
  for (std::size_t r = 0; r < n_; ++r) out[static_cast<Eigen::Index>(n_ - 1 - r)] = x[r];
  return out;
}

DenseMatrix IncompleteCholesky::to_dense() const {
  const auto n = static_cast<Eigen::Index>(n_);
  DenseMatrix rmat = DenseMatrix::Zero(n, n);
  for (std::size_t r = 0; r < n_; ++r) {
    for (std::size_t t = row_start_[r]; t < row_start_[r + 1]; ++t) {
      rmat(n - 1 - static_cast<Eigen::Index>(r), n - 1 - static_cast<Eigen::Index>(cols_[t])) = values_[t];
    }
  }
  return rmat;
}

}  // namespace cvecchia
