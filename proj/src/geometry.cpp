#include "cvecchia/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "cvecchia/rng.hpp"

namespace cvecchia {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class EuclideanMetric final : public Metric {
 public:
  explicit EuclideanMetric(DenseMatrix points) : n_(static_cast<std::size_t>(points.rows())),
                                                 dim_(static_cast<std::size_t>(points.cols())) {
    // Row-major copy for cache-friendly pair evaluation.
    data_.resize(n_ * dim_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t k = 0; k < dim_; ++k) {
        data_[i * dim_ + k] = points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      }
    }
  }
  std::size_t size() const override { return n_; }
  double distance(std::size_t i, std::size_t j) const override {
    const double* a = &data_[i * dim_];
    const double* b = &data_[j * dim_];
    double ss = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) ss += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(ss);
  }

 private:
  std::size_t n_, dim_;
  std::vector<double> data_;
};

class CorrelationMetric final : public Metric {
 public:
  explicit CorrelationMetric(ModelPtr model) : model_(std::move(model)), sd_(model_->size()) {
    for (std::size_t i = 0; i < sd_.size(); ++i) {
      const double v = (*model_)(i, i);
      if (!(v > 0.0)) throw InvalidParameter("correlation metric: non-positive variance");
      sd_[i] = std::sqrt(v);
    }
  }
  std::size_t size() const override { return sd_.size(); }
  double abs_rho(std::size_t i, std::size_t j) const {
    const double rho = (*model_)(i, j) / (sd_[i] * sd_[j]);
    return std::min(1.0, std::fabs(rho));
  }
  double distance(std::size_t i, std::size_t j) const override {
    if (i == j) return 0.0;
    return std::sqrt(1.0 - abs_rho(i, j));
  }
  double rank_key(std::size_t i, std::size_t j) const override {
    if (i == j) return 0.0;
    const double r = abs_rho(i, j);
    return r > 0.0 ? -std::log(r) : kInf;
  }

 private:
  ModelPtr model_;
  std::vector<double> sd_;
};

class TimeSpaceMetric final : public Metric {
 public:
  TimeSpaceMetric(const InputSet& inputs, double weight)
      : space_(inputs.coords()), times_(inputs.times()), weight_(weight) {}
  std::size_t size() const override { return space_.size(); }
  double distance(std::size_t i, std::size_t j) const override {
    const double dt = times_.empty() ? 0.0 : std::fabs(times_[i] - times_[j]);
    return dt * weight_ + space_.distance(i, j);
  }

 private:
  EuclideanMetric space_;
  std::vector<double> times_;
  double weight_;
};

class RandomMetric final : public Metric {
 public:
  RandomMetric(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}
  std::size_t size() const override { return n_; }
  double distance(std::size_t i, std::size_t j) const override {
    if (i == j) return 0.0;
    const std::uint64_t a = std::min(i, j), b = std::max(i, j);
    const std::uint64_t h = splitmix64(seed_ ^ splitmix64((a << 32) ^ b));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
};

class MetricView final : public Metric {
 public:
  MetricView(MetricPtr base, std::vector<std::size_t> idx) : base_(std::move(base)), idx_(std::move(idx)) {}
  std::size_t size() const override { return idx_.size(); }
  double distance(std::size_t i, std::size_t j) const override { return base_->distance(idx_[i], idx_[j]); }
  double rank_key(std::size_t i, std::size_t j) const override { return base_->rank_key(idx_[i], idx_[j]); }

 private:
  MetricPtr base_;
  std::vector<std::size_t> idx_;
};

using Keyed = std::pair<double, std::size_t>;

void take_smallest(std::vector<Keyed>& keyed, std::size_t m) {
  if (keyed.size() > m) {
    std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(m), keyed.end());
    keyed.resize(m);
  }
  std::sort(keyed.begin(), keyed.end());
}

int label_count(std::span<const int> labels) {
  int p = 1;
  for (int l : labels) p = std::max(p, l + 1);
  return p;
}

std::vector<std::size_t> select_impl(const Metric& metric, std::size_t target,
                                     std::span<const std::size_t> candidates, std::size_t m,
                                     std::span<const int> labels, GroupMode mode, int p) {
  std::vector<std::size_t> out;
  if (m == 0 || candidates.empty()) return out;
  if (labels.empty()) mode = GroupMode::Joint;
  std::vector<Keyed> keyed;
  keyed.reserve(candidates.size());
  for (auto c : candidates) {
    if (mode == GroupMode::Separate && labels[c] != labels[target]) continue;
    keyed.emplace_back(metric.rank_key(target, c), c);
  }
  if (mode != GroupMode::Divided) {
    take_smallest(keyed, m);
  } else {
    std::vector<std::vector<Keyed>> by_label(static_cast<std::size_t>(p));
    for (const auto& kv : keyed) by_label[static_cast<std::size_t>(labels[kv.second])].push_back(kv);
    keyed.clear();
    const std::size_t base = m / static_cast<std::size_t>(p);
    const std::size_t extra = m % static_cast<std::size_t>(p);
    for (std::size_t l = 0; l < by_label.size(); ++l) {
      take_smallest(by_label[l], base + (l < extra ? 1 : 0));
      keyed.insert(keyed.end(), by_label[l].begin(), by_label[l].end());
    }
    std::sort(keyed.begin(), keyed.end());
  }
  out.reserve(keyed.size());
  for (const auto& kv : keyed) out.push_back(kv.second);
  return out;
}

}  // namespace

MetricPtr euclidean_metric(DenseMatrix points) { return std::make_shared<EuclideanMetric>(std::move(points)); }

MetricPtr euclidean_metric(const InputSet& inputs) {
  if (!inputs.has_coords()) throw InvalidShape("euclidean metric needs coordinate inputs");
  return euclidean_metric(inputs.spacetime_points());
}

MetricPtr correlation_metric(ModelPtr model) { return std::make_shared<CorrelationMetric>(std::move(model)); }

MetricPtr time_space_metric(const InputSet& inputs, double time_weight) {
  if (!inputs.has_coords()) throw InvalidShape("time-space metric needs coordinate inputs");
  return std::make_shared<TimeSpaceMetric>(inputs, time_weight);
}

MetricPtr random_metric(std::size_t n, std::uint64_t seed) { return std::make_shared<RandomMetric>(n, seed); }

MetricPtr metric_view(MetricPtr base, std::vector<std::size_t> indices) {
  for (auto i : indices) {
    if (i >= base->size()) throw DimensionMismatch("metric_view: index out of range");
  }
  return std::make_shared<MetricView>(std::move(base), std::move(indices));
}

void OrderedApprox::validate() const {
  const std::size_t n = order.size();
  std::vector<char> seen(n, 0);
  for (auto i : order) {
    if (i >= n || seen[i]) throw InvalidShape("OrderedApprox: order is not a permutation");
    seen[i] = 1;
  }
  if (neighbors.size() != n) throw InvalidShape("OrderedApprox: neighbor list count");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = neighbors[i];
    if (c.size() > m) throw InvalidShape("OrderedApprox: conditioning set larger than m");
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] >= i || (k > 0 && c[k] <= c[k - 1])) {
        throw InvalidShape("OrderedApprox: conditioning set not ascending previous positions");
      }
    }
  }
}

bool operator==(const OrderedApprox& a, const OrderedApprox& b) {
  return a.m == b.m && a.order == b.order && a.neighbors == b.neighbors;
}

std::vector<std::size_t> maximin_order(const Metric& metric, std::optional<std::size_t> first) {
  const std::size_t n = metric.size();
  std::vector<std::size_t> order;
  if (n == 0) return order;
  const std::size_t start = first.value_or(0);
  if (start >= n) throw DimensionMismatch("maximin_order: first index out of range");
  order.reserve(n);
  std::vector<double> min_key(n, kInf);
  std::vector<char> taken(n, 0);
  std::size_t next = start;
  for (std::size_t k = 0; k < n; ++k) {
    order.push_back(next);
    taken[next] = 1;
    if (k + 1 == n) break;
    std::size_t best = n;
    double best_key = -kInf;
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      const double d = metric.rank_key(next, j);
      if (d < min_key[j]) min_key[j] = d;
      if (best == n || min_key[j] > best_key) {
        best = j;
        best_key = min_key[j];
      }
    }
    next = best;
  }
  return order;
}

OrderedApprox grouped_neighbors(const Metric& metric, std::vector<std::size_t> order, std::size_t m,
                                std::span<const int> labels, GroupMode mode) {
  const std::size_t n = order.size();
  if (n != metric.size()) throw DimensionMismatch("nearest_neighbors: order size differs from metric size");
  if (!labels.empty() && labels.size() != n) throw DimensionMismatch("nearest_neighbors: label count");
  OrderedApprox out;
  out.m = m;
  out.neighbors.resize(n);
  std::vector<std::size_t> position(n);
  for (std::size_t k = 0; k < n; ++k) position[order[k]] = k;
  const int p = label_count(labels);
  const std::span<const std::size_t> all(order);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t ii = 1; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto chosen = select_impl(metric, order[i], all.first(i), m, labels, mode, p);
    auto& c = out.neighbors[i];
    c.reserve(chosen.size());
    for (auto item : chosen) c.push_back(position[item]);
    std::sort(c.begin(), c.end());
  }
  out.order = std::move(order);
  return out;
}

OrderedApprox nearest_neighbors(const Metric& metric, std::vector<std::size_t> order, std::size_t m) {
  return grouped_neighbors(metric, std::move(order), m, {}, GroupMode::Joint);
}

std::vector<std::size_t> select_nearest(const Metric& metric, std::size_t target,
                                        std::span<const std::size_t> candidates, std::size_t m,
                                        std::span<const int> labels, GroupMode mode) {
  return select_impl(metric, target, candidates, m, labels, mode, label_count(labels));
}

std::vector<std::size_t> restricted_order(const Metric& metric, std::size_t n_obs, std::size_t n_pred) {
  if (metric.size() != n_obs + n_pred) throw DimensionMismatch("restricted_order: metric size");
  std::vector<double> min_key(n_pred, kInf);
  for (std::size_t k = 0; k < n_pred; ++k) {
    for (std::size_t j = 0; j < n_obs; ++j) {
      min_key[k] = std::min(min_key[k], metric.rank_key(j, n_obs + k));
    }
  }
  std::vector<std::size_t> order;
  order.reserve(n_pred);
  std::vector<char> taken(n_pred, 0);
  for (std::size_t step = 0; step < n_pred; ++step) {
    std::size_t best = n_pred;
    for (std::size_t k = 0; k < n_pred; ++k) {
      if (taken[k]) continue;
      if (best == n_pred || min_key[k] > min_key[best]) best = k;
    }
    order.push_back(best);
    taken[best] = 1;
    for (std::size_t k = 0; k < n_pred; ++k) {
      if (!taken[k]) min_key[k] = std::min(min_key[k], metric.rank_key(n_obs + best, n_obs + k));
    }
  }
  return order;
}

JointNeighbors joint_neighbors(const Metric& metric, std::size_t n_obs, std::span<const std::size_t> pred_order,
                               std::size_t m, std::span<const int> labels, GroupMode mode) {
  const std::size_t n_pred = pred_order.size();
  if (metric.size() != n_obs + n_pred) throw DimensionMismatch("joint_neighbors: metric size");
  if (!labels.empty() && labels.size() != metric.size()) throw DimensionMismatch("joint_neighbors: label count");
  JointNeighbors out;
  out.observed.resize(n_pred);
  out.unobserved.resize(n_pred);
  std::vector<std::size_t> position(n_pred);
  for (std::size_t q = 0; q < n_pred; ++q) position[pred_order[q]] = q;
  std::vector<std::size_t> candidates(n_obs);
  for (std::size_t j = 0; j < n_obs; ++j) candidates[j] = j;
  const int p = label_count(labels);
  for (std::size_t k = 0; k < n_pred; ++k) {
    const std::size_t target = n_obs + pred_order[k];
    for (auto item : select_impl(metric, target, candidates, m, labels, mode, p)) {
      if (item < n_obs) {
        out.observed[k].push_back(item);
      } else {
        out.unobserved[k].push_back(position[item - n_obs]);
      }
    }
    std::sort(out.observed[k].begin(), out.observed[k].end());
    std::sort(out.unobserved[k].begin(), out.unobserved[k].end());
    candidates.push_back(target);
  }
  return out;
}

}  // namespace cvecchia
