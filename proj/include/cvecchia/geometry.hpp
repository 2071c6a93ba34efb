#ifndef CVECCHIA_GEOMETRY_HPP_
#define CVECCHIA_GEOMETRY_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cvecchia/covmodels.hpp"
#include "cvecchia/inputs.hpp"
#include "cvecchia/linalg.hpp"

namespace cvecchia {

/// A distance over n indexed items.
///
/// Orderings and neighbor searches compare `rank_key`, which must be a
/// strictly increasing function of `distance`. Ties are broken by the
/// smallest item index everywhere.
class Metric {
 public:
  virtual ~Metric() = default;
  virtual std::size_t size() const = 0;
  virtual double distance(std::size_t i, std::size_t j) const = 0;
  virtual double rank_key(std::size_t i, std::size_t j) const { return distance(i, j); }
};

using MetricPtr = std::shared_ptr<const Metric>;

/// ||x_i - x_j|| over the rows of `points`.
MetricPtr euclidean_metric(DenseMatrix points);
/// Euclidean over space (and time, when present) of `inputs`.
MetricPtr euclidean_metric(const InputSet& inputs);

/// sqrt(1 - |rho_ij|) with rho from `model` (clamped to [-1, 1]). Its rank
/// key is -log|rho|, an equivalent ordering that does not saturate when
/// rho underflows the resolution of 1 - |rho|.
MetricPtr correlation_metric(ModelPtr model);

/// |t_i - t_j| * time_weight + ||s_i - s_j||: nearest in time, then space.
MetricPtr time_space_metric(const InputSet& inputs, double time_weight = 1e3);

/// Symmetric pseudo-random distances in [0, 1) from a seeded pair hash.
MetricPtr random_metric(std::size_t n, std::uint64_t seed);

/// Metric over `indices` of `base` (item k of the view is base item indices[k]).
MetricPtr metric_view(MetricPtr base, std::vector<std::size_t> indices);

inline double distance(const Metric& metric, std::size_t i, std::size_t j) {
  return metric.distance(i, j);
}

/// Permutation plus conditioning sets. `neighbors[i]` holds the conditioning
/// positions (ascending, all < i) of ordered position i.
struct OrderedApprox {
  std::vector<std::size_t> order;
  std::vector<std::vector<std::size_t>> neighbors;
  std::size_t m = 0;

  std::size_t size() const { return order.size(); }
  /// Throws InvalidShape when the structural invariants do not hold.
  void validate() const;
};

bool operator==(const OrderedApprox& a, const OrderedApprox& b);

/// Exact greedy maximin ordering; each step picks the item furthest (by its
/// minimum distance) from all previously ordered items.
std::vector<std::size_t> maximin_order(const Metric& metric, std::optional<std::size_t> first = 0);

/// Nearest-m previously ordered positions for every position.
OrderedApprox nearest_neighbors(const Metric& metric, std::vector<std::size_t> order, std::size_t m);

/// How candidate neighbors are grouped by component label.
enum class GroupMode {
  Joint,     // ignore labels
  Separate,  // same label only
  Divided,   // floor(m/p) per label, remainder to the lowest labels
};

/// Nearest-neighbor conditioning with component grouping. `labels[i]` is the
/// label of metric item i.
OrderedApprox grouped_neighbors(const Metric& metric, std::vector<std::size_t> order, std::size_t m,
                                std::span<const int> labels, GroupMode mode);

/// The up-to-m nearest of `candidates` to `target` (metric item indices),
/// sorted by (key, index). With labels, applies `mode` grouping.
std::vector<std::size_t> select_nearest(const Metric& metric, std::size_t target,
                                        std::span<const std::size_t> candidates, std::size_t m,
                                        std::span<const int> labels = {}, GroupMode mode = GroupMode::Joint);

/// Maximin ordering of the prediction items n_obs..n_obs+n_pred-1 given all
/// observed items 0..n_obs-1 as already ordered. Returns prediction indices
/// (0-based within the predictions).
std::vector<std::size_t> restricted_order(const Metric& metric, std::size_t n_obs, std::size_t n_pred);

/// Conditioning sets for predictions: prediction position k gets the nearest
/// m among all observed items and predictions at positions < k.
struct JointNeighbors {
  std::vector<std::vector<std::size_t>> observed;    // observed item indices, ascending
  std::vector<std::vector<std::size_t>> unobserved;  // prediction positions, ascending
};

JointNeighbors joint_neighbors(const Metric& metric, std::size_t n_obs, std::span<const std::size_t> pred_order,
                               std::size_t m, std::span<const int> labels = {},
                               GroupMode mode = GroupMode::Joint);

}  // namespace cvecchia

#endif  // CVECCHIA_GEOMETRY_HPP_
