#ifndef CVECCHIA_STRATEGY_HPP_
#define CVECCHIA_STRATEGY_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cvecchia/covmodels.hpp"
#include "cvecchia/geometry.hpp"

namespace cvecchia {

/// An ordering id combined with a conditioning id, e.g. "C-MM+C-NN".
/// The special strategy "exact" means dense computation without Vecchia.
struct Strategy {
  std::string ordering;
  std::string conditioning;

  bool exact() const { return ordering == "exact"; }
  std::string name() const { return exact() ? "exact" : ordering + "+" + conditioning; }
};

Strategy parse_strategy(std::string_view text);

/// Orderings: C-MM, E-MM, X-ord, Y-ord, T-ord, R-ord, L-ord, S-E-MM.
const std::vector<std::string>& ordering_ids();
/// Conditionings: C-NN, E-NN, T-NN, J-E-NN, S-E-NN, D-E-NN, S-C-NN, J-C-NN, R-N.
const std::vector<std::string>& conditioning_ids();

/// What a strategy may consult: the inputs (for Euclidean/coordinate rules),
/// the covariance model (for correlation rules; pass K + D for the naive noisy
/// path) and a seed (for random rules).
struct StrategyContext {
  InputsPtr inputs;
  ModelPtr model;
  std::uint64_t seed = 0;
};

OrderedApprox build_skeleton(const Strategy& strategy, const StrategyContext& ctx, std::size_t m);

/// Orders and conditions the observed items 0..n_obs-1 and the prediction
/// items n_obs.. of `ctx` (which spans both).
struct PredictionSkeleton {
  OrderedApprox observed;
  /// Prediction indices (0-based within the predictions) in joint order.
  std::vector<std::size_t> pred_order;
  JointNeighbors conditioning;
};

PredictionSkeleton build_prediction_skeleton(const Strategy& strategy, const StrategyContext& ctx,
                                             std::size_t n_obs, std::size_t m);

}  // namespace cvecchia

#endif  // CVECCHIA_STRATEGY_HPP_
