#include "cvecchia/strategy.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "cvecchia/rng.hpp"

namespace cvecchia {

namespace {

bool contains(const std::vector<std::string>& ids, const std::string& id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

std::vector<std::size_t> iota_vec(std::size_t n, std::size_t start = 0) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), start);
  return v;
}

std::span<const int> labels_of(const InputSet& in) { return {in.components().data(), in.components().size()}; }

// Lexicographic sort key for the coordinate orderings.
std::array<double, 4> coordinate_key(const std::string& id, const InputSet& in, std::size_t i) {
  const double x1 = in.coord(i, 0);
  const double x2 = in.spatial_dim() > 1 ? in.coord(i, 1) : 0.0;
  if (id == "X-ord") return {x1, x2, 0.0, 0.0};
  if (id == "Y-ord") return {x2, x1, 0.0, 0.0};
  const double t = in.has_time() ? in.time(i) : 0.0;
  return {static_cast<double>(in.component(i)), t, x2, x1};
}

void sort_by_coordinates(const std::string& id, const InputSet& in, std::vector<std::size_t>& items) {
  if (!in.has_coords()) throw InvalidShape(id + " needs coordinate inputs");
  std::stable_sort(items.begin(), items.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = coordinate_key(id, in, a), kb = coordinate_key(id, in, b);
    if (ka != kb) return ka < kb;
    return a < b;
  });
}

bool is_coordinate_order(const std::string& id) { return id == "X-ord" || id == "Y-ord" || id == "T-ord"; }

std::uint64_t ordering_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x6f72646572ULL); }
std::uint64_t conditioning_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x636f6e64ULL); }

MetricPtr ordering_metric(const std::string& id, const StrategyContext& ctx) {
  if (id == "C-MM") return correlation_metric(ctx.model);
  return euclidean_metric(*ctx.inputs);
}

std::vector<int> sorted_labels(const InputSet& in) {
  std::vector<int> labels(in.components().begin(), in.components().end());
  if (labels.empty()) labels.push_back(0);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

std::vector<std::size_t> order_items(const std::string& id, const StrategyContext& ctx) {
  const std::size_t n = ctx.inputs->size();
  if (id == "C-MM" || id == "E-MM") return maximin_order(*ordering_metric(id, ctx), 0);
  if (id == "S-E-MM") {
    auto metric = euclidean_metric(*ctx.inputs);
    std::vector<std::size_t> out;
    for (int label : sorted_labels(*ctx.inputs)) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (ctx.inputs->component(i) == label) members.push_back(i);
      }
      for (auto k : maximin_order(*metric_view(metric, members), 0)) out.push_back(members[k]);
    }
    return out;
  }
  if (is_coordinate_order(id)) {
    auto items = iota_vec(n);
    sort_by_coordinates(id, *ctx.inputs, items);
    return items;
  }
  if (id == "R-ord") {
    Rng rng(ordering_seed(ctx.seed));
    return random_permutation(n, rng);
  }
  if (id == "L-ord") return iota_vec(n);
  throw UnknownIdentifier("unknown ordering '" + id + "'");
}

struct Conditioning {
  MetricPtr metric;
  GroupMode mode = GroupMode::Joint;
};

Conditioning conditioning_rule(const std::string& id, const StrategyContext& ctx) {
  if (id == "C-NN" || id == "J-C-NN") return {correlation_metric(ctx.model), GroupMode::Joint};
  if (id == "S-C-NN") return {correlation_metric(ctx.model), GroupMode::Separate};
  if (id == "E-NN" || id == "J-E-NN") return {euclidean_metric(*ctx.inputs), GroupMode::Joint};
  if (id == "S-E-NN") return {euclidean_metric(*ctx.inputs), GroupMode::Separate};
  if (id == "D-E-NN") return {euclidean_metric(*ctx.inputs), GroupMode::Divided};
  if (id == "T-NN") return {time_space_metric(*ctx.inputs), GroupMode::Joint};
  if (id == "R-N") return {random_metric(ctx.inputs->size(), conditioning_seed(ctx.seed)), GroupMode::Joint};
  throw UnknownIdentifier("unknown conditioning '" + id + "'");
}

void check_context(const StrategyContext& ctx) {
  if (!ctx.inputs) throw InvalidShape("strategy context needs inputs");
  if (ctx.model && ctx.model->size() != ctx.inputs->size()) {
    throw DimensionMismatch("strategy context: model and inputs differ in size");
  }
}

}  // namespace

Strategy parse_strategy(std::string_view text) {
  if (text == "exact") return {"exact", ""};
  const auto plus = text.find('+');
  if (plus == std::string_view::npos) throw UnknownIdentifier("strategy '" + std::string(text) + "' lacks '+'");
  Strategy s{std::string(text.substr(0, plus)), std::string(text.substr(plus + 1))};
  if (!contains(ordering_ids(), s.ordering)) throw UnknownIdentifier("unknown ordering '" + s.ordering + "'");
  if (!contains(conditioning_ids(), s.conditioning)) {
    throw UnknownIdentifier("unknown conditioning '" + s.conditioning + "'");
  }
  return s;
}

const std::vector<std::string>& ordering_ids() {
  static const std::vector<std::string> ids = {"C-MM", "E-MM", "X-ord", "Y-ord", "T-ord", "R-ord", "L-ord", "S-E-MM"};
  return ids;
}

const std::vector<std::string>& conditioning_ids() {
  static const std::vector<std::string> ids = {"C-NN",   "E-NN",   "T-NN",   "J-E-NN", "S-E-NN",
                                               "D-E-NN", "S-C-NN", "J-C-NN", "R-N"};
  return ids;
}

OrderedApprox build_skeleton(const Strategy& strategy, const StrategyContext& ctx, std::size_t m) {
  check_context(ctx);
  if (strategy.exact()) {
    const std::size_t n = ctx.inputs->size();
    return nearest_neighbors(*random_metric(n, 0), iota_vec(n), n == 0 ? 0 : n - 1);
  }
  auto order = order_items(strategy.ordering, ctx);
  const auto rule = conditioning_rule(strategy.conditioning, ctx);
  return grouped_neighbors(*rule.metric, std::move(order), m, labels_of(*ctx.inputs), rule.mode);
}

PredictionSkeleton build_prediction_skeleton(const Strategy& strategy, const StrategyContext& ctx,
                                             std::size_t n_obs, std::size_t m) {
  check_context(ctx);
  const std::size_t n_all = ctx.inputs->size();
  if (n_obs > n_all) throw DimensionMismatch("build_prediction_skeleton: n_obs exceeds item count");
  const std::size_t n_pred = n_all - n_obs;
  const Strategy s = strategy.exact() ? Strategy{"L-ord", "C-NN"} : strategy;
  const std::size_t m_eff = strategy.exact() ? n_all : m;

  const auto obs_idx = iota_vec(n_obs);
  StrategyContext obs_ctx{std::make_shared<const InputSet>(ctx.inputs->subset(obs_idx)),
                          ctx.model ? indexed_view(ctx.model, obs_idx) : nullptr, ctx.seed};
  PredictionSkeleton out;
  out.observed = build_skeleton(s, obs_ctx, m_eff);

  const std::string& ord = s.ordering;
  if (ord == "C-MM" || ord == "E-MM") {
    out.pred_order = restricted_order(*ordering_metric(ord, ctx), n_obs, n_pred);
  } else if (ord == "S-E-MM") {
    auto metric = euclidean_metric(*ctx.inputs);
    for (int label : sorted_labels(*ctx.inputs)) {
      std::vector<std::size_t> members, preds;
      for (std::size_t i = 0; i < n_obs; ++i) {
        if (ctx.inputs->component(i) == label) members.push_back(i);
      }
      const std::size_t n_obs_label = members.size();
      for (std::size_t k = 0; k < n_pred; ++k) {
        if (ctx.inputs->component(n_obs + k) == label) {
          members.push_back(n_obs + k);
          preds.push_back(k);
        }
      }
      for (auto q : restricted_order(*metric_view(metric, members), n_obs_label, preds.size())) {
        out.pred_order.push_back(preds[q]);
      }
    }
  } else if (is_coordinate_order(ord)) {
    auto items = iota_vec(n_pred, n_obs);
    sort_by_coordinates(ord, *ctx.inputs, items);
    for (auto i : items) out.pred_order.push_back(i - n_obs);
  } else if (ord == "R-ord") {
    Rng rng(ordering_seed(ctx.seed) ^ 0x707265ULL);
    out.pred_order = random_permutation(n_pred, rng);
  } else {
    out.pred_order = iota_vec(n_pred);
  }

  const auto rule = conditioning_rule(s.conditioning, ctx);
  out.conditioning = joint_neighbors(*rule.metric, n_obs, out.pred_order, m_eff, labels_of(*ctx.inputs), rule.mode);
  return out;
}

}  // namespace cvecchia
