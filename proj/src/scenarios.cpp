#include "cvecchia/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace cvecchia {

namespace {

std::vector<double> regular_times(std::size_t t) {
  std::vector<double> out(t);
  for (std::size_t k = 0; k < t; ++k) out[k] = static_cast<double>(k + 1) / static_cast<double>(t);
  return out;
}

DenseMatrix uniform_points(std::size_t n, std::size_t dim, Rng& rng) {
  DenseMatrix pts(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (Eigen::Index k = 0; k < pts.cols(); ++k) pts(i, k) = rng.uniform();
  }
  return pts;
}

// Sites observed at every time; time-major item order.
InputSet sites_over_time(const DenseMatrix& sites, const std::vector<double>& times) {
  const auto s = sites.rows();
  DenseMatrix coords(s * static_cast<Eigen::Index>(times.size()), 2);
  std::vector<double> t;
  for (std::size_t k = 0; k < times.size(); ++k) {
    coords.middleRows(static_cast<Eigen::Index>(k) * s, s) = sites;
    t.insert(t.end(), static_cast<std::size_t>(s), times[k]);
  }
  return InputSet::spatiotemporal(std::move(coords), std::move(t));
}

void require_positive(std::size_t v, const char* what) {
  if (v == 0) throw InvalidShape(std::string("scenario: ") + what + " must be positive");
}

std::vector<std::size_t> ranks_of(const std::vector<double>& values) {
  std::vector<double> uniq = values;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<std::size_t> r(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    r[i] = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), values[i]) - uniq.begin());
  }
  return r;
}

}  // namespace

std::size_t ScenarioSpec::expected_size() const {
  if (name == "random-2d" || name == "random-spacetime") return n;
  if (name == "station") return stations * times;
  if (name == "gridded") return grid * grid * times;
  if (name == "satellite") return tracks * cycles * per_track;
  if (name == "multivariate-misaligned" || name == "multivariate-aligned") return components * per_component;
  if (name == "tree") return std::size_t{1} << depth;
  throw UnknownIdentifier("unknown scenario '" + name + "'");
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"random-2d", "random-spacetime", "station", "gridded", "satellite",
                                                 "multivariate-misaligned", "multivariate-aligned", "tree"};
  return names;
}

InputSet generate_inputs(const ScenarioSpec& spec, std::uint64_t seed) {
  Rng loc = stream(Rng(seed), Stream::Locations);
  const std::string& name = spec.name;
  if (name == "random-2d") {
    require_positive(spec.n, "n");
    return InputSet::spatial(uniform_points(spec.n, 2, loc));
  }
  if (name == "random-spacetime") {
    require_positive(spec.n, "n");
    const DenseMatrix pts = uniform_points(spec.n, 3, loc);
    std::vector<double> t(pts.col(2).data(), pts.col(2).data() + pts.rows());
    return InputSet::spatiotemporal(pts.leftCols(2), std::move(t));
  }
  if (name == "station") {
    require_positive(spec.stations, "stations");
    require_positive(spec.times, "times");
    return sites_over_time(uniform_points(spec.stations, 2, loc), regular_times(spec.times));
  }
  if (name == "gridded") {
    require_positive(spec.grid, "grid");
    require_positive(spec.times, "times");
    const auto g = static_cast<Eigen::Index>(spec.grid);
    DenseMatrix sites(g * g, 2);
    for (Eigen::Index i = 0; i < g; ++i) {
      for (Eigen::Index j = 0; j < g; ++j) {
        sites(i * g + j, 0) = (static_cast<double>(i) + 0.5) / static_cast<double>(g);
        sites(i * g + j, 1) = (static_cast<double>(j) + 0.5) / static_cast<double>(g);
      }
    }
    return sites_over_time(sites, regular_times(spec.times));
  }
  if (name == "satellite") {
    require_positive(spec.tracks, "tracks");
    require_positive(spec.cycles, "cycles");
    require_positive(spec.per_track, "per_track");
    // Track q in cycle c: x2 = frac(2 x1 + b), b = (cycles q + c) / (tracks cycles);
    // traversal tau = tracks c + q emits per_track consecutive time steps.
    const std::size_t q_n = spec.tracks, c_n = spec.cycles, p_n = spec.per_track;
    const double total = static_cast<double>(q_n * c_n * p_n);
    DenseMatrix coords(static_cast<Eigen::Index>(q_n * c_n * p_n), 2);
    std::vector<double> t;
    Eigen::Index row = 0;
    for (std::size_t c = 0; c < c_n; ++c) {
      for (std::size_t q = 0; q < q_n; ++q) {
        const double b = static_cast<double>(c_n * q + c) / static_cast<double>(q_n * c_n);
        const std::size_t tau = q_n * c + q;
        for (std::size_t k = 0; k < p_n; ++k, ++row) {
          const double x1 = (static_cast<double>(k) + 0.5) / static_cast<double>(p_n);
          const double v = 2.0 * x1 + b;
          coords(row, 0) = x1;
          coords(row, 1) = v - std::floor(v);
          t.push_back(static_cast<double>(p_n * tau + k + 1) / total);
        }
      }
    }
    return InputSet::spatiotemporal(std::move(coords), std::move(t));
  }
  if (name == "multivariate-misaligned" || name == "multivariate-aligned") {
    require_positive(spec.components, "components");
    require_positive(spec.per_component, "per_component");
    const bool aligned = name == "multivariate-aligned";
    const auto per = static_cast<Eigen::Index>(spec.per_component);
    DenseMatrix coords(per * static_cast<Eigen::Index>(spec.components), 2);
    std::vector<int> labels;
    for (std::size_t c = 0; c < spec.components; ++c) {
      Rng comp = loc.child(aligned ? 0 : c);
      coords.middleRows(static_cast<Eigen::Index>(c) * per, per) = uniform_points(spec.per_component, 2, comp);
      labels.insert(labels.end(), spec.per_component, static_cast<int>(c));
    }
    return InputSet::multivariate(std::move(coords), std::move(labels));
  }
  if (name == "tree") return InputSet::tree(spec.depth);
  throw UnknownIdentifier("unknown scenario '" + name + "'");
}

Vector simulate_exact(const CovarianceModel& model, Rng& rng) {
  const std::size_t n = model.size();
  if (n > 5000) throw DenseLimitExceeded("simulate_exact: dense simulation limited to 5000 items");
  const DenseMatrix l = cholesky(eval_matrix(model));
  const Vector eps = rng.normal_vector(n);
  return l.triangularView<Eigen::Lower>() * eps;
}

Vector simulate_exact(const CovarianceModel& model, std::uint64_t seed) {
  Rng rng = stream(Rng(seed), Stream::Data);
  return simulate_exact(model, rng);
}

Split holdout_random(std::size_t n, std::size_t test_count, Rng& rng) {
  if (test_count == 0) throw EmptyTestSet("holdout_random: test count is zero");
  if (test_count > n) throw InvalidShape("holdout_random: test count exceeds item count");
  auto perm = random_permutation(n, rng);
  Split s;
  s.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test_count));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(test_count), perm.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

Split spacetime_cube_split(const InputSet& inputs, std::size_t per_slice, Rng& rng, int space_radius,
                           int time_radius) {
  if (!inputs.has_coords() || !inputs.has_time() || inputs.spatial_dim() < 2) {
    throw InvalidShape("spacetime_cube_split: needs 2-D space-time inputs");
  }
  const std::size_t n = inputs.size();
  std::vector<double> x1(n), x2(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = inputs.coord(i, 0);
    x2[i] = inputs.coord(i, 1);
  }
  const auto r1 = ranks_of(x1), r2 = ranks_of(x2), rt = ranks_of(inputs.times());
  const std::size_t n_slices = rt.empty() ? 0 : *std::max_element(rt.begin(), rt.end()) + 1;

  using Cell = std::tuple<long, long, long>;
  std::set<Cell> marked;
  for (std::size_t slice = 0; slice < n_slices; ++slice) {
    std::set<std::pair<long, long>> sites;
    for (std::size_t i = 0; i < n; ++i) {
      if (rt[i] == slice) sites.emplace(static_cast<long>(r1[i]), static_cast<long>(r2[i]));
    }
    std::vector<std::pair<long, long>> pool(sites.begin(), sites.end());
    rng.shuffle(pool);
    const std::size_t take = std::min(per_slice, pool.size());
    for (std::size_t k = 0; k < take; ++k) {
      for (long dx = -space_radius; dx <= space_radius; ++dx) {
        for (long dy = -space_radius; dy <= space_radius; ++dy) {
          for (long dt = -time_radius; dt <= time_radius; ++dt) {
            marked.emplace(pool[k].first + dx, pool[k].second + dy, static_cast<long>(slice) + dt);
          }
        }
      }
    }
  }
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    const Cell c{static_cast<long>(r1[i]), static_cast<long>(r2[i]), static_cast<long>(rt[i])};
    (marked.count(c) ? s.test : s.train).push_back(i);
  }
  if (s.test.empty()) throw EmptyTestSet("spacetime_cube_split: no test items selected");
  return s;
}

}  // namespace cvecchia
