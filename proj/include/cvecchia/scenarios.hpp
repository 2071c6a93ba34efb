#ifndef CVECCHIA_SCENARIOS_HPP_
#define CVECCHIA_SCENARIOS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cvecchia/covmodels.hpp"
#include "cvecchia/inputs.hpp"
#include "cvecchia/rng.hpp"

namespace cvecchia {

/// Child streams drawn from a replicate's root generator.
enum class Stream : std::uint64_t { Locations = 0, Data = 1, Split = 2, Strategy = 3 };

inline Rng stream(const Rng& root, Stream s) { return root.child(static_cast<std::uint64_t>(s)); }

/// Input configuration. Unused fields are ignored by a given scenario.
///
/// - random-2d: `n` uniform points in the unit square.
/// - random-spacetime: `n` uniform points in the unit cube (x1, x2, t).
/// - station: `stations` uniform sites observed at `times` regular times.
/// - gridded: a `grid` x `grid` lattice of cell centers at `times` times.
/// - satellite: `tracks` parallel slope-2 tracks, each traversed `cycles`
///   times with `per_track` points at consecutive time steps.
/// - multivariate-misaligned / multivariate-aligned: `components` processes
///   with `per_component` uniform sites each (aligned: shared sites).
/// - tree: all 2^depth leaves.
///
/// Times are the regular values k / T, k = 1..T. Items are time-major.
struct ScenarioSpec {
  std::string name = "random-2d";
  std::size_t n = 900;
  std::size_t stations = 100;
  std::size_t times = 9;
  std::size_t grid = 10;
  std::size_t tracks = 5;
  std::size_t cycles = 2;
  std::size_t per_track = 90;
  std::size_t components = 2;
  std::size_t per_component = 400;
  std::size_t depth = 12;

  std::size_t expected_size() const;
};

const std::vector<std::string>& scenario_names();

/// Pure function of (spec, seed); throws InvalidShape / UnknownIdentifier.
InputSet generate_inputs(const ScenarioSpec& spec, std::uint64_t seed);

/// y = L eps with L the dense Cholesky factor of the model covariance.
Vector simulate_exact(const CovarianceModel& model, Rng& rng);
Vector simulate_exact(const CovarianceModel& model, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

/// `test_count` items chosen uniformly without replacement.
Split holdout_random(std::size_t n, std::size_t test_count, Rng& rng);

/// Space-time cube protocol on gridded space-time inputs: per time slice pick
/// `per_slice` random locations; every item (any component) whose grid cell
/// lies within `space_radius` cells in both directions and `time_radius`
/// time steps of a picked location is a test item. Grid cells are the ranks
/// of the distinct coordinate values. Throws EmptyTestSet when nothing is
/// selected.
Split spacetime_cube_split(const InputSet& inputs, std::size_t per_slice, Rng& rng, int space_radius = 2,
                           int time_radius = 1);

}  // namespace cvecchia

#endif  // CVECCHIA_SCENARIOS_HPP_
