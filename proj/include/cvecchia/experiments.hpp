#ifndef CVECCHIA_EXPERIMENTS_HPP_
#define CVECCHIA_EXPERIMENTS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cvecchia/csv.hpp"
#include "cvecchia/scenarios.hpp"

namespace cvecchia {

using Json = nlohmann::json;

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Experiment kinds addressable from a config's "experiment" key.
const std::vector<std::string>& experiment_kinds();

/// Applies the config's "smoke" section as a JSON merge patch (when `smoke`)
/// and drops the section either way.
Json resolve_config(const Json& config, bool smoke);

/// Checks ids against the registries and value ranges; throws
/// UnknownIdentifier / InvalidParameter / InvalidShape.
void validate_config(const Json& config);

ScenarioSpec scenario_from_json(const Json& j);

/// Root seed of replicate r: the r-th child of the base seed.
std::uint64_t replicate_seed(std::uint64_t base, std::size_t r);

struct ExperimentResult {
  std::vector<ExperimentRecord> records;  // canonically sorted
  std::vector<std::pair<std::string, std::uint64_t>> seed_log;  // label, seed
  std::size_t failed_cells = 0;
};

/// Dispatches on "experiment". Every (strategy, m, seed) cell is isolated: a
/// failure yields "failed" records and the sweep continues.
ExperimentResult run_experiment(const Json& config);

ExperimentResult run_kl_sweep(const Json& config);
ExperimentResult run_estimation(const Json& config);
ExperimentResult run_prediction(const Json& config);
ExperimentResult run_posterior(const Json& config);
ExperimentResult run_fit_predict(const Json& config);

/// Config echo, library version, seed log and record counts.
Json make_manifest(const Json& config, const ExperimentResult& result);

/// Synthetic bivariate space-time data set in the external CSV layout
/// (x1, x2, t, component, value), simulated exactly from the matern-ard
/// family on a `grid` x `grid` lattice of `times` slices. Keys: grid, times,
/// components, seed, params.
void write_synthetic_external(std::ostream& out, const Json& spec);

}  // namespace cvecchia

#endif  // CVECCHIA_EXPERIMENTS_HPP_
