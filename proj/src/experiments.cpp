#include "cvecchia/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <tuple>

#include "cvecchia/covmodels.hpp"
#include "cvecchia/errors.hpp"
#include "cvecchia/inference.hpp"
#include "cvecchia/strategy.hpp"
#include "cvecchia/vecchia.hpp"

namespace cvecchia {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Config access

std::uint64_t base_seed(const Json& c) { return c.value("seed", std::uint64_t{1}); }
std::size_t replicates(const Json& c) { return c.value("replicates", std::size_t{1}); }
std::string experiment_id(const Json& c) { return c.value("id", c.value("experiment", std::string("experiment"))); }

std::vector<Strategy> strategies(const Json& c) {
  std::vector<Strategy> out;
  for (const auto& s : c.at("strategies")) out.push_back(parse_strategy(s.get<std::string>()));
  return out;
}

std::vector<std::size_t> m_values(const Json& c) {
  std::vector<std::size_t> out;
  if (!c.contains("m")) return {10};
  for (const auto& v : c.at("m")) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw InvalidParameter("config: m values must be integers >= 0");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

// (strategy, m) cells of a replicate; the exact strategy runs once.
std::vector<std::pair<Strategy, std::size_t>> cells(const Json& c) {
  std::vector<std::pair<Strategy, std::size_t>> out;
  const auto ms = m_values(c);
  for (const auto& s : strategies(c)) {
    if (s.exact()) {
      out.emplace_back(s, 0);
    } else {
      for (std::size_t m : ms) out.emplace_back(s, m);
    }
  }
  return out;
}

std::string m_label(const Strategy& s, std::size_t m) { return s.exact() ? "n" : std::to_string(m); }

const ModelFamily& family_of(const Json& c) { return model_family(c.at("model").at("family").get<std::string>()); }

ParamVector model_params(const ModelFamily& fam, const Json& c) {
  ParamVector p = fam.defaults;
  const Json& model = c.at("model");
  if (model.contains("params")) {
    for (const auto& [k, v] : model.at("params").items()) p.set(k, v.get<double>());
  }
  if (model.contains("natural_scale")) {
    for (const auto& k : model.at("natural_scale")) p.set_log_scale(k.get<std::string>(), false);
  }
  return p;
}

double nugget_of(const Json& c) { return c.at("model").value("nugget", 0.0); }

ModelPtr bind_model(const ModelFamily& fam, const InputsPtr& inputs, const ParamVector& p, double nugget) {
  return family_factory(fam, inputs, nugget)(p);
}

FisherOptions fisher_options(const Json& est) {
  FisherOptions o;
  o.max_iter = est.value("max_iter", o.max_iter);
  o.grad_tol = est.value("grad_tol", o.grad_tol);
  o.step_tol = est.value("step_tol", o.step_tol);
  o.max_halvings = est.value("max_halvings", o.max_halvings);
  if (est.contains("schedule")) o.schedule = parse_schedule(est.at("schedule").get<std::string>());
  return o;
}

std::vector<std::string> free_params(const Json& est) {
  std::vector<std::string> out;
  for (const auto& f : est.at("free")) out.push_back(f.get<std::string>());
  return out;
}

ParamVector starting_values(ParamVector p, const Json& est) {
  if (est.contains("start")) {
    for (const auto& [k, v] : est.at("start").items()) p.set(k, v.get<double>());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Records and cell isolation

struct CellMetrics {
  std::vector<std::pair<std::string, double>> values;
  std::string params;
};

struct CellKey {
  std::string experiment, scenario, strategy, m, seed;
};

ExperimentRecord make_record(const CellKey& key, const std::string& metric, std::optional<double> value,
                             double wall, const std::string& params) {
  return ExperimentRecord{key.experiment, key.scenario, key.strategy, key.m, key.seed, metric, value, wall, params};
}

void add_failure(ExperimentResult& out, const CellKey& key, const std::vector<std::string>& metrics,
                 const std::string& message) {
  for (const auto& metric : metrics) out.records.push_back(make_record(key, metric, std::nullopt, 0.0, "error=" + message));
  ++out.failed_cells;
}

template <class Body>
void run_cell(ExperimentResult& out, const CellKey& key, const std::vector<std::string>& fail_metrics, Body&& body) {
  const auto t0 = Clock::now();
  try {
    CellMetrics cm = body();
    const double wall = seconds_since(t0);
    for (const auto& [metric, value] : cm.values) {
      out.records.push_back(make_record(key, metric, std::isfinite(value) ? std::optional<double>(value) : std::nullopt,
                                        wall, cm.params));
    }
  } catch (const std::exception& e) {
    add_failure(out, key, fail_metrics, e.what());
  }
}

// Runs `body(r, seed, out)` per replicate (in parallel when OpenMP is on) and
// merges the per-replicate results in replicate order.
template <class Body>
ExperimentResult for_replicates(const Json& c, Body&& body) {
  const std::size_t reps = replicates(c);
  const std::uint64_t base = base_seed(c);
  std::vector<ExperimentResult> parts(reps);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(reps); ++r) {
    const auto ru = static_cast<std::size_t>(r);
    body(ru, replicate_seed(base, ru), parts[ru]);
  }
  ExperimentResult all;
  all.seed_log.emplace_back("base", base);
  for (std::size_t r = 0; r < reps; ++r) {
    all.seed_log.emplace_back("replicate " + std::to_string(r), replicate_seed(base, r));
    all.records.insert(all.records.end(), parts[r].records.begin(), parts[r].records.end());
    all.failed_cells += parts[r].failed_cells;
  }
  return all;
}

void finish(ExperimentResult& result) { sort_records(result.records); }

std::vector<std::string> with_estimates(std::vector<std::string> metrics, const std::vector<std::string>& names) {
  for (const auto& n : names) metrics.push_back("est:" + n);
  return metrics;
}

std::string pad3(std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", k);
  return buf;
}

InputsPtr make_inputs(const Json& c, const Rng& root) {
  return std::make_shared<const InputSet>(generate_inputs(scenario_from_json(c.at("scenario")), stream(root, Stream::Locations).seed()));
}

std::vector<std::size_t> concat_indices(const Split& split) {
  std::vector<std::size_t> perm = split.train;
  perm.insert(perm.end(), split.test.begin(), split.test.end());
  return perm;
}

Vector select(const Vector& y, const std::vector<std::size_t>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = y[static_cast<Eigen::Index>(idx[k])];
  return out;
}

Split make_split(const Json& split_cfg, const InputSet& inputs, Rng rng) {
  const std::string protocol = split_cfg.value("protocol", std::string("holdout-random"));
  if (protocol == "holdout-random") {
    return holdout_random(inputs.size(), split_cfg.value("test", std::size_t{100}), rng);
  }
  if (protocol == "spacetime-cube") {
    return spacetime_cube_split(inputs, split_cfg.value("per_slice", std::size_t{12}), rng,
                                split_cfg.value("space_radius", 2), split_cfg.value("time_radius", 1));
  }
  throw UnknownIdentifier("unknown split protocol '" + protocol + "'");
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"kl-sweep", "estimate", "predict", "posterior", "fit-predict-external"};
  return kinds;
}

Json resolve_config(const Json& config, bool smoke) {
  Json out = config;
  if (out.contains("smoke")) {
    const Json patch = out.at("smoke");
    out.erase("smoke");
    if (smoke) out.merge_patch(patch);
  }
  return out;
}

ScenarioSpec scenario_from_json(const Json& j) {
  ScenarioSpec s;
  s.name = j.value("name", s.name);
  s.n = j.value("n", s.n);
  s.stations = j.value("stations", s.stations);
  s.times = j.value("times", s.times);
  s.grid = j.value("grid", s.grid);
  s.tracks = j.value("tracks", s.tracks);
  s.cycles = j.value("cycles", s.cycles);
  s.per_track = j.value("per_track", s.per_track);
  s.components = j.value("components", s.components);
  s.per_component = j.value("per_component", s.per_component);
  s.depth = j.value("depth", s.depth);
  return s;
}

std::uint64_t replicate_seed(std::uint64_t base, std::size_t r) { return Rng(base).child(r).seed(); }

void validate_config(const Json& c) {
  if (!c.is_object()) throw InvalidParameter("config: expected a JSON object");
  if (c.contains("scenario") && c.at("scenario").is_array()) {
    if (c.at("scenario").empty()) throw InvalidParameter("config: empty scenario list");
    for (const auto& sc : c.at("scenario")) {
      Json sub = c;
      sub["scenario"] = sc;
      validate_config(sub);
    }
    return;
  }
  const std::string kind = c.value("experiment", std::string());
  if (std::find(experiment_kinds().begin(), experiment_kinds().end(), kind) == experiment_kinds().end()) {
    throw UnknownIdentifier("config: unknown experiment kind '" + kind + "'");
  }
  if (c.contains("replicates") && (!c.at("replicates").is_number_integer() || c.at("replicates").get<long long>() < 1)) {
    throw InvalidParameter("config: replicates must be an integer >= 1");
  }
  if (!c.contains("strategies") || c.at("strategies").empty()) throw InvalidParameter("config: no strategies");
  strategies(c);
  m_values(c);
  if (!c.contains("model")) throw InvalidParameter("config: missing model");
  const ModelFamily& fam = family_of(c);
  model_params(fam, c);
  if (nugget_of(c) < 0.0) throw NegativeNoise("config: negative nugget");
  if (kind != "fit-predict-external") {
    if (!c.contains("scenario")) throw InvalidParameter("config: missing scenario");
    const ScenarioSpec spec = scenario_from_json(c.at("scenario"));
    if (std::find(scenario_names().begin(), scenario_names().end(), spec.name) == scenario_names().end()) {
      throw UnknownIdentifier("config: unknown scenario '" + spec.name + "'");
    }
  } else if (!c.contains("data")) {
    throw InvalidParameter("config: fit-predict-external needs a data section");
  }
  if ((kind == "estimate" || kind == "fit-predict-external") && !c.contains("estimate")) {
    throw InvalidParameter("config: missing estimate section");
  }
  if (kind == "posterior") {
    if (!c.contains("posterior") || !c.at("posterior").contains("axes")) throw InvalidParameter("config: missing posterior axes");
    for (const auto& p : c.value("noise", Json::object()).value("paths", Json::array({"ic"}))) {
      parse_noise_path(p.get<std::string>());
    }
  }
}

ExperimentResult run_experiment(const Json& config) {
  if (config.contains("scenario") && config.at("scenario").is_array()) {
    // Several scenarios in one config: run each, merge the records.
    ExperimentResult all;
    for (const auto& sc : config.at("scenario")) {
      Json sub = config;
      sub["scenario"] = sc;
      ExperimentResult part = run_experiment(sub);
      if (all.seed_log.empty()) all.seed_log = part.seed_log;
      all.records.insert(all.records.end(), part.records.begin(), part.records.end());
      all.failed_cells += part.failed_cells;
    }
    finish(all);
    return all;
  }
  validate_config(config);
  const std::string kind = config.at("experiment").get<std::string>();
  if (kind == "kl-sweep") return run_kl_sweep(config);
  if (kind == "estimate") return run_estimation(config);
  if (kind == "predict") return run_prediction(config);
  if (kind == "posterior") return run_posterior(config);
  return run_fit_predict(config);
}

// ---------------------------------------------------------------------------

ExperimentResult run_kl_sweep(const Json& c) {
  const ModelFamily& fam = family_of(c);
  const ParamVector base_params = model_params(fam, c);
  const double nugget = nugget_of(c);
  const std::string scen = c.at("scenario").value("name", std::string("random-2d"));
  const auto cell_list = cells(c);

  // Optional sweep over one model parameter (e.g. the anisotropy a).
  std::vector<std::optional<double>> sweep_values = {std::nullopt};
  std::string sweep_param;
  if (c.contains("sweep")) {
    sweep_param = c.at("sweep").at("parameter").get<std::string>();
    sweep_values.clear();
    for (const auto& v : c.at("sweep").at("values")) sweep_values.emplace_back(v.get<double>());
  }

  ExperimentResult result = for_replicates(c, [&](std::size_t, std::uint64_t seed, ExperimentResult& out) {
    const Rng root(seed);
    for (const auto& sv : sweep_values) {
      ParamVector params = base_params;
      std::string label = scen;
      if (sv) {
        params.set(sweep_param, *sv);
        label += "[" + sweep_param + "=" + format_value(*sv) + "]";
      }
      InputsPtr inputs;
      ModelPtr model;
      std::string setup_error;
      try {
        inputs = make_inputs(c, root);
        model = bind_model(fam, inputs, params, nugget);
        check_dense_limit(model->size(), "kl-sweep");
      } catch (const std::exception& e) {
        setup_error = e.what();
      }
      for (const auto& [s, m] : cell_list) {
        const CellKey key{experiment_id(c), label, s.name(), m_label(s, m), std::to_string(seed)};
        if (!setup_error.empty()) {
          add_failure(out, key, {"kl"}, setup_error);
          continue;
        }
        run_cell(out, key, {"kl"}, [&] {
          const StrategyContext ctx{inputs, model, stream(root, Stream::Strategy).seed()};
          const std::size_t mm = s.exact() ? model->size() : m;
          const VecchiaApprox approx = make_approx(build_skeleton(s, ctx, mm), model);
          return CellMetrics{{{"kl", kl_divergence(approx, *model)}}, params.to_string()};
        });
      }
    }
  });
  finish(result);
  return result;
}

// ---------------------------------------------------------------------------

ExperimentResult run_estimation(const Json& c) {
  const ModelFamily& fam = family_of(c);
  const ParamVector truth = model_params(fam, c);
  const double nugget = nugget_of(c);
  const Json& est = c.at("estimate");
  const auto free = free_params(est);
  const FisherOptions options = fisher_options(est);
  const bool with_mean = est.value("mean", false) && !fam.mean_parameters.empty();
  const std::string scen = c.at("scenario").value("name", std::string("random-2d"));
  const auto cell_list = cells(c);
  const auto metrics = with_estimates({"kl", "loglik", "grad_norm", "iterations", "converged"}, free);

  ExperimentResult result = for_replicates(c, [&](std::size_t, std::uint64_t seed, ExperimentResult& out) {
    const Rng root(seed);
    InputsPtr inputs;
    ModelPtr truth_model;
    Vector y;
    DenseMatrix k_true;
    std::string setup_error;
    try {
      inputs = make_inputs(c, root);
      truth_model = bind_model(fam, inputs, truth, nugget);
      check_dense_limit(truth_model->size(), "estimate");
      Rng data = stream(root, Stream::Data);
      y = simulate_exact(*truth_model, data);
      k_true = eval_matrix(*truth_model);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (const auto& [s, m] : cell_list) {
      const CellKey key{experiment_id(c), scen, s.name(), m_label(s, m), std::to_string(seed)};
      if (!setup_error.empty()) {
        add_failure(out, key, metrics, setup_error);
        continue;
      }
      run_cell(out, key, metrics, [&] {
        EstimationProblem problem;
        problem.make_model = family_factory(fam, inputs, nugget);
        problem.params = starting_values(truth, est);
        problem.free = free;
        if (with_mean) {
          problem.design = mean_design(*inputs);
          problem.mean_names = fam.mean_parameters;
        }
        problem.inputs = inputs;
        problem.seed = stream(root, Stream::Strategy).seed();
        const FisherResult fit = fisher_scoring(problem, y, s, m, options);
        const ModelPtr fitted = problem.make_model(fit.estimate);
        double kl = 0.0;
        if (s.exact()) {
          kl = gaussian_kl(k_true, eval_matrix(*fitted));
        } else {
          kl = gaussian_kl(build_factor(fit.skeleton, *fitted), ordered_covariance(*truth_model, fit.skeleton.order));
        }
        CellMetrics cm;
        cm.params = fit.estimate.to_string();
        cm.values = {{"kl", kl},
                     {"loglik", fit.loglik},
                     {"grad_norm", fit.final_grad_norm},
                     {"iterations", static_cast<double>(fit.trace.size())},
                     {"converged", fit.converged ? 1.0 : 0.0}};
        for (const auto& name : free) cm.values.emplace_back("est:" + name, fit.estimate[name]);
        return cm;
      });
    }
  });

  // RMSD of each strategy's estimates against the exact fit, over replicates.
  std::map<std::tuple<std::string, std::string, std::string>, double> exact_est;
  for (const auto& r : result.records) {
    if (r.strategy == "exact" && r.value && r.metric.rfind("est:", 0) == 0) exact_est[{r.scenario, r.seed, r.metric}] = *r.value;
  }
  if (!exact_est.empty()) {
    std::map<std::tuple<std::string, std::string, std::string, std::string>, std::pair<double, std::size_t>> acc;
    for (const auto& r : result.records) {
      if (r.strategy == "exact" || !r.value || r.metric.rfind("est:", 0) != 0) continue;
      const auto it = exact_est.find({r.scenario, r.seed, r.metric});
      if (it == exact_est.end()) continue;
      auto& a = acc[{r.scenario, r.strategy, r.m, r.metric.substr(4)}];
      a.first += (*r.value - it->second) * (*r.value - it->second);
      ++a.second;
    }
    for (const auto& [k, a] : acc) {
      const auto& [scenario, strategy, m, name] = k;
      result.records.push_back(ExperimentRecord{experiment_id(c), scenario, strategy, m, "all", "rmsd:" + name,
                                                std::sqrt(a.first / static_cast<double>(a.second)), 0.0,
                                                "replicates=" + std::to_string(a.second)});
    }
  }
  finish(result);
  return result;
}

// ---------------------------------------------------------------------------

ExperimentResult run_prediction(const Json& c) {
  const ModelFamily& fam = family_of(c);
  const ParamVector truth = model_params(fam, c);
  const double nugget = nugget_of(c);
  const double noise = c.value("noise", Json::object()).value("variance", 0.0);
  if (noise < 0.0) throw NegativeNoise("predict: negative noise variance");
  const Json split_cfg = c.value("split", Json::object());
  const std::string scen = c.at("scenario").value("name", std::string("random-2d"));
  const auto cell_list = cells(c);
  const std::vector<std::string> metrics = {"logscore", "marginal_logscore", "rmspe"};

  ExperimentResult result = for_replicates(c, [&](std::size_t, std::uint64_t seed, ExperimentResult& out) {
    const Rng root(seed);
    InputsPtr perm_inputs;
    ModelPtr model_perm;
    Vector y_obs, y_test, z_obs, noise_obs;
    std::size_t n_obs = 0;
    std::string setup_error;
    try {
      const InputsPtr inputs = make_inputs(c, root);
      const ModelPtr model = bind_model(fam, inputs, truth, nugget);
      check_dense_limit(model->size(), "predict");
      Rng data = stream(root, Stream::Data);
      const Vector y = simulate_exact(*model, data);
      const Split split = make_split(split_cfg, *inputs, stream(root, Stream::Split));
      const auto perm = concat_indices(split);
      perm_inputs = std::make_shared<const InputSet>(inputs->subset(perm));
      model_perm = bind_model(fam, perm_inputs, truth, nugget);
      n_obs = split.train.size();
      y_obs = select(y, split.train);
      y_test = select(y, split.test);
      z_obs = y_obs;
      if (noise > 0.0) {
        Rng eps = data.child(1);
        z_obs += std::sqrt(noise) * eps.normal_vector(n_obs);
        noise_obs = Vector::Constant(static_cast<Eigen::Index>(n_obs), noise);
      }
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (const auto& [s, m] : cell_list) {
      const CellKey key{experiment_id(c), scen, s.name(), m_label(s, m), std::to_string(seed)};
      if (!setup_error.empty()) {
        add_failure(out, key, metrics, setup_error);
        continue;
      }
      run_cell(out, key, metrics, [&] {
        PredictiveDistribution pred;
        if (s.exact()) {
          pred = exact_predict(*model_perm, n_obs, z_obs, noise_obs);
        } else {
          const StrategyContext ctx{perm_inputs, model_perm, stream(root, Stream::Strategy).seed()};
          const PredictionSkeleton skel = build_prediction_skeleton(s, ctx, n_obs, m);
          pred = noise > 0.0 ? predict_noisy(*model_perm, skel, noise_obs, z_obs) : predict(*model_perm, skel, z_obs);
        }
        const double n_star = static_cast<double>(y_test.size());
        return CellMetrics{{{"logscore", logscore(pred, y_test) / n_star},
                            {"marginal_logscore", marginal_logscore(pred, y_test) / n_star},
                            {"rmspe", rmspe(pred, y_test)}},
                           "n_obs=" + std::to_string(n_obs) + ";n_test=" + std::to_string(y_test.size())};
      });
    }
  });
  finish(result);
  return result;
}

// ---------------------------------------------------------------------------

ExperimentResult run_posterior(const Json& c) {
  const ModelFamily& fam = family_of(c);
  const ParamVector truth = model_params(fam, c);
  const Json noise_cfg = c.value("noise", Json::object());
  const double noise = noise_cfg.value("variance", 0.4);
  std::vector<NoisePath> paths;
  for (const auto& p : noise_cfg.value("paths", Json::array({"naive", "ic"}))) paths.push_back(parse_noise_path(p.get<std::string>()));
  const bool include_exact = c.at("posterior").value("include_exact", true);
  const std::string scen = c.at("scenario").value("name", std::string("random-2d"));
  const auto ms = m_values(c);

  std::vector<LogNormalPrior> priors;
  std::vector<GridAxis> axes;
  for (const auto& a : c.at("posterior").at("axes")) {
    const std::string name = a.at("name").get<std::string>();
    const double median = a.value("median", truth[name]);
    LogNormalPrior prior{name, truth.log_scale(name) ? std::log(median) : median, a.value("sd", 0.6)};
    GridAxis axis = default_axis(prior, a.value("points", std::size_t{21}));
    priors.push_back(prior);
    axes.push_back(std::move(axis));
  }

  std::vector<Strategy> strats;
  for (const auto& s : strategies(c)) {
    if (!s.exact()) strats.push_back(s);
  }

  auto grid_metrics = [&](const PosteriorGrid& g) {
    CellMetrics cm;
    for (std::size_t a = 0; a < g.axes.size(); ++a) {
      for (std::size_t k = 0; k < g.axes[a].values.size(); ++k) {
        cm.values.emplace_back("density:" + g.axes[a].name + ":" + pad3(k), g.marginals[a][k]);
      }
    }
    return cm;
  };
  auto axis_params = [&] {
    std::ostringstream os;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      os << (a ? ";" : "") << axes[a].name << "=";
      for (std::size_t k = 0; k < axes[a].values.size(); ++k) os << (k ? " " : "") << format_value(axes[a].values[k]);
    }
    return os.str();
  };
  const std::string grid_desc = axis_params();

  ExperimentResult result = for_replicates(c, [&](std::size_t, std::uint64_t seed, ExperimentResult& out) {
    const Rng root(seed);
    InputsPtr inputs;
    Vector z;
    std::string setup_error;
    try {
      inputs = make_inputs(c, root);
      const ModelPtr latent = bind_model(fam, inputs, truth, 0.0);
      check_dense_limit(latent->size(), "posterior");
      Rng data = stream(root, Stream::Data);
      z = simulate_exact(*with_constant_noise(latent, noise), data);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    auto request = [&](NoisePath path, const Strategy& s, std::size_t m) {
      PosteriorRequest req;
      req.make_latent = family_factory(fam, inputs, 0.0);
      req.theta_hat = truth;
      req.priors = priors;
      req.axes = axes;
      req.strategy = s;
      req.m = m;
      req.noise_path = path;
      req.noise = noise;
      req.inputs = inputs;
      req.seed = stream(root, Stream::Strategy).seed();
      return req;
    };

    std::optional<PosteriorGrid> exact_grid;
    std::vector<std::string> density_names;
    for (const auto& ax : axes) {
      for (std::size_t k = 0; k < ax.values.size(); ++k) density_names.push_back("density:" + ax.name + ":" + pad3(k));
    }
    if (include_exact) {
      const CellKey key{experiment_id(c), scen, "exact", "n", std::to_string(seed)};
      if (!setup_error.empty()) {
        add_failure(out, key, density_names, setup_error);
      } else {
        run_cell(out, key, density_names, [&] {
          exact_grid = posterior_grid(request(NoisePath::Exact, Strategy{"exact", ""}, 0), z);
          CellMetrics cm = grid_metrics(*exact_grid);
          cm.params = grid_desc;
          return cm;
        });
      }
    }
    for (const auto& s : strats) {
      for (NoisePath path : paths) {
        if (path == NoisePath::Exact) continue;
        for (std::size_t m : ms) {
          const CellKey key{experiment_id(c), scen, s.name() + "/" + to_string(path), std::to_string(m), std::to_string(seed)};
          auto fail_metrics = density_names;
          if (include_exact) {
            fail_metrics.push_back("max_dev");
            fail_metrics.push_back("max_dev_marginal");
          }
          if (!setup_error.empty()) {
            add_failure(out, key, fail_metrics, setup_error);
            continue;
          }
          run_cell(out, key, fail_metrics, [&] {
            const PosteriorGrid g = posterior_grid(request(path, s, m), z);
            CellMetrics cm = grid_metrics(g);
            cm.params = grid_desc;
            if (exact_grid) {
              // Joint-density deviation relative to the exact mode height.
              double dev = 0.0;
              const double mode = *std::max_element(exact_grid->density.begin(), exact_grid->density.end());
              for (std::size_t t = 0; t < g.size(); ++t) dev = std::max(dev, std::fabs(g.density[t] - exact_grid->density[t]));
              cm.values.emplace_back("max_dev", dev / mode);
              // Same for the per-axis marginals, relative to each exact marginal mode.
              double mdev = 0.0;
              for (std::size_t a = 0; a < g.axes.size(); ++a) {
                const auto& em = exact_grid->marginals[a];
                const double mmode = *std::max_element(em.begin(), em.end());
                for (std::size_t k = 0; k < em.size(); ++k) mdev = std::max(mdev, std::fabs(g.marginals[a][k] - em[k]) / mmode);
              }
              cm.values.emplace_back("max_dev_marginal", mdev);
            }
            return cm;
          });
        }
      }
    }
  });
  finish(result);
  return result;
}

// ---------------------------------------------------------------------------

namespace {

IngestedData load_external(const Json& data) {
  ColumnMapping mapping;
  if (data.contains("columns")) {
    const Json& cols = data.at("columns");
    mapping.x1 = cols.value("x1", mapping.x1);
    mapping.x2 = cols.value("x2", mapping.x2);
    mapping.time = cols.value("time", mapping.time);
    mapping.component = cols.value("component", mapping.component);
    mapping.value = cols.value("value", mapping.value);
  }
  if (data.contains("synthetic")) {
    std::stringstream ss;
    write_synthetic_external(ss, data.at("synthetic"));
    return ingest_csv(ss, mapping);
  }
  return ingest_csv(data.at("path").get<std::string>(), mapping);
}

}  // namespace

ExperimentResult run_fit_predict(const Json& c) {
  const ModelFamily& fam = family_of(c);
  const ParamVector start = starting_values(model_params(fam, c), c.at("estimate"));
  const double nugget = nugget_of(c);
  const Json& est = c.at("estimate");
  const auto free = free_params(est);
  const FisherOptions options = fisher_options(est);
  const bool with_mean = est.value("mean", true) && !fam.mean_parameters.empty();
  const Json split_cfg = c.value("split", Json{{"protocol", "spacetime-cube"}});
  const auto cell_list = cells(c);
  const auto metrics = with_estimates({"rmspe", "logscore", "loglik", "grad_norm", "iterations", "converged"}, free);

  const auto data = std::make_shared<const IngestedData>(load_external(c.at("data")));
  const std::string scen = c.at("data").contains("synthetic") ? "synthetic" : c.at("data").at("path").get<std::string>();

  ExperimentResult result = for_replicates(c, [&](std::size_t, std::uint64_t seed, ExperimentResult& out) {
    const Rng root(seed);
    InputsPtr train_inputs, perm_inputs;
    Vector y_obs, y_test;
    Split split;
    std::string setup_error;
    try {
      split = make_split(split_cfg, data->inputs, stream(root, Stream::Split));
      train_inputs = std::make_shared<const InputSet>(data->inputs.subset(split.train));
      perm_inputs = std::make_shared<const InputSet>(data->inputs.subset(concat_indices(split)));
      y_obs = select(data->response, split.train);
      y_test = select(data->response, split.test);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (const auto& [s, m] : cell_list) {
      const CellKey key{experiment_id(c), scen, s.name(), m_label(s, m), std::to_string(seed)};
      if (!setup_error.empty()) {
        add_failure(out, key, metrics, setup_error);
        continue;
      }
      run_cell(out, key, metrics, [&] {
        EstimationProblem problem;
        problem.make_model = family_factory(fam, train_inputs, nugget);
        problem.params = start;
        problem.free = free;
        const DenseMatrix x_all = mean_design(*perm_inputs);
        const auto n_obs = static_cast<Eigen::Index>(split.train.size());
        if (with_mean) {
          problem.design = x_all.topRows(n_obs);
          problem.mean_names = fam.mean_parameters;
        }
        problem.inputs = train_inputs;
        problem.seed = stream(root, Stream::Strategy).seed();
        const FisherResult fit = fisher_scoring(problem, y_obs, s, m, options);

        Vector beta = Vector::Zero(x_all.cols());
        if (with_mean) {
          for (std::size_t k = 0; k < fam.mean_parameters.size(); ++k) beta[static_cast<Eigen::Index>(k)] = fit.estimate[fam.mean_parameters[k]];
        }
        const Vector mean_obs = x_all.topRows(n_obs) * beta;
        const Vector mean_test = x_all.bottomRows(x_all.rows() - n_obs) * beta;
        const ModelPtr model_perm = family_factory(fam, perm_inputs, nugget)(fit.estimate);
        PredictiveDistribution pred;
        if (s.exact()) {
          pred = exact_predict(*model_perm, split.train.size(), y_obs - mean_obs);
        } else {
          const StrategyContext ctx{perm_inputs, model_perm, problem.seed};
          pred = predict(*model_perm, build_prediction_skeleton(s, ctx, split.train.size(), m), y_obs - mean_obs);
        }
        pred.mean += mean_test;
        CellMetrics cm;
        cm.params = fit.estimate.to_string();
        cm.values = {{"rmspe", rmspe(pred, y_test)},
                     {"logscore", logscore(pred, y_test) / static_cast<double>(y_test.size())},
                     {"loglik", fit.loglik},
                     {"grad_norm", fit.final_grad_norm},
                     {"iterations", static_cast<double>(fit.trace.size())},
                     {"converged", fit.converged ? 1.0 : 0.0}};
        for (const auto& name : free) cm.values.emplace_back("est:" + name, fit.estimate[name]);
        return cm;
      });
    }
  });
  finish(result);
  return result;
}

// ---------------------------------------------------------------------------

Json make_manifest(const Json& config, const ExperimentResult& result) {
  Json seeds = Json::array();
  for (const auto& [label, seed] : result.seed_log) seeds.push_back({{"label", label}, {"seed", seed}});
  std::size_t failed_rows = 0;
  for (const auto& r : result.records) failed_rows += r.value ? 0 : 1;
  return Json{{"library", "cvecchia"},
              {"version", kLibraryVersion},
              {"config", config},
              {"seeds", seeds},
              {"records", result.records.size()},
              {"failed_records", failed_rows},
              {"failed_cells", result.failed_cells},
              {"columns", record_columns()}};
}

void write_synthetic_external(std::ostream& out, const Json& spec) {
  const std::size_t grid = spec.value("grid", std::size_t{20});
  const std::size_t times = spec.value("times", std::size_t{5});
  const std::size_t comps = spec.value("components", std::size_t{2});
  const std::uint64_t seed = spec.value("seed", std::uint64_t{7});
  if (grid == 0 || times == 0 || comps == 0) throw InvalidShape("synthetic external data: empty shape");

  const std::size_t n = grid * grid * times * comps;
  check_dense_limit(n, "synthetic external data");
  DenseMatrix coords(static_cast<Eigen::Index>(n), 2);
  std::vector<double> t(n);
  std::vector<int> labels(n);
  std::size_t i = 0;
  for (std::size_t c = 0; c < comps; ++c) {
    for (std::size_t k = 0; k < times; ++k) {
      for (std::size_t a = 0; a < grid; ++a) {
        for (std::size_t b = 0; b < grid; ++b, ++i) {
          coords(static_cast<Eigen::Index>(i), 0) = (static_cast<double>(b) + 0.5) / static_cast<double>(grid);
          coords(static_cast<Eigen::Index>(i), 1) = (static_cast<double>(a) + 0.5) / static_cast<double>(grid);
          t[i] = static_cast<double>(k + 1) / static_cast<double>(times);
          labels[i] = static_cast<int>(c);
        }
      }
    }
  }
  const auto inputs = std::make_shared<const InputSet>(InputSet::multivariate(coords, labels, t));
  const ModelFamily& fam = model_family("matern-ard");
  ParamVector p = fam.defaults;
  if (spec.contains("params")) {
    for (const auto& [k, v] : spec.at("params").items()) p.set(k, v.get<double>());
  }
  const double nugget = spec.value("nugget", 0.0);
  Rng rng(seed);
  Vector y = simulate_exact(*family_factory(fam, inputs, nugget)(p), rng);
  const DenseMatrix x = mean_design(*inputs);
  for (std::size_t k = 0; k < fam.mean_parameters.size() && static_cast<Eigen::Index>(k) < x.cols(); ++k) {
    y += x.col(static_cast<Eigen::Index>(k)) * p[fam.mean_parameters[k]];
  }
  out << "x1,x2,t,component,value\r\n";
  for (std::size_t r = 0; r < n; ++r) {
    out << format_value(inputs->coord(r, 0)) << ',' << format_value(inputs->coord(r, 1)) << ',' << format_value(t[r]) << ','
        << labels[r] << ',' << format_value(y[static_cast<Eigen::Index>(r)]) << "\r\n";
  }
}

}  // namespace cvecchia
