#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cvecchia/covmodels.hpp"
#include "cvecchia/csv.hpp"
#include "cvecchia/errors.hpp"
#include "cvecchia/experiments.hpp"
#include "cvecchia/scenarios.hpp"

namespace fs = std::filesystem;
using cvecchia::Json;

namespace {

struct Common {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool smoke = false;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "Experiment config (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Base seed (overrides the config)");
  cmd->add_option("--threads", c.threads, "Worker threads (0 = runtime default)");
  cmd->add_flag("--smoke", c.smoke, "Apply the config's reduced-size smoke section");
}

Json load_config(const Common& c) {
  Json cfg = Json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw cvecchia::Error("cannot open config '" + c.config + "'");
    cfg = Json::parse(in, nullptr, true, true);
  }
  cfg = cvecchia::resolve_config(cfg, c.smoke);
  if (c.seed) cfg["seed"] = *c.seed;
  return cfg;
}

void set_threads(int k) {
#ifdef _OPENMP
  if (k > 0) omp_set_num_threads(k);
#else
  (void)k;
#endif
}

fs::path output_dir(const Common& c) {
  fs::path dir(c.out);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw cvecchia::Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

int run_experiment_cmd(const Common& c, const std::string& kind) {
  set_threads(c.threads);
  Json cfg = load_config(c);
  if (!cfg.contains("experiment")) cfg["experiment"] = kind;
  if (cfg.at("experiment") != kind) {
    throw cvecchia::InvalidParameter("config experiment '" + cfg.at("experiment").get<std::string>() +
                                     "' does not match subcommand '" + kind + "'");
  }
  const auto result = cvecchia::run_experiment(cfg);
  const fs::path dir = output_dir(c);
  const std::string id = cfg.value("id", kind);
  cvecchia::write_records((dir / (id + ".csv")).string(), result.records);
  write_json(dir / (id + ".manifest.json"), cvecchia::make_manifest(cfg, result));
  std::cout << "wrote " << result.records.size() << " records (" << result.failed_cells << " failed cells) to "
            << (dir / (id + ".csv")).string() << '\n';
  return 0;
}

int run_generate(const Common& c, const std::string& scenario, const std::string& model, bool external) {
  Json cfg = load_config(c);
  const fs::path dir = output_dir(c);
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{1});
  if (external) {
    Json spec = cfg.contains("data") ? cfg.at("data").value("synthetic", Json::object()) : Json::object();
    if (c.seed) spec["seed"] = *c.seed;
    std::ofstream out(dir / "external.csv", std::ios::binary);
    cvecchia::write_synthetic_external(out, spec);
    std::cout << "wrote " << (dir / "external.csv").string() << '\n';
    return 0;
  }
  Json scen = cfg.value("scenario", Json::object());
  if (!scenario.empty()) scen["name"] = scenario;
  const cvecchia::Rng root(cvecchia::replicate_seed(seed, 0));
  const auto inputs = std::make_shared<const cvecchia::InputSet>(cvecchia::generate_inputs(
      cvecchia::scenario_from_json(scen), cvecchia::stream(root, cvecchia::Stream::Locations).seed()));
  std::string family = model;
  if (family.empty() && cfg.contains("model")) family = cfg.at("model").value("family", std::string());
  std::ofstream out(dir / "inputs.csv", std::ios::binary);
  if (!family.empty()) {
    const auto& fam = cvecchia::model_family(family);
    cvecchia::ParamVector p = fam.defaults;
    if (cfg.contains("model") && cfg.at("model").contains("params")) {
      for (const auto& [k, v] : cfg.at("model").at("params").items()) p.set(k, v.get<double>());
    }
    cvecchia::Rng data = cvecchia::stream(root, cvecchia::Stream::Data);
    const cvecchia::Vector y = cvecchia::simulate_exact(*fam.bind(inputs, p), data);
    cvecchia::write_inputs(out, *inputs, &y);
  } else {
    cvecchia::write_inputs(out, *inputs, nullptr);
  }
  std::cout << "wrote " << inputs->size() << " inputs to " << (dir / "inputs.csv").string() << '\n';
  return 0;
}

int run_manifest(const Common& c) {
  const Json cfg = load_config(c);
  cvecchia::validate_config(cfg);
  cvecchia::ExperimentResult seeds_only;
  const std::uint64_t base = cfg.value("seed", std::uint64_t{1});
  seeds_only.seed_log.emplace_back("base", base);
  for (std::size_t r = 0; r < cfg.value("replicates", std::size_t{1}); ++r) {
    seeds_only.seed_log.emplace_back("replicate " + std::to_string(r), cvecchia::replicate_seed(base, r));
  }
  const Json manifest = cvecchia::make_manifest(cfg, seeds_only);
  if (c.out == "-" || c.out == ".") {
    std::cout << manifest.dump(2) << '\n';
  } else {
    write_json(output_dir(c) / (cfg.value("id", std::string("experiment")) + ".manifest.json"), manifest);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlation-based Vecchia approximation experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cvecchia::kLibraryVersion));

  Common gen_opts, kl_opts, est_opts, pred_opts, post_opts, fit_opts, man_opts;
  std::string scenario, model;
  bool external = false;

  auto* gen = app.add_subcommand("generate", "Write scenario inputs (optionally with simulated data) as CSV");
  add_common(gen, gen_opts, false);
  gen->add_option("--scenario", scenario, "Scenario name");
  gen->add_option("--model", model, "Model family used to simulate a response column");
  gen->add_flag("--external", external, "Write the synthetic bivariate space-time data set instead");

  auto* kl = app.add_subcommand("kl-sweep", "KL divergence sweep over strategies and m");
  add_common(kl, kl_opts, true);
  auto* est = app.add_subcommand("estimate", "Fisher-scoring estimation study");
  add_common(est, est_opts, true);
  auto* pred = app.add_subcommand("predict", "Prediction study (log score, RMSPE)");
  add_common(pred, pred_opts, true);
  auto* post = app.add_subcommand("posterior", "Posterior grids for noisy data");
  add_common(post, post_opts, true);
  auto* fit = app.add_subcommand("fit-predict", "Fit and predict on external CSV data");
  add_common(fit, fit_opts, true);
  auto* man = app.add_subcommand("manifest", "Print the manifest of a config without running it");
  add_common(man, man_opts, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return run_generate(gen_opts, scenario, model, external);
    if (*kl) return run_experiment_cmd(kl_opts, "kl-sweep");
    if (*est) return run_experiment_cmd(est_opts, "estimate");
    if (*pred) return run_experiment_cmd(pred_opts, "predict");
    if (*post) return run_experiment_cmd(post_opts, "posterior");
    if (*fit) return run_experiment_cmd(fit_opts, "fit-predict-external");
    if (*man) return run_manifest(man_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
