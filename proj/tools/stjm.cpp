#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <thread>

#include "stjm/config.hpp"
#include "stjm/cvdcl.hpp"
#include "stjm/fit_io.hpp"
#include "stjm/graph.hpp"
#include "stjm/laplace.hpp"
#include "stjm/mcmc.hpp"
#include "stjm/model.hpp"
#include "stjm/pipeline.hpp"
#include "stjm/simulate.hpp"

namespace fs = std::filesystem;
using namespace stjm;

namespace {

// Exit codes: 2 config, 3 numeric/inference, 4 data/selection.
struct CliError : std::runtime_error {
  CliError(int exit_code, const std::string& msg) : std::runtime_error(msg), code(exit_code) {}
  int code;
};

Config load_config_or_empty(const std::string& path) {
  if (path.empty()) return {};
  try {
    return Config::load(path);
  } catch (const std::exception& e) {
    throw CliError(2, e.what());
  }
}

std::uint64_t require_seed(const Config& cfg, std::int64_t seed_flag) {
  if (seed_flag >= 0) return static_cast<std::uint64_t>(seed_flag);
  if (cfg.has("seed")) return static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  throw CliError(2, "seed required: pass --seed or set 'seed' in the config");
}

SimConfig sim_config_from(const Config& cfg, std::uint64_t seed) {
  SimConfig sc;
  sc.seed = seed;
  sc.n_loans = cfg.get_int("n_loans", sc.n_loans);
  sc.t_study = cfg.get_int("t_study", sc.t_study);
  sc.truth.tau_Y = cfg.get_double("tau_y", sc.truth.tau_Y);
  sc.truth.tau_U0 = cfg.get_double("tau_u0", sc.truth.tau_U0);
  sc.truth.tau_U1 = cfg.get_double("tau_u1", sc.truth.tau_U1);
  sc.truth.rho_01 = cfg.get_double("rho_01", sc.truth.rho_01);
  sc.truth.lambda = cfg.get_double("lambda", sc.truth.lambda);
  sc.truth.tau_v = cfg.get_double("tau_v", sc.truth.tau_v);
  sc.truth.tau_u = cfg.get_double("tau_u", sc.truth.tau_u);
  sc.truth.tau_delta = cfg.get_double("tau_delta", sc.truth.tau_delta);
  sc.beta01 = cfg.get_double("beta01", sc.beta01);
  sc.beta11 = cfg.get_double("beta11", sc.beta11);
  sc.nu0 = cfg.get_double("nu0", sc.nu0);
  sc.beta12 = cfg.get_double("beta12", sc.beta12);
  sc.beta22 = cfg.get_double("beta22", sc.beta22);
  sc.shape_amplitude = cfg.get_double("shape_amplitude", sc.shape_amplitude);
  sc.shape_midpoint = cfg.get_double("shape_midpoint", sc.shape_midpoint);
  sc.shape_scale = cfg.get_double("shape_scale", sc.shape_scale);
  sc.default_shape = cfg.get_bool("default_shape", sc.default_shape);
  return sc;
}

struct LoadedData {
  std::shared_ptr<PanelDataset> panel;
  std::shared_ptr<AdjacencyGraph> graph;
};

LoadedData load_data_dir(const std::string& data_dir, const Config& cfg, Variant variant) {
  LoadedData out;
  const std::string orig = data_dir + "/origination.csv";
  const std::string perf = data_dir + "/performance.csv";
  int t_study = cfg.get_int("t_study", 0);
  if (t_study == 0) {
    const std::string truth_path = data_dir + "/truth.json";
    if (fs::exists(truth_path)) {
      std::ifstream in(truth_path);
      nlohmann::json j;
      in >> j;
      if (j.contains("t_study")) t_study = j["t_study"].get<int>();
    }
  }
  if (t_study == 0) t_study = 54;

  LoadWarnings warnings;
  std::vector<LoanRecord> loans;
  try {
    loans = load_loans(orig, perf, &warnings);
  } catch (const std::exception& e) {
    throw CliError(4, e.what());
  }
  for (const auto& w : warnings.messages) std::cerr << "warning: " << w << "\n";

  try {
    out.panel = std::make_shared<PanelDataset>(expand_person_period(loans, t_study));
    const auto std_names = cfg.get_list("standardize");
    if (!std_names.empty()) standardize(*out.panel, std_names);
  } catch (const std::exception& e) {
    throw CliError(4, e.what());
  }

  if (variant != Variant::M1) {
    std::string adj = cfg.get_string("adjacency", data_dir + "/adjacency.txt");
    if (!fs::exists(adj))
      throw CliError(2, "variant " + variant_to_string(variant) +
                            " needs an adjacency file; expected " + adj);
    try {
      out.graph = std::make_shared<AdjacencyGraph>(AdjacencyGraph::load(adj));
    } catch (const std::exception& e) {
      throw CliError(4, e.what());
    }
  }
  return out;
}

ModelConfig model_config_from(const Config& cfg) {
  ModelConfig mc;
  mc.tau_f = cfg.get_double("tau_f", mc.tau_f);
  mc.covariates = cfg.get_list("covariates");
  if (mc.covariates.empty()) mc.covariates = {"cltv", "dti"};
  mc.priors.prec_shape = cfg.get_double("prior_prec_shape", mc.priors.prec_shape);
  mc.priors.prec_rate = cfg.get_double("prior_prec_rate", mc.priors.prec_rate);
  mc.priors.lambda_sd = cfg.get_double("prior_lambda_sd", mc.priors.lambda_sd);
  return mc;
}

RunManifest make_manifest(const std::string& command, const std::string& config_path,
                          const Config& cfg, std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.config_path = config_path;
  m.config_snapshot = cfg.entries();
  m.seed = seed;
  m.version = kVersionString;
  return m;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::int64_t seed_flag) {
  Config cfg = load_config_or_empty(config_path);
  const std::uint64_t seed = require_seed(cfg, seed_flag);
  cfg.set("seed", std::to_string(seed));
  SimConfig sc = sim_config_from(cfg, seed);

  const bool spatial = cfg.get_bool("spatial", false);
  std::shared_ptr<AdjacencyGraph> graph;
  if (spatial) {
    if (cfg.has("adjacency")) {
      graph = std::make_shared<AdjacencyGraph>(AdjacencyGraph::load(cfg.get_string("adjacency", "")));
    } else {
      const int rows = cfg.get_int("lattice_rows", 3);
      const int cols = cfg.get_int("lattice_cols", 3);
      graph = std::make_shared<AdjacencyGraph>(AdjacencyGraph::lattice(rows, cols));
    }
    sc.graph = graph;
  }

  const auto t0 = std::chrono::steady_clock::now();
  SimResult sim;
  try {
    sim = spatial ? simulate_stjm(sc) : simulate_appendix_b(sc);
  } catch (const std::exception& e) {
    throw CliError(3, e.what());
  }

  fs::create_directories(out_dir);
  const auto loans = sim_to_loan_records(sim, sc);
  write_loans(loans, out_dir + "/origination.csv", out_dir + "/performance.csv");
  write_truth_json(out_dir + "/truth.json", sc, sim);
  RunManifest m = make_manifest("simulate", config_path, cfg, seed);
  m.outputs = {"origination.csv", "performance.csv", "truth.json"};
  if (spatial) {
    graph->save(out_dir + "/adjacency.txt");
    m.outputs.push_back("adjacency.txt");
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(out_dir + "/manifest.json", m);
  std::cout << "simulated " << sc.n_loans << " loans over " << sc.t_study << " months into "
            << out_dir << "\n";
  return 0;
}

int cmd_fit(const std::string& data_dir, const std::string& variant_str,
            const std::string& method, const std::string& config_path,
            const std::string& out_dir, std::int64_t seed_flag, int threads) {
  (void)threads;
  Config cfg = load_config_or_empty(config_path);
  Variant variant;
  try {
    variant = variant_from_string(variant_str);
  } catch (const std::exception& e) {
    throw CliError(2, e.what());
  }
  if (method != "laplace" && method != "mcmc")
    throw CliError(2, "unknown fit method: " + method);

  LoadedData data = load_data_dir(data_dir, cfg, variant);
  ModelConfig mc = model_config_from(cfg);
  std::uint64_t seed = 1;
  if (seed_flag >= 0) seed = static_cast<std::uint64_t>(seed_flag);
  else if (cfg.has("seed")) seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  cfg.set("seed", std::to_string(seed));
  cfg.set("data_dir", data_dir);
  cfg.set("variant", variant_to_string(variant));
  cfg.set("method", method);

  const auto t0 = std::chrono::steady_clock::now();
  ModelDefinition model;
  try {
    model = ModelDefinition::build(data.panel, data.graph, variant, mc);
  } catch (const std::exception& e) {
    throw CliError(2, e.what());
  }

  fs::create_directories(out_dir);
  RunManifest m = make_manifest("fit", config_path, cfg, seed);
  try {
    if (method == "laplace") {
      FitOptions opts;
      opts.strategy = grid_strategy_from_string(cfg.get_string("grid_strategy", "auto"));
      opts.step = cfg.get_double("grid_step", opts.step);
      opts.log_drop = cfg.get_double("grid_log_drop", opts.log_drop);
      FitResult fr = fit(model, opts);
      write_fit_summary_csv(out_dir + "/summary.csv", fr);
      save_fit(out_dir + "/fit.json", fr);
      m.outputs = {"summary.csv", "fit.json"};
    } else {
      McmcConfig mcfg;
      mcfg.iterations = cfg.get_int("iterations", mcfg.iterations);
      mcfg.burn_in = cfg.get_int("burn_in", mcfg.burn_in);
      mcfg.thin = cfg.get_int("thin", mcfg.thin);
      mcfg.seed = seed;
      ChainResult chain = run_mcmc(model, mcfg);
      save_chain(chain, out_dir + "/chain.bin");
      const auto summary = chain_summary(chain, model);
      FitResult stub;
      stub.summaries = summary;
      write_fit_summary_csv(out_dir + "/summary.csv", stub);
      m.outputs = {"summary.csv", "chain.bin"};
    }
  } catch (const NotPositiveDefiniteError& e) {
    throw CliError(3, e.what());
  } catch (const NewtonError& e) {
    throw CliError(3, e.what());
  } catch (const std::exception& e) {
    throw CliError(3, e.what());
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(out_dir + "/manifest.json", m);
  std::cout << "fit " << variant_to_string(variant) << " (" << method << ") written to "
            << out_dir << "\n";
  return 0;
}

int cmd_select(const std::vector<std::string>& fit_dirs, const std::string& times_str,
               int draws, const std::string& method, const std::string& out_dir,
               std::int64_t seed_flag, int threads, int batches) {
  if (fit_dirs.empty()) throw CliError(2, "select needs at least one --fit directory");
  Config times_cfg;
  times_cfg.set("times", times_str);
  const std::vector<int> times = times_cfg.get_int_list("times");
  if (times.empty()) throw CliError(2, "select needs a non-empty --times list");

  CvdclOptions opts;
  opts.draws_per_point = draws;
  opts.seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : 1;
  opts.threads = threads;
  opts.n_batches = batches;
  if (method == "laplace" || method == "eb" || method == "quadrature")
    opts.method = hi_method_from_string(method);
  else if (method != "mcmc")
    throw CliError(2, "unknown select method: " + method);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<CvdclReport> reports;
  for (const auto& dir : fit_dirs) {
    RunManifest fit_manifest;
    try {
      fit_manifest = read_manifest(dir + "/manifest.json");
    } catch (const std::exception& e) {
      throw CliError(4, e.what());
    }
    Config fit_cfg;
    for (const auto& [k, v] : fit_manifest.config_snapshot) fit_cfg.set(k, v);
    const Variant variant = variant_from_string(fit_cfg.get_string("variant", "m1"));
    const std::string fit_method = fit_cfg.get_string("method", "laplace");
    LoadedData data = load_data_dir(fit_cfg.get_string("data_dir", ""), fit_cfg, variant);
    ModelDefinition model =
        ModelDefinition::build(data.panel, data.graph, variant, model_config_from(fit_cfg));

    for (int t : times) {
      if (t < 0 || t >= data.panel->t_study)
        throw CliError(4, "evaluation time " + std::to_string(t) +
                              " outside the study period of " + dir);
      if (data.panel->n_at_risk(t) == 0)
        throw CliError(4, "no loans at risk at t = " + std::to_string(t) + " in " + dir);
    }

    CvdclReport report;
    report.model_name = fs::path(dir).filename().string();
    try {
      if (fit_method == "mcmc") {
        report.method = "mcmc";
        ChainResult chain = load_chain(dir + "/chain.bin");
        for (int t : times) report.evaluations.push_back(cvdcl_mcmc(model, chain, t, opts));
      } else {
        report.method = "inla-" + hi_method_to_string(opts.method);
        FitResult fr = load_fit(dir + "/fit.json", model);
        for (int t : times) report.evaluations.push_back(cvdcl_inla(model, fr, t, opts));
      }
    } catch (const std::exception& e) {
      throw CliError(4, e.what());
    }
    reports.push_back(std::move(report));
  }

  fs::create_directories(out_dir);
  write_cvdcl_csv(out_dir + "/report.csv", reports);
  std::vector<std::string> outputs = {"report.csv"};
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::string name = out_dir + "/area_" + reports[i].model_name + ".csv";
    write_area_csv(name, reports[i], i == 0 ? nullptr : &reports[0]);
    outputs.push_back(fs::path(name).filename().string());
  }

  Config sel_cfg;
  sel_cfg.set("times", times_str);
  sel_cfg.set("draws", std::to_string(draws));
  sel_cfg.set("method", method);
  for (std::size_t i = 0; i < fit_dirs.size(); ++i)
    sel_cfg.set("fit" + std::to_string(i), fit_dirs[i]);
  RunManifest m = make_manifest("select", "", sel_cfg, opts.seed);
  m.outputs = outputs;
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(out_dir + "/manifest.json", m);
  std::cout << "selection report written to " << out_dir << "\n";
  return 0;
}

int cmd_report(const std::string& select_dir) {
  std::ifstream in(select_dir + "/report.csv");
  if (!in) throw CliError(4, "no report.csv in " + select_dir);
  std::string line;
  while (std::getline(in, line)) {
    std::string pretty = line;
    for (char& c : pretty)
      if (c == ',') c = '\t';
    std::cout << pretty << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal joint model for longitudinal and discrete-time survival data"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, variant = "m1", method = "laplace";
  std::string times = "12,18,24,30,36", select_dir;
  std::vector<std::string> fit_dirs;
  std::int64_t seed = -1;
  int threads = 0, draws = 50, batches = 20;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--config", config_path);
  sim->add_option("--out", out_dir)->required();
  sim->add_option("--seed", seed);

  auto* fit_cmd = app.add_subcommand("fit", "fit a model variant to a data directory");
  fit_cmd->add_option("--data", data_dir)->required();
  fit_cmd->add_option("--variant", variant)->check(CLI::IsMember({"m1", "m2", "m3"}));
  fit_cmd->add_option("--method", method)->check(CLI::IsMember({"laplace", "mcmc"}));
  fit_cmd->add_option("--config", config_path);
  fit_cmd->add_option("--out", out_dir)->required();
  fit_cmd->add_option("--seed", seed);
  fit_cmd->add_option("--threads", threads);

  auto* sel = app.add_subcommand("select", "cross-validated model comparison");
  sel->add_option("--fit", fit_dirs)->required();
  sel->add_option("--times", times);
  sel->add_option("--draws", draws);
  sel->add_option("--method", method);
  sel->add_option("--out", out_dir)->required();
  sel->add_option("--seed", seed);
  sel->add_option("--threads", threads);
  sel->add_option("--batches", batches);

  auto* rep = app.add_subcommand("report", "print a selection report");
  rep->add_option("--select", select_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_dir, seed);
    if (fit_cmd->parsed()) return cmd_fit(data_dir, variant, method, config_path, out_dir, seed, threads);
    if (sel->parsed())
      return cmd_select(fit_dirs, times, draws, method, out_dir, seed, threads, batches);
    if (rep->parsed()) return cmd_report(select_dir);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
