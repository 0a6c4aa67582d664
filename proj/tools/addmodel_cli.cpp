// addmodel: fit, simulate, and run convergence-rate experiments for the
// two-component penalized additive model.
//
// Exit codes: 0 success, 1 internal/numerical failure, 2 usage or input error.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "addmodel/datagen.hpp"
#include "addmodel/errors.hpp"
#include "addmodel/experiment.hpp"
#include "addmodel/penalties.hpp"
#include "addmodel/solver.hpp"
#include "addmodel/spline_basis.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDefaultSeed = 20140526;

struct CliConfig {
  std::string subcommand;
  std::string input;
  std::string out_dir = ".";
  std::string prefix = "experiment";
  double rho = 0.8;
  double snr = 7.0;
  std::size_t n = 5000;
  std::uint64_t seed = kDefaultSeed;
  int replicates = 0;  // 0: 20 for desk scale, 100 for full scale and tuning
  std::vector<std::size_t> n_grid;
  bool full_scale = false;
  int jobs = 0;
  int q = 2;
  std::optional<double> lambda;  // unset: the tuning rule at the data's n
  std::optional<double> mu;
  addmodel::TuningRule rule;
  std::vector<double> grid_lambda;
  std::vector<double> grid_mu;
  double n_min = 1000.0;
  int max_iterations = 500;
  double rel_tolerance = 1e-10;
};

json to_json(const CliConfig& c) {
  return {
      {"subcommand", c.subcommand},
      {"input", c.input},
      {"out_dir", c.out_dir},
      {"prefix", c.prefix},
      {"rho", c.rho},
      {"snr", c.snr},
      {"n", c.n},
      {"seed", c.seed},
      {"replicates", c.replicates},
      {"n_grid", c.n_grid},
      {"full_scale", c.full_scale},
      {"jobs", c.jobs},
      {"q", c.q},
      {"lambda", c.lambda ? json(*c.lambda) : json(nullptr)},
      {"mu", c.mu ? json(*c.mu) : json(nullptr)},
      {"c_lambda", c.rule.c_lambda},
      {"lambda_exponent", c.rule.lambda_exponent},
      {"c_mu", c.rule.c_mu},
      {"mu_exponent", c.rule.mu_exponent},
      {"grid_lambda", c.grid_lambda},
      {"grid_mu", c.grid_mu},
      {"n_min", c.n_min},
      {"max_iterations", c.max_iterations},
      {"rel_tolerance", c.rel_tolerance},
  };
}

// Config-file values become the starting point; flags parsed afterwards win.
void apply_json(CliConfig& c, const json& j) {
  auto take = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  take("input", c.input);
  take("out_dir", c.out_dir);
  take("prefix", c.prefix);
  take("rho", c.rho);
  take("snr", c.snr);
  take("n", c.n);
  take("seed", c.seed);
  take("replicates", c.replicates);
  take("n_grid", c.n_grid);
  take("full_scale", c.full_scale);
  take("jobs", c.jobs);
  take("q", c.q);
  if (j.contains("lambda") && !j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
  if (j.contains("mu") && !j.at("mu").is_null()) c.mu = j.at("mu").get<double>();
  take("c_lambda", c.rule.c_lambda);
  take("lambda_exponent", c.rule.lambda_exponent);
  take("c_mu", c.rule.c_mu);
  take("mu_exponent", c.rule.mu_exponent);
  take("grid_lambda", c.grid_lambda);
  take("grid_mu", c.grid_mu);
  take("n_min", c.n_min);
  take("max_iterations", c.max_iterations);
  take("rel_tolerance", c.rel_tolerance);
}

fs::path prepare_out_dir(const CliConfig& c) {
  const fs::path dir(c.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw addmodel::InputError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw addmodel::InputError(fmt::format("cannot open {} for writing", path.string()));
  out << j.dump(2) << '\n';
}

void write_config(const fs::path& dir, const CliConfig& c) { write_json(dir / "config.json", to_json(c)); }

int cmd_simulate(CliConfig& c) {
  const fs::path dir = prepare_out_dir(c);
  const addmodel::Scenario scenario = addmodel::make_scenario(c.rho, c.snr);
  const addmodel::Dataset data = addmodel::simulate(scenario, c.n, c.seed);
  addmodel::write_dataset_csv(dir / "data.csv", data);
  addmodel::write_dataset_metadata(dir / "data.meta.json", data, scenario);
  write_config(dir, c);
  std::cout << fmt::format("wrote {} rows to {} (a={:.6f}, sigma={:.6f})\n", data.size(),
                           (dir / "data.csv").string(), scenario.a, scenario.sigma);
  return 0;
}

int cmd_fit(CliConfig& c) {
  if (c.input.empty()) throw addmodel::InputError("fit: --input is required");
  if (c.q != 1 && c.q != 2) throw addmodel::InputError("fit: --q must be 1 or 2");
  const addmodel::Dataset data = addmodel::read_dataset_csv(c.input);
  const std::size_t n = data.size();
  if (n < 2) throw addmodel::InputError("fit: need at least two rows");
  if (!c.lambda) c.lambda = c.rule.lambda(n);
  if (!c.mu) c.mu = c.rule.mu(n);
  if (!(*c.lambda > 0.0)) throw addmodel::InputError("fit: lambda must be positive");
  if (c.q == 2 ? !(*c.mu > 0.0) : !(*c.mu >= 0.0)) {
    throw addmodel::InputError(c.q == 2 ? "fit: mu must be positive for q=2"
                                        : "fit: mu must be nonnegative");
  }

  const fs::path dir = prepare_out_dir(c);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.y.data(), static_cast<Eigen::Index>(n));
  const auto basis_f = addmodel::SplineBasis::from_sample(data.x);
  const auto bf = addmodel::design_matrix(basis_f, data.x);
  const auto omega_f = addmodel::penalty_matrix(basis_f, 3);

  addmodel::FitConfig config{*c.lambda, *c.mu, c.q, c.max_iterations, c.rel_tolerance};
  json summary = {{"q", c.q}, {"lambda", *c.lambda}, {"mu", *c.mu}, {"n", n}, {"k_f", basis_f.dimension()}};

  addmodel::AdditiveFit fit;
  addmodel::FittedValues fitted;
  std::ofstream coef(dir / "coefficients.csv");
  coef << "component,index,value\n";
  if (c.q == 2) {
    const auto basis_g = addmodel::SplineBasis::from_sample(data.z);
    const auto bg = addmodel::design_matrix(basis_g, data.z);
    const auto omega_g = addmodel::penalty_matrix(basis_g, 2);
    fit = addmodel::fit_additive_q2(y, bf, bg, omega_f, omega_g, config);
    fitted = addmodel::fitted_values(fit, bf, bg);
    summary["k_g"] = basis_g.dimension();
    summary["kkt_residual"] = addmodel::kkt_residual(fit, y, bf, bg, omega_f, omega_g, config);
    for (Eigen::Index j = 0; j < fit.gamma_g().size(); ++j) {
      coef << fmt::format("g,{},{:.17g}\n", j, fit.gamma_g()[j]);
    }
  } else {
    fit = addmodel::fit_additive_tv(y, bf, omega_f, data.z, config);
    fitted = addmodel::fitted_values(fit, bf, data.z);
    summary["kkt_residual"] = fit.diagnostics.residual;
    summary["total_variation"] = fit.steps().total_variation();
    std::ofstream steps(dir / "steps.csv");
    steps << "breakpoint,level,weight\n";
    const auto& s = fit.steps();
    for (std::size_t j = 0; j < s.levels.size(); ++j) {
      steps << fmt::format("{:.17g},{:.17g},{}\n", s.breakpoints[j], s.levels[j], s.weights[j]);
    }
  }
  for (Eigen::Index j = 0; j < fit.gamma_f.size(); ++j) {
    coef << fmt::format("f,{},{:.17g}\n", j, fit.gamma_f[j]);
  }
  summary["objective"] = fit.objective;
  summary["iterations"] = fit.diagnostics.iterations;
  summary["converged"] = fit.diagnostics.converged;
  write_json(dir / "fit.json", summary);

  std::ofstream out(dir / "fitted.csv");
  out << "x,z,y,f_hat,g_hat\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", data.x[i], data.z[i], data.y[i],
                       fitted.f[k], fitted.g[k]);
  }
  write_config(dir, c);
  std::cout << fmt::format("objective={:.10g} kkt_residual={:.3g} converged={} iterations={}\n",
                           fit.objective, summary["kkt_residual"].get<double>(),
                           fit.diagnostics.converged, fit.diagnostics.iterations);
  return 0;
}

std::vector<addmodel::SlopeFit> fit_slopes(const std::vector<addmodel::MseCurve>& curves, double n_min) {
  std::vector<addmodel::SlopeFit> slopes;
  for (const auto& curve : curves) slopes.push_back(addmodel::loglog_slope(curve, n_min));
  return slopes;
}

int cmd_experiment(CliConfig& c) {
  if (c.n_grid.empty()) c.n_grid = c.full_scale ? addmodel::full_n_grid() : addmodel::desk_n_grid();
  if (c.replicates == 0) c.replicates = c.full_scale ? 100 : 20;
  const fs::path dir = prepare_out_dir(c);
  const addmodel::Scenario scenario = addmodel::make_scenario(c.rho, c.snr);
  const auto curves = addmodel::run_grid(scenario, c.n_grid, c.replicates, c.rule, c.seed, c.jobs);
  const auto slopes = fit_slopes(curves, c.n_min);
  addmodel::emit_outputs(curves, slopes, dir / c.prefix);
  json resolved = to_json(c);
  resolved["scenario"] = addmodel::scenario_to_json(scenario);
  write_json(dir / "config.json", resolved);
  for (const auto& s : slopes) {
    std::cout << fmt::format("{:9s} slope {:+.4f} (theory {:+.4f})\n",
                             addmodel::estimator_name(s.estimator), s.slope, s.theoretical_slope);
  }
  return 0;
}

int cmd_tune(CliConfig& c) {
  if (c.grid_lambda.empty()) {
    for (int i = 1; i <= 20; ++i) c.grid_lambda.push_back(i);
  }
  if (c.grid_mu.empty()) {
    for (int i = 1; i <= 10; ++i) c.grid_mu.push_back(i / 10.0);
  }
  if (c.replicates == 0) c.replicates = 100;
  const fs::path dir = prepare_out_dir(c);
  const addmodel::Scenario scenario = addmodel::make_scenario(c.rho, c.snr);
  const auto result = addmodel::tune_constants(scenario, c.n, c.replicates, c.grid_lambda,
                                               c.grid_mu, c.seed, c.rule, c.jobs);
  std::ofstream out(dir / "tuning.csv");
  out << "c_lambda,c_mu,mse_f,mse_g,objective\n";
  for (const auto& t : result.table) {
    out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", t.c_lambda, t.c_mu, t.mse_f,
                       t.mse_g, t.objective);
  }
  write_json(dir / "tuning_best.json",
             {{"c_lambda", result.c_lambda}, {"c_mu", result.c_mu}, {"objective", result.objective}});
  write_config(dir, c);
  std::cout << fmt::format("best c_lambda={:g} c_mu={:g} objective={:.6g}\n", result.c_lambda,
                           result.c_mu, result.objective);
  return 0;
}

int cmd_slopes(CliConfig& c) {
  if (c.input.empty()) throw addmodel::InputError("slopes: --input is required");
  const auto curves = addmodel::read_mse_csv(c.input);
  const auto slopes = fit_slopes(curves, c.n_min);
  const fs::path dir = prepare_out_dir(c);
  addmodel::emit_outputs({}, slopes, dir / c.prefix);
  write_config(dir, c);
  for (const auto& s : slopes) {
    std::cout << fmt::format("{:9s} slope {:+.6f} intercept {:+.6f}\n",
                             addmodel::estimator_name(s.estimator), s.slope, s.intercept);
  }
  return 0;
}

// Finds "--config <path>" (or "--config=<path>") before CLI11 runs.
std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CliConfig c;
  try {
    const std::string config_path = find_config_path(argc, argv);
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw addmodel::InputError(fmt::format("cannot open config {}", config_path));
      apply_json(c, json::parse(in));
    }
  } catch (const json::exception& e) {
    std::cerr << "error: bad config file: " << e.what() << '\n';
    return 2;
  } catch (const addmodel::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Penalized additive-model fitting and convergence-rate experiments"};
  app.require_subcommand(1);
  std::string config_file;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "JSON config; flags override its values");
    sub->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  };
  auto add_scenario = [&](CLI::App* sub) {
    sub->add_option("--rho", c.rho, "Correlation of X and Z")->capture_default_str();
    sub->add_option("--snr", c.snr, "Signal-to-noise ratio")->capture_default_str();
    sub->add_option("--seed", c.seed, "Base RNG seed")->capture_default_str();
  };
  auto add_rule = [&](CLI::App* sub) {
    sub->add_option("--c-lambda", c.rule.c_lambda, "lambda = c_lambda * n^lambda_exponent")->capture_default_str();
    sub->add_option("--lambda-exponent", c.rule.lambda_exponent)->capture_default_str();
    sub->add_option("--c-mu", c.rule.c_mu, "mu = c_mu * n^mu_exponent")->capture_default_str();
    sub->add_option("--mu-exponent", c.rule.mu_exponent)->capture_default_str();
  };

  auto* simulate = app.add_subcommand("simulate", "Generate a dataset (data.csv + data.meta.json)");
  add_common(simulate);
  add_scenario(simulate);
  simulate->add_option("--n", c.n, "Sample size")->capture_default_str();

  auto* fit = app.add_subcommand("fit", "Fit the additive model to a CSV with columns x,z,y");
  add_common(fit);
  add_rule(fit);
  fit->add_option("--input", c.input, "Input CSV");
  fit->add_option("--q", c.q, "2: spline g, 1: total-variation g")->capture_default_str();
  fit->add_option("--lambda", c.lambda, "Explicit lambda (default: rule at the data's n)");
  fit->add_option("--mu", c.mu, "Explicit mu (default: rule at the data's n)");
  fit->add_option("--max-iterations", c.max_iterations, "q=1 sweep limit")->capture_default_str();
  fit->add_option("--rel-tolerance", c.rel_tolerance, "q=1 relative objective decrease")->capture_default_str();

  auto* experiment = app.add_subcommand("experiment", "MSE curves, slopes and gnuplot script over an n grid");
  add_common(experiment);
  add_scenario(experiment);
  add_rule(experiment);
  experiment->add_option("--replicates", c.replicates, "Replicates per n (default 20, or 100 with --full-scale)");
  experiment->add_option("--n-grid", c.n_grid, "Explicit sample sizes");
  experiment->add_flag("--desk-scale", "{250,...,4000} x 20 replicates (default)");
  experiment->add_flag("--full-scale", c.full_scale, "{100,150,...,5000} x 100 replicates");
  experiment->add_option("--jobs", c.jobs, "Worker threads (0: all cores)")->capture_default_str();
  experiment->add_option("--n-min", c.n_min, "Smallest n used by the slope fit")->capture_default_str();
  experiment->add_option("--prefix", c.prefix, "Output file prefix")->capture_default_str();

  auto* tune = app.add_subcommand("tune", "Grid search of the tuning-rule constants");
  add_common(tune);
  add_scenario(tune);
  add_rule(tune);
  tune->add_option("--n", c.n, "Sample size")->capture_default_str();
  tune->add_option("--replicates", c.replicates, "Replicates (default 100)");
  tune->add_option("--grid-lambda", c.grid_lambda, "Candidate c_lambda values (default 1..20)");
  tune->add_option("--grid-mu", c.grid_mu, "Candidate c_mu values (default 0.1..1.0)");
  tune->add_option("--jobs", c.jobs, "Worker threads (0: all cores)")->capture_default_str();

  auto* slopes = app.add_subcommand("slopes", "Log-log slope fits from an MSE CSV");
  add_common(slopes);
  slopes->add_option("--input", c.input, "MSE CSV (estimator,n,mse,stderr,replicates)");
  slopes->add_option("--n-min", c.n_min, "Smallest n used by the slope fit")->capture_default_str();
  slopes->add_option("--prefix", c.prefix, "Output file prefix")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) {
      c.subcommand = "simulate";
      return cmd_simulate(c);
    }
    if (fit->parsed()) {
      c.subcommand = "fit";
      return cmd_fit(c);
    }
    if (experiment->parsed()) {
      c.subcommand = "experiment";
      return cmd_experiment(c);
    }
    if (tune->parsed()) {
      c.subcommand = "tune";
      return cmd_tune(c);
    }
    c.subcommand = "slopes";
    return cmd_slopes(c);
  } catch (const addmodel::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
