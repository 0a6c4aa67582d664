#include "addmodel/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "addmodel/errors.hpp"

namespace addmodel {

double TuningRule::lambda(std::size_t n) const {
  return c_lambda * std::pow(static_cast<double>(n), lambda_exponent);
}

double TuningRule::mu(std::size_t n) const {
  return c_mu * std::pow(static_cast<double>(n), mu_exponent);
}

void TuningRule::validate() const {
  if (!(c_lambda > 0.0) || !(c_mu > 0.0)) throw InputError("TuningRule: constants must be positive");
  if (!(lambda_exponent < 0.0) || !(mu_exponent < 0.0)) {
    throw InputError("TuningRule: exponents must be negative");
  }
}

std::string_view estimator_name(Estimator e) {
  switch (e) {
    case Estimator::f_joint: return "f_joint";
    case Estimator::g_joint: return "g_joint";
    case Estimator::f_oracle: return "f_oracle";
    case Estimator::g_oracle: return "g_oracle";
  }
  return "unknown";
}

Estimator parse_estimator(std::string_view name) {
  for (Estimator e : kEstimators) {
    if (estimator_name(e) == name) return e;
  }
  throw InputError(fmt::format("unknown estimator '{}'", name));
}

double theoretical_slope(Estimator e) {
  return (e == Estimator::f_joint || e == Estimator::f_oracle) ? -6.0 / 7.0 : -4.0 / 5.0;
}

namespace {

double centered_mse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  const Eigen::VectorXd diff = estimate - truth;
  return (diff.array() - diff.mean()).square().mean();
}

// Runs task(i) for i in [0, count) on up to `jobs` threads. The first failure
// in index order is rethrown after all workers stop.
template <typename Task>
void parallel_for(std::size_t count, int jobs, Task&& task) {
  std::size_t workers = jobs > 0 ? static_cast<std::size_t>(jobs)
                                 : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
}

// Rethrows the active exception with the cell identified, keeping its category.
[[noreturn]] void rethrow_in_cell(std::size_t n, int replicate, std::uint64_t seed) {
  const std::string where = fmt::format("cell n={} replicate={} seed={}", n, replicate, seed);
  try {
    throw;
  } catch (const InputError& e) {
    throw InputError(fmt::format("{}: {}", where, e.what()));
  } catch (const std::exception& e) {
    throw NumericalError(fmt::format("{}: {}", where, e.what()));
  }
}

}  // namespace

ComponentMse component_mse(const Eigen::VectorXd& f_hat, const Eigen::VectorXd& g_hat,
                           const Dataset& data, const Scenario& scenario) {
  const auto n = static_cast<Eigen::Index>(data.size());
  if (f_hat.size() != n || g_hat.size() != n) {
    throw InputError("component_mse: fitted values do not match the dataset size");
  }
  Eigen::VectorXd f_true(n);
  Eigen::VectorXd g_true(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    f_true[i] = scenario.f0(data.x[static_cast<std::size_t>(i)]);
    g_true[i] = scenario.g0(data.z[static_cast<std::size_t>(i)]);
  }
  return {centered_mse(f_hat, f_true), centered_mse(g_hat, g_true)};
}

ComponentMse component_mse(const AdditiveFit& fit, const DesignMatrix& bf, const DesignMatrix& bg,
                           const Dataset& data, const Scenario& scenario) {
  const FittedValues values = fitted_values(fit, bf, bg);
  return component_mse(values.f, values.g, data, scenario);
}

std::uint64_t cell_seed(std::uint64_t seed_base, std::size_t n, int replicate) {
  return seed_base ^ mix64(mix64(static_cast<std::uint64_t>(n)) + static_cast<std::uint64_t>(replicate));
}

ReplicateProblem ReplicateProblem::prepare(const Scenario& scenario, std::size_t n,
                                           std::uint64_t seed) {
  Dataset data = simulate(scenario, n, seed);
  SplineBasis basis_f = SplineBasis::from_sample(data.x);
  SplineBasis basis_g = SplineBasis::from_sample(data.z);
  DesignMatrix bf = design_matrix(basis_f, data.x);
  DesignMatrix bg = design_matrix(basis_g, data.z);
  PenaltyMatrix omega_f = penalty_matrix(basis_f, 3);
  PenaltyMatrix omega_g = penalty_matrix(basis_g, 2);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.y.data(), static_cast<Eigen::Index>(n));
  AdditiveSystem system = AdditiveSystem::build(y, bf, bg);
  return {std::move(data), std::move(y), std::move(basis_f), std::move(basis_g), std::move(bf),
          std::move(bg), std::move(omega_f), std::move(omega_g), std::move(system)};
}

EstimatorMse run_replicate(const ReplicateProblem& p, const Scenario& scenario,
                           const TuningRule& rule) {
  const std::size_t n = p.data.size();
  const double lambda = rule.lambda(n);
  const double mu = rule.mu(n);

  const Eigen::VectorXd gamma = solve_additive_q2(p.system, p.omega_f, p.omega_g, lambda, mu);
  const Eigen::VectorXd f_joint = p.bf.values * gamma.head(p.system.kf);
  const Eigen::VectorXd g_joint = p.bg.values * gamma.tail(p.system.kg);

  Eigen::VectorXd y_f = p.y;
  Eigen::VectorXd y_g = p.y;
  for (std::size_t i = 0; i < n; ++i) {
    y_f[static_cast<Eigen::Index>(i)] -= scenario.g0(p.data.z[i]);
    y_g[static_cast<Eigen::Index>(i)] -= scenario.f0(p.data.x[i]);
  }
  const Eigen::VectorXd f_oracle = p.bf.values * fit_single(y_f, p.bf, p.omega_f, lambda);
  const Eigen::VectorXd g_oracle = p.bg.values * fit_single(y_g, p.bg, p.omega_g, mu);

  const ComponentMse joint = component_mse(f_joint, g_joint, p.data, scenario);
  const ComponentMse oracle = component_mse(f_oracle, g_oracle, p.data, scenario);
  return {joint.f, joint.g, oracle.f, oracle.g};
}

MeanStderr mean_stderr(std::span<const double> values) {
  MeanStderr out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double var = ss / static_cast<double>(values.size() - 1);
    out.standard_error = std::sqrt(var / static_cast<double>(values.size()));
  }
  return out;
}

namespace {

CellResult summarize(std::size_t n, std::vector<EstimatorMse> per_replicate) {
  CellResult cell;
  cell.n = n;
  cell.replicates = static_cast<int>(per_replicate.size());
  for (std::size_t e = 0; e < kEstimators.size(); ++e) {
    std::vector<double> column;
    column.reserve(per_replicate.size());
    for (const auto& r : per_replicate) column.push_back(r[e]);
    cell.estimates[e] = mean_stderr(column);
  }
  cell.per_replicate = std::move(per_replicate);
  return cell;
}

}  // namespace

std::vector<CellResult> run_cells(const Scenario& scenario, std::span<const std::size_t> n_grid,
                                  int replicates, const TuningRule& rule, std::uint64_t seed_base,
                                  int jobs) {
  if (replicates < 1) throw InputError("run_cell: replicates must be >= 1");
  if (n_grid.empty()) throw InputError("run_grid: empty n grid");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1]) throw InputError("run_grid: n grid must be strictly increasing");
  }
  rule.validate();
  const auto reps = static_cast<std::size_t>(replicates);
  std::vector<EstimatorMse> results(n_grid.size() * reps);
  parallel_for(results.size(), jobs, [&](std::size_t task) {
    const std::size_t n = n_grid[task / reps];
    const int r = static_cast<int>(task % reps);
    const std::uint64_t seed = cell_seed(seed_base, n, r);
    try {
      results[task] = run_replicate(ReplicateProblem::prepare(scenario, n, seed), scenario, rule);
    } catch (...) {
      rethrow_in_cell(n, r, seed);
    }
  });
  std::vector<CellResult> cells;
  cells.reserve(n_grid.size());
  for (std::size_t c = 0; c < n_grid.size(); ++c) {
    cells.push_back(summarize(n_grid[c], {results.begin() + static_cast<std::ptrdiff_t>(c * reps),
                                          results.begin() + static_cast<std::ptrdiff_t>((c + 1) * reps)}));
  }
  return cells;
}

CellResult run_cell(const Scenario& scenario, std::size_t n, int replicates, const TuningRule& rule,
                    std::uint64_t seed_base, int jobs) {
  const std::size_t grid[] = {n};
  return run_cells(scenario, grid, replicates, rule, seed_base, jobs).front();
}

std::vector<MseCurve> curves_from_cells(std::span<const CellResult> cells) {
  std::vector<MseCurve> curves;
  for (std::size_t e = 0; e < kEstimators.size(); ++e) {
    MseCurve curve;
    curve.estimator = kEstimators[e];
    for (const CellResult& cell : cells) {
      curve.points.push_back(
          {cell.n, cell.estimates[e].mean, cell.estimates[e].standard_error, cell.replicates});
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::vector<MseCurve> run_grid(const Scenario& scenario, std::span<const std::size_t> n_grid,
                               int replicates, const TuningRule& rule, std::uint64_t seed_base,
                               int jobs) {
  return curves_from_cells(run_cells(scenario, n_grid, replicates, rule, seed_base, jobs));
}

std::vector<std::size_t> full_n_grid() {
  std::vector<std::size_t> grid;
  for (std::size_t n = 100; n <= 5000; n += 50) grid.push_back(n);
  return grid;
}

std::vector<std::size_t> desk_n_grid() { return {250, 500, 1000, 2000, 4000}; }

double TuningResult::objective_at(double c_lambda_, double c_mu_) const {
  for (const auto& c : table) {
    if (std::abs(c.c_lambda - c_lambda_) < 1e-12 && std::abs(c.c_mu - c_mu_) < 1e-12) return c.objective;
  }
  throw InputError(fmt::format("({}, {}) is not on the tuning grid", c_lambda_, c_mu_));
}

TuningResult tune_constants(const Scenario& scenario, std::size_t n, int replicates,
                            std::span<const double> grid_lambda, std::span<const double> grid_mu,
                            std::uint64_t seed_base, const TuningRule& exponents, int jobs) {
  if (grid_lambda.empty() || grid_mu.empty()) throw InputError("tune_constants: empty grid");
  if (replicates < 1) throw InputError("tune_constants: replicates must be >= 1");
  std::vector<double> cl(grid_lambda.begin(), grid_lambda.end());
  std::vector<double> cm(grid_mu.begin(), grid_mu.end());
  std::sort(cl.begin(), cl.end());
  std::sort(cm.begin(), cm.end());
  for (double c : cl) if (!(c > 0.0)) throw InputError("tune_constants: lambda constants must be positive");
  for (double c : cm) if (!(c > 0.0)) throw InputError("tune_constants: mu constants must be positive");

  const std::size_t pairs = cl.size() * cm.size();
  const auto reps = static_cast<std::size_t>(replicates);
  // mse[r][pair] = (mse_f, mse_g)
  std::vector<std::vector<ComponentMse>> mse(reps, std::vector<ComponentMse>(pairs));
  parallel_for(reps, jobs, [&](std::size_t r) {
    const std::uint64_t seed = cell_seed(seed_base, n, static_cast<int>(r));
    try {
      const ReplicateProblem p = ReplicateProblem::prepare(scenario, n, seed);
      for (std::size_t i = 0; i < cl.size(); ++i) {
        for (std::size_t j = 0; j < cm.size(); ++j) {
          const double lambda = cl[i] * std::pow(static_cast<double>(n), exponents.lambda_exponent);
          const double mu = cm[j] * std::pow(static_cast<double>(n), exponents.mu_exponent);
          const Eigen::VectorXd gamma = solve_additive_q2(p.system, p.omega_f, p.omega_g, lambda, mu);
          mse[r][i * cm.size() + j] =
              component_mse(p.bf.values * gamma.head(p.system.kf),
                            p.bg.values * gamma.tail(p.system.kg), p.data, scenario);
        }
      }
    } catch (...) {
      rethrow_in_cell(n, static_cast<int>(r), seed);
    }
  });

  TuningResult result;
  result.objective = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cl.size(); ++i) {
    for (std::size_t j = 0; j < cm.size(); ++j) {
      TuningCandidate c{cl[i], cm[j], 0.0, 0.0, 0.0};
      for (std::size_t r = 0; r < reps; ++r) {
        c.mse_f += mse[r][i * cm.size() + j].f;
        c.mse_g += mse[r][i * cm.size() + j].g;
      }
      c.mse_f /= static_cast<double>(reps);
      c.mse_g /= static_cast<double>(reps);
      c.objective = c.mse_f + c.mse_g;
      if (c.objective < result.objective) {
        result.objective = c.objective;
        result.c_lambda = c.c_lambda;
        result.c_mu = c.c_mu;
      }
      result.table.push_back(c);
    }
  }
  return result;
}

SlopeFit loglog_slope(const MseCurve& curve, double n_min) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (const CurvePoint& p : curve.points) {
    if (static_cast<double>(p.n) >= n_min) {
      if (!(p.mse_mean > 0.0)) throw InputError("loglog_slope: MSE values must be positive");
      lx.push_back(std::log(static_cast<double>(p.n)));
      ly.push_back(std::log(p.mse_mean));
    }
  }
  if (lx.size() < 2) {
    throw InputError(fmt::format("loglog_slope: {} has fewer than 2 points with n >= {}",
                                 estimator_name(curve.estimator), n_min));
  }
  const double m = static_cast<double>(lx.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw InputError("loglog_slope: qualifying points share a single n");
  SlopeFit fit;
  fit.estimator = curve.estimator;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.n_min = n_min;
  fit.theoretical_slope = theoretical_slope(curve.estimator);
  return fit;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot open {} for writing", path.string()));
  return out;
}

std::filesystem::path with_suffix(const std::filesystem::path& prefix, std::string_view suffix) {
  return std::filesystem::path(prefix.string() + std::string(suffix));
}

std::string gnuplot_script(std::span<const MseCurve> curves, std::span<const SlopeFit> slopes,
                           const std::filesystem::path& prefix) {
  const std::string mse = with_suffix(prefix, "_mse.csv").filename().string();
  const std::string stem = prefix.filename().string();
  auto series = [](Estimator e, bool logs) {
    const auto name = estimator_name(e);
    return logs ? fmt::format("(strcol(1) eq \"{0}\" ? log($2) : NaN):(log($3)) with linespoints title \"{0}\"", name)
                : fmt::format("(strcol(1) eq \"{0}\" ? $2 : NaN):3 with linespoints title \"{0}\"", name);
  };
  std::string s;
  s += "# MSE curves and log-log rate panels. Run from the directory holding the CSVs.\n";
  s += "set datafile separator \",\"\n";
  s += "set key top right\n";
  s += "set terminal pngcairo size 900,600\n";
  s += fmt::format("set output \"{}_mse.png\"\n", stem);
  s += "set xlabel \"n\"\nset ylabel \"MSE\"\n";
  s += "plot ";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    s += fmt::format("{}\"{}\" using {}", i ? ", \\\n     " : "", mse, series(curves[i].estimator, false));
  }
  s += "\n\n";
  s += "set terminal pngcairo size 1200,500\n";
  s += fmt::format("set output \"{}_loglog.png\"\n", stem);
  s += "set multiplot layout 1,2\n";
  s += "set xlabel \"log(n)\"\nset ylabel \"log(MSE)\"\n";
  for (char component : {'f', 'g'}) {
    std::vector<const MseCurve*> panel;
    for (const auto& c : curves) {
      if (estimator_name(c.estimator).front() == component) panel.push_back(&c);
    }
    if (panel.empty()) continue;
    const SlopeFit* guide = nullptr;
    for (const auto& sf : slopes) {
      if (estimator_name(sf.estimator).front() == component) {
        guide = &sf;
        break;
      }
    }
    s += fmt::format("set title \"{} component\"\n", component);
    s += "plot ";
    for (std::size_t i = 0; i < panel.size(); ++i) {
      s += fmt::format("{}\"{}\" using {}", i ? ", \\\n     " : "", mse, series(panel[i]->estimator, true));
    }
    if (guide != nullptr) {
      s += fmt::format(", \\\n     {:.17g} + ({:.17g})*x with lines lc rgb \"black\" title \"slope {:.4f}\"",
                       guide->intercept, guide->theoretical_slope, guide->theoretical_slope);
    }
    s += "\n";
  }
  s += "unset multiplot\n";
  return s;
}

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path,
                                                    std::string_view expected_header) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != expected_header) {
    throw InputError(fmt::format("{}: expected header '{}'", path.string(), expected_header));
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream stream(line);
    std::string cell;
    while (std::getline(stream, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

template <typename T>
T parse_field(const std::string& text, const std::filesystem::path& path) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InputError(fmt::format("{}: cannot parse '{}'", path.string(), text));
  }
  return value;
}

constexpr std::string_view kMseHeader = "estimator,n,mse,stderr,replicates";
constexpr std::string_view kSlopeHeader = "estimator,slope,intercept,theoretical_slope,n_min";

}  // namespace

void emit_outputs(std::span<const MseCurve> curves, std::span<const SlopeFit> slopes,
                  const std::filesystem::path& prefix) {
  {
    auto out = open_for_write(with_suffix(prefix, "_mse.csv"));
    out << kMseHeader << '\n';
    for (const MseCurve& curve : curves) {
      for (const CurvePoint& p : curve.points) {
        out << fmt::format("{},{},{:.17g},{:.17g},{}\n", estimator_name(curve.estimator), p.n,
                           p.mse_mean, p.mse_stderr, p.replicates);
      }
    }
    if (!out) throw InputError(fmt::format("write failed for {}_mse.csv", prefix.string()));
  }
  {
    auto out = open_for_write(with_suffix(prefix, "_slopes.csv"));
    out << kSlopeHeader << '\n';
    for (const SlopeFit& s : slopes) {
      out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", estimator_name(s.estimator),
                         s.slope, s.intercept, s.theoretical_slope, s.n_min);
    }
    if (!out) throw InputError(fmt::format("write failed for {}_slopes.csv", prefix.string()));
  }
  if (curves.empty()) return;
  auto out = open_for_write(with_suffix(prefix, ".gp"));
  out << gnuplot_script(curves, slopes, prefix);
  if (!out) throw InputError(fmt::format("write failed for {}.gp", prefix.string()));
}

std::vector<MseCurve> read_mse_csv(const std::filesystem::path& path) {
  std::vector<MseCurve> curves;
  for (const auto& row : read_csv_rows(path, kMseHeader)) {
    if (row.size() != 5) throw InputError(fmt::format("{}: malformed row", path.string()));
    const Estimator e = parse_estimator(row[0]);
    auto it = std::find_if(curves.begin(), curves.end(), [e](const MseCurve& c) { return c.estimator == e; });
    if (it == curves.end()) {
      curves.push_back({e, {}});
      it = std::prev(curves.end());
    }
    it->points.push_back({parse_field<std::size_t>(row[1], path), parse_field<double>(row[2], path),
                          parse_field<double>(row[3], path), parse_field<int>(row[4], path)});
  }
  return curves;
}

std::vector<SlopeFit> read_slopes_csv(const std::filesystem::path& path) {
  std::vector<SlopeFit> slopes;
  for (const auto& row : read_csv_rows(path, kSlopeHeader)) {
    if (row.size() != 5) throw InputError(fmt::format("{}: malformed row", path.string()));
    slopes.push_back({parse_estimator(row[0]), parse_field<double>(row[1], path),
                      parse_field<double>(row[2], path), parse_field<double>(row[4], path),
                      parse_field<double>(row[3], path)});
  }
  return slopes;
}

}  // namespace addmodel
