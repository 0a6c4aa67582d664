#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "addmodel/datagen.hpp"
#include "addmodel/penalties.hpp"
#include "addmodel/solver.hpp"
#include "addmodel/spline_basis.hpp"

namespace addmodel {

/// lambda = c_lambda * n^lambda_exponent, mu = c_mu * n^mu_exponent.
struct TuningRule {
  double c_lambda = 14.0;
  double lambda_exponent = -3.0 / 7.0;
  double c_mu = 0.3;
  double mu_exponent = -2.0 / 5.0;

  double lambda(std::size_t n) const;
  double mu(std::size_t n) const;
  void validate() const;
};

enum class Estimator { f_joint, g_joint, f_oracle, g_oracle };
inline constexpr std::array<Estimator, 4> kEstimators = {Estimator::f_joint, Estimator::g_joint,
                                                         Estimator::f_oracle, Estimator::g_oracle};

std::string_view estimator_name(Estimator e);
Estimator parse_estimator(std::string_view name);
/// -6/7 for the f estimators (k = 3), -4/5 for the g estimators (m = 2).
double theoretical_slope(Estimator e);

struct CurvePoint {
  std::size_t n = 0;
  double mse_mean = 0.0;
  double mse_stderr = 0.0;
  int replicates = 0;
};

struct MseCurve {
  Estimator estimator = Estimator::f_joint;
  std::vector<CurvePoint> points;
};

struct SlopeFit {
  Estimator estimator = Estimator::f_joint;
  double slope = 0.0;
  double intercept = 0.0;
  double n_min = 0.0;
  double theoretical_slope = 0.0;
};

struct ComponentMse {
  double f = 0.0;
  double g = 0.0;
};

/// Mean squared error at the design points after centering both the fitted
/// component and the truth to empirical mean zero.
ComponentMse component_mse(const Eigen::VectorXd& f_hat, const Eigen::VectorXd& g_hat,
                           const Dataset& data, const Scenario& scenario);
ComponentMse component_mse(const AdditiveFit& fit, const DesignMatrix& bf, const DesignMatrix& bg,
                           const Dataset& data, const Scenario& scenario);

/// Seed of replicate r in the size-n cell: base xor hash(n, r).
std::uint64_t cell_seed(std::uint64_t seed_base, std::size_t n, int replicate);

/// Everything about one simulated replicate that does not depend on tuning.
struct ReplicateProblem {
  Dataset data;
  Eigen::VectorXd y;
  SplineBasis basis_f;
  SplineBasis basis_g;
  DesignMatrix bf;
  DesignMatrix bg;
  PenaltyMatrix omega_f;  // third derivative
  PenaltyMatrix omega_g;  // second derivative
  AdditiveSystem system;

  static ReplicateProblem prepare(const Scenario& scenario, std::size_t n, std::uint64_t seed);
};

/// MSE of the four estimators, indexed like kEstimators.
using EstimatorMse = std::array<double, 4>;

EstimatorMse run_replicate(const ReplicateProblem& problem, const Scenario& scenario,
                           const TuningRule& rule);

struct MeanStderr {
  double mean = 0.0;
  double standard_error = 0.0;
};

struct CellResult {
  std::size_t n = 0;
  int replicates = 0;
  std::array<MeanStderr, 4> estimates{};
  std::vector<EstimatorMse> per_replicate;
};

MeanStderr mean_stderr(std::span<const double> values);

/// `jobs` <= 0 means hardware concurrency. Results do not depend on it.
CellResult run_cell(const Scenario& scenario, std::size_t n, int replicates, const TuningRule& rule,
                    std::uint64_t seed_base, int jobs = 1);

std::vector<CellResult> run_cells(const Scenario& scenario, std::span<const std::size_t> n_grid,
                                  int replicates, const TuningRule& rule, std::uint64_t seed_base,
                                  int jobs = 0);

/// Four curves (in kEstimators order) over an increasing n grid.
std::vector<MseCurve> curves_from_cells(std::span<const CellResult> cells);
std::vector<MseCurve> run_grid(const Scenario& scenario, std::span<const std::size_t> n_grid,
                               int replicates, const TuningRule& rule, std::uint64_t seed_base,
                               int jobs = 0);

/// {100, 150, ..., 5000}: 99 sample sizes.
std::vector<std::size_t> full_n_grid();
/// {250, 500, 1000, 2000, 4000}.
std::vector<std::size_t> desk_n_grid();

struct TuningCandidate {
  double c_lambda = 0.0;
  double c_mu = 0.0;
  double mse_f = 0.0;
  double mse_g = 0.0;
  double objective = 0.0;  // mse_f + mse_g, averaged over replicates
};

struct TuningResult {
  double c_lambda = 0.0;
  double c_mu = 0.0;
  double objective = 0.0;
  std::vector<TuningCandidate> table;  // sorted by (c_lambda, c_mu)

  /// Objective of a grid pair; throws InputError if the pair is not in the table.
  double objective_at(double c_lambda, double c_mu) const;
};

/// Grid search of the rule constants minimizing mse_f + mse_g of the joint fit;
/// exponents come from `exponents`. Ties go to the smaller c_lambda, then c_mu.
TuningResult tune_constants(const Scenario& scenario, std::size_t n, int replicates,
                            std::span<const double> grid_lambda, std::span<const double> grid_mu,
                            std::uint64_t seed_base, const TuningRule& exponents = {}, int jobs = 0);

/// OLS of log(mse) on log(n) over the points with n >= n_min.
SlopeFit loglog_slope(const MseCurve& curve, double n_min = 1000.0);

/// Writes <prefix>_mse.csv, <prefix>_slopes.csv and (for nonempty curves) <prefix>.gp.
void emit_outputs(std::span<const MseCurve> curves, std::span<const SlopeFit> slopes,
                  const std::filesystem::path& prefix);

std::vector<MseCurve> read_mse_csv(const std::filesystem::path& path);
std::vector<SlopeFit> read_slopes_csv(const std::filesystem::path& path);

}  // namespace addmodel
