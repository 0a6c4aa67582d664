#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "addmodel/penalties.hpp"
#include "addmodel/spline_basis.hpp"

namespace addmodel {

/// Tuning for the criterion
///   ||y - f - g||_n^2 + lambda^2 I^2(f) + mu^2 J^q(g),
/// with J^2 a spline Gram penalty (q = 2) or J the total variation (q = 1).
struct FitConfig {
  double lambda = 0.0;
  double mu = 0.0;
  int q = 2;
  int max_iterations = 500;     // q = 1 only
  double rel_tolerance = 1e-10; // q = 1 only

  void validate() const;
};

/// Piecewise-constant g for q = 1: one level per distinct design value.
struct StepFunction {
  std::vector<double> breakpoints;  // strictly increasing
  std::vector<double> levels;
  std::vector<int> weights;         // tie multiplicities, sum = n

  /// Level of the largest breakpoint <= z; the first level below the range.
  double operator()(double z) const;
  double total_variation() const;
};

struct FitDiagnostics {
  int iterations = 0;
  double residual = 0.0;  // normal-equation sup-norm (for q = 1: of the f block)
  bool converged = true;
  std::vector<double> objective_history;  // q = 1: objective after each sweep
};

struct AdditiveFit {
  Eigen::VectorXd gamma_f;
  std::variant<Eigen::VectorXd, StepFunction> g_component;
  double objective = 0.0;
  FitDiagnostics diagnostics;
  FitConfig config;

  bool is_total_variation() const { return std::holds_alternative<StepFunction>(g_component); }
  const Eigen::VectorXd& gamma_g() const { return std::get<Eigen::VectorXd>(g_component); }
  const StepFunction& steps() const { return std::get<StepFunction>(g_component); }
};

/// Precomputed B^T B / n and B^T y / n for B = [B_f B_g]. Lets many tuning
/// pairs share one pass over the data.
struct AdditiveSystem {
  Eigen::MatrixXd gram;
  Eigen::VectorXd moment;
  Eigen::Index kf = 0;
  Eigen::Index kg = 0;
  std::size_t n = 0;

  static AdditiveSystem build(const Eigen::VectorXd& y, const DesignMatrix& bf,
                              const DesignMatrix& bg);
};

/// Stacked (gamma_f, gamma_g) solving the joint q = 2 normal equations.
Eigen::VectorXd solve_additive_q2(const AdditiveSystem& system, const PenaltyMatrix& omega_f,
                                  const PenaltyMatrix& omega_g, double lambda, double mu);

AdditiveFit fit_additive_q2(const Eigen::VectorXd& y, const DesignMatrix& bf,
                            const DesignMatrix& bg, const PenaltyMatrix& omega_f,
                            const PenaltyMatrix& omega_g, const FitConfig& config);

/// One-component fit: (B^T B / n + tuning^2 Omega) gamma = B^T y / n, by banded Cholesky.
Eigen::VectorXd fit_single(const Eigen::VectorXd& y, const DesignMatrix& b,
                           const PenaltyMatrix& omega, double tuning);

/// Exact minimizer of (1/W) sum_i w_i (values_i - levels_i)^2 + tv_weight * sum_i |levels_{i+1} - levels_i|,
/// with W = sum_i w_i, by the dynamic-programming (message passing) algorithm
/// for the 1-D fused lasso, generalized to weights.
std::vector<double> tv_denoise(std::span<const double> values, std::span<const double> weights,
                               double tv_weight);

/// Spline f plus total-variation g by block-coordinate descent. `initial_levels`
/// (one per distinct z) sets the starting g; zero otherwise.
AdditiveFit fit_additive_tv(const Eigen::VectorXd& y, const DesignMatrix& bf,
                            const PenaltyMatrix& omega_f, std::span<const double> z,
                            const FitConfig& config,
                            std::optional<std::vector<double>> initial_levels = std::nullopt);

/// Criterion value at arbitrary parameters (q = 2).
double additive_objective(const Eigen::VectorXd& y, const DesignMatrix& bf, const DesignMatrix& bg,
                          const PenaltyMatrix& omega_f, const PenaltyMatrix& omega_g,
                          const Eigen::VectorXd& gamma_f, const Eigen::VectorXd& gamma_g,
                          const FitConfig& config);

/// Criterion value at arbitrary parameters (q = 1); `g_at_design` is g(z_i).
double additive_tv_objective(const Eigen::VectorXd& y, const DesignMatrix& bf,
                             const PenaltyMatrix& omega_f, const Eigen::VectorXd& gamma_f,
                             const Eigen::VectorXd& g_at_design, const StepFunction& g,
                             const FitConfig& config);

/// (f_hat(x), g_hat(z)) for a q = 2 fit.
std::pair<double, double> predict(const AdditiveFit& fit, const SplineBasis& basis_f,
                                  const SplineBasis& basis_g, double x, double z);
/// (f_hat(x), g_hat(z)) for a q = 1 fit.
std::pair<double, double> predict(const AdditiveFit& fit, const SplineBasis& basis_f, double x,
                                  double z);

/// In-sample fitted components at the design points.
struct FittedValues {
  Eigen::VectorXd f;
  Eigen::VectorXd g;
};
FittedValues fitted_values(const AdditiveFit& fit, const DesignMatrix& bf, const DesignMatrix& bg);
FittedValues fitted_values(const AdditiveFit& fit, const DesignMatrix& bf, std::span<const double> z);

/// sup-norm of (B^T B / n + P) gamma - B^T y / n for a q = 2 fit.
double kkt_residual(const AdditiveFit& fit, const Eigen::VectorXd& y, const DesignMatrix& bf,
                    const DesignMatrix& bg, const PenaltyMatrix& omega_f,
                    const PenaltyMatrix& omega_g, const FitConfig& config);

}  // namespace addmodel
