#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "addmodel/errors.hpp"
#include "addmodel/penalties.hpp"
#include "addmodel/solver.hpp"
#include "oracles.hpp"

using namespace addmodel;

namespace {

struct Problem {
  std::vector<double> x, z;
  Eigen::VectorXd y;
  SplineBasis basis_f, basis_g;
  DesignMatrix bf, bg;
  PenaltyMatrix omega_f, omega_g;
};

Problem make_problem(std::size_t n, unsigned seed, double noise = 0.5) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd;
  std::vector<double> x(n), z(n);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = u(gen);
    z[i] = 0.6 * x[i] + 0.4 * u(gen);
    y[static_cast<Eigen::Index>(i)] = std::sin(6.0 * x[i]) + (z[i] > 0.5 ? 1.0 : -0.5) + noise * nd(gen);
  }
  SplineBasis bfs = SplineBasis::from_sample(x);
  SplineBasis bgs = SplineBasis::from_sample(z);
  DesignMatrix bf = design_matrix(bfs, x);
  DesignMatrix bg = design_matrix(bgs, z);
  PenaltyMatrix of = penalty_matrix(bfs, 3);
  PenaltyMatrix og = penalty_matrix(bgs, 2);
  return {x, z, y, bfs, bgs, bf, bg, of, og};
}

FitConfig q2(double lambda, double mu) {
  FitConfig c;
  c.lambda = lambda;
  c.mu = mu;
  c.q = 2;
  return c;
}

FitConfig q1(double lambda, double mu) {
  FitConfig c;
  c.lambda = lambda;
  c.mu = mu;
  c.q = 1;
  return c;
}

// Dense penalized system built from scratch.
Eigen::MatrixXd dense_system(const Problem& p, double lambda, double mu) {
  const Eigen::Index kf = p.bf.cols();
  const Eigen::Index kg = p.bg.cols();
  Eigen::MatrixXd b(p.bf.rows(), kf + kg);
  b << p.bf.values, p.bg.values;
  Eigen::MatrixXd a = b.transpose() * b / static_cast<double>(p.y.size());
  a.topLeftCorner(kf, kf) += lambda * lambda * p.omega_f.entries;
  a.bottomRightCorner(kg, kg) += mu * mu * p.omega_g.entries;
  return a;
}

Eigen::VectorXd dense_rhs(const Problem& p) {
  Eigen::MatrixXd b(p.bf.rows(), p.bf.cols() + p.bg.cols());
  b << p.bf.values, p.bg.values;
  return b.transpose() * p.y / static_cast<double>(p.y.size());
}

}  // namespace

TEST_CASE("q=2 zero response gives a zero fit") {
  Problem p = make_problem(300, 1);
  p.y.setZero();
  const AdditiveFit fit = fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, q2(0.1, 0.1));
  CHECK(fit.gamma_f.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.gamma_g().cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.objective == 0.0);
}

TEST_CASE("q=2 matches a dense solve and has a small normal-equation residual") {
  const Problem p = make_problem(1000, 2);
  const double lambda = 0.05, mu = 0.08;
  const AdditiveFit fit = fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, q2(lambda, mu));
  const Eigen::MatrixXd a = dense_system(p, lambda, mu);
  const Eigen::VectorXd ref = a.colPivHouseholderQr().solve(dense_rhs(p));
  Eigen::VectorXd gamma(ref.size());
  gamma << fit.gamma_f, fit.gamma_g();
  const double scale = 1.0 + dense_rhs(p).cwiseAbs().maxCoeff();
  CHECK((a * gamma - dense_rhs(p)).cwiseAbs().maxCoeff() < 1e-8 * scale);
  // Forward agreement is limited by the conditioning of the small-tuning system.
  CHECK((gamma - ref).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
  CHECK(kkt_residual(fit, p.y, p.bf, p.bg, p.omega_f, p.omega_g, fit.config) < 1e-8 * scale);
  CHECK(fit.diagnostics.residual < 1e-8 * scale);
  CHECK(fit.objective ==
        doctest::Approx(additive_objective(p.y, p.bf, p.bg, p.omega_f, p.omega_g, fit.gamma_f,
                                           fit.gamma_g(), fit.config))
            .epsilon(1e-12));
}

TEST_CASE("q=2 solution beats random perturbations") {
  const Problem p = make_problem(400, 3);
  const FitConfig cfg = q2(0.1, 0.2);
  const AdditiveFit fit = fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, cfg);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  int worse = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd df(fit.gamma_f.size()), dg(fit.gamma_g().size());
    for (auto& v : df) v = nd(gen);
    for (auto& v : dg) v = nd(gen);
    const double norm = std::sqrt(df.squaredNorm() + dg.squaredNorm());
    df *= 1e-3 / norm;
    dg *= 1e-3 / norm;
    const double obj = additive_objective(p.y, p.bf, p.bg, p.omega_f, p.omega_g, fit.gamma_f + df,
                                          fit.gamma_g() + dg, cfg);
    if (obj < fit.objective - 1e-12 * std::abs(fit.objective)) ++worse;
  }
  CHECK(worse == 0);
}

TEST_CASE("q=2 huge tuning shrinks everything") {
  const Problem p = make_problem(300, 4);
  const AdditiveFit fit = fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, q2(1e6, 1e6));
  const FittedValues fv = fitted_values(fit, p.bf, p.bg);
  CHECK(fv.f.cwiseAbs().maxCoeff() < 1e-6 * p.y.cwiseAbs().maxCoeff());
  CHECK(fv.g.cwiseAbs().maxCoeff() < 1e-6 * p.y.cwiseAbs().maxCoeff());
}

TEST_CASE("q=2 is invariant to the order of observations") {
  const Problem p = make_problem(500, 6);
  const FitConfig cfg = q2(0.05, 0.1);
  const AdditiveFit fit = fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, cfg);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(p.y.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 gen(8);
  std::shuffle(perm.begin(), perm.end(), gen);
  Problem q = p;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    q.y[static_cast<Eigen::Index>(i)] = p.y[perm[i]];
    q.bf.values.row(static_cast<Eigen::Index>(i)) = p.bf.values.row(perm[i]);
    q.bg.values.row(static_cast<Eigen::Index>(i)) = p.bg.values.row(perm[i]);
  }
  const AdditiveFit other = fit_additive_q2(q.y, q.bf, q.bg, q.omega_f, q.omega_g, cfg);
  CHECK((fit.gamma_f - other.gamma_f).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((fit.gamma_g() - other.gamma_g()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("q=2 penalty value falls as its tuning grows") {
  const Problem p = make_problem(600, 9);
  double previous = 1e300;
  for (double lambda : {0.001, 0.01, 0.05, 0.2, 1.0}) {
    const AdditiveFit fit = fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, q2(lambda, 0.1));
    const double pen = seminorm_value(p.omega_f, fit.gamma_f);
    CHECK(pen <= previous * (1.0 + 1e-10));
    previous = pen;
  }
}

TEST_CASE("q=2 swapping the components swaps the fit") {
  Problem p = make_problem(400, 10);
  // Same design for both components, different penalties.
  p.z = p.x;
  p.basis_g = p.basis_f;
  p.bg = p.bf;
  p.omega_g = penalty_matrix(p.basis_g, 2);
  const AdditiveFit a = fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, q2(0.07, 0.07));
  const AdditiveFit b = fit_additive_q2(p.y, p.bg, p.bf, p.omega_g, p.omega_f, q2(0.07, 0.07));
  const double scale = std::max(1.0, a.gamma_f.cwiseAbs().maxCoeff());
  CHECK((a.gamma_f - b.gamma_g()).cwiseAbs().maxCoeff() < 1e-8 * scale);
  CHECK((a.gamma_g() - b.gamma_f).cwiseAbs().maxCoeff() < 1e-8 * scale);
}

TEST_CASE("q=2 input validation") {
  const Problem p = make_problem(300, 11);
  CHECK_THROWS_AS(fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, q2(0.0, 0.1)), InputError);
  CHECK_THROWS_AS(fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, q2(0.1, -1.0)), InputError);
  CHECK_THROWS_AS(fit_additive_q2(p.y.head(10), p.bf, p.bg, p.omega_f, p.omega_g, q2(0.1, 0.1)),
                  InputError);
  const PenaltyMatrix wrong = penalty_matrix(make_problem(900, 1).basis_f, 3);
  CHECK_THROWS_AS(fit_additive_q2(p.y, p.bf, p.bg, wrong, p.omega_g, q2(0.1, 0.1)), InputError);
  CHECK_THROWS_AS(fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, wrong, q2(0.1, 0.1)), InputError);
  CHECK_THROWS_AS(fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, q1(0.1, 0.1)), InputError);
}

TEST_CASE("kkt residual reacts to a perturbation by the column size") {
  const Problem p = make_problem(500, 12);
  const FitConfig cfg = q2(0.05, 0.1);
  const AdditiveFit fit = fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, cfg);
  const double base = kkt_residual(fit, p.y, p.bf, p.bg, p.omega_f, p.omega_g, cfg);
  const Eigen::MatrixXd a = dense_system(p, 0.05, 0.1);
  const double eps = 1e-3;
  for (Eigen::Index j : {Eigen::Index{0}, Eigen::Index{3}}) {
    AdditiveFit moved = fit;
    moved.gamma_f[j] += eps;
    const double r = kkt_residual(moved, p.y, p.bf, p.bg, p.omega_f, p.omega_g, cfg);
    CHECK(std::abs(r - eps * a.col(j).cwiseAbs().maxCoeff()) <= base + 1e-12);
  }
}

TEST_CASE("single fit: orthonormal design with identity penalty is ridge") {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> nd;
  const Eigen::Index n = 50, k = 7;
  Eigen::MatrixXd raw(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) raw(i, j) = nd(gen);
  }
  DesignMatrix b;
  b.values = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ() * Eigen::MatrixXd::Identity(n, k);
  PenaltyMatrix omega;
  omega.entries = Eigen::MatrixXd::Identity(k, k);
  Eigen::VectorXd y(n);
  for (auto& v : y) v = nd(gen);
  const double t = 0.3;
  const Eigen::VectorXd gamma = fit_single(y, b, omega, t);
  const Eigen::VectorXd expect = b.values.transpose() * y / (static_cast<double>(n) * (1.0 / n + t * t));
  CHECK((gamma - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single fit: zero data, residual, validation") {
  const Problem p = make_problem(800, 14);
  CHECK(fit_single(Eigen::VectorXd::Zero(p.y.size()), p.bf, p.omega_f, 0.1).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd gamma = fit_single(p.y, p.bf, p.omega_f, 0.05);
  const double n = static_cast<double>(p.y.size());
  const Eigen::MatrixXd a = p.bf.values.transpose() * p.bf.values / n + 0.0025 * p.omega_f.entries;
  const Eigen::VectorXd rhs = p.bf.values.transpose() * p.y / n;
  CHECK((a * gamma - rhs).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff()));
  CHECK_THROWS_AS(fit_single(p.y, p.bf, p.omega_f, 0.0), InputError);
}

TEST_CASE("predict: zero coefficients, clamping and design-point agreement") {
  const Problem p = make_problem(400, 15);
  AdditiveFit fit = fit_additive_q2(p.y, p.bf, p.bg, p.omega_f, p.omega_g, q2(0.05, 0.1));
  const FittedValues fv = fitted_values(fit, p.bf, p.bg);
  for (std::size_t i = 0; i < p.x.size(); i += 37) {
    const auto [f, g] = predict(fit, p.basis_f, p.basis_g, p.x[i], p.z[i]);
    CHECK(f == doctest::Approx(fv.f[static_cast<Eigen::Index>(i)]).epsilon(1e-12));
    CHECK(g == doctest::Approx(fv.g[static_cast<Eigen::Index>(i)]).epsilon(1e-12));
  }
  const auto lo = predict(fit, p.basis_f, p.basis_g, p.basis_f.knots().lower(), p.basis_g.knots().lower());
  const auto below = predict(fit, p.basis_f, p.basis_g, -5.0, -5.0);
  CHECK(lo == below);
  CHECK_THROWS_AS(predict(fit, p.basis_f, 0.3, 0.3), InputError);
  fit.gamma_f.setZero();
  CHECK(predict(fit, p.basis_f, p.basis_g, 0.3, 0.3).first == 0.0);
}

TEST_CASE("q=1 zero response gives a zero fit") {
  Problem p = make_problem(300, 16);
  p.y.setZero();
  const AdditiveFit fit = fit_additive_tv(p.y, p.bf, p.omega_f, p.z, q1(0.1, 0.1));
  CHECK(fit.gamma_f.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.steps().total_variation() == 0.0);
  CHECK(fit.objective == 0.0);
  CHECK(fit.diagnostics.converged);
}

TEST_CASE("q=1 reaches the exhaustive-search optimum from many starts") {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd;
  for (int instance = 0; instance < 5; ++instance) {
    const std::size_t n = 12;
    std::vector<double> x(n), z(n);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = u(gen);
      z[i] = std::floor(8.0 * u(gen)) / 8.0;  // at most 8 distinct values, with ties
      y[static_cast<Eigen::Index>(i)] = 2.0 * x[i] + (z[i] > 0.4 ? 1.0 : 0.0) + 0.3 * nd(gen);
    }
    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    const SplineBasis basis(build_knots(sorted, 6));
    const DesignMatrix bf = design_matrix(basis, x);
    const PenaltyMatrix omega = penalty_matrix(basis, 3);
    const double lambda = 0.05, mu = 0.3;
    const oracle::JointTvSolution ref = oracle::brute_force_joint_tv(y, bf.values, omega.entries, z, lambda, mu);

    std::vector<double> distinct = z;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (int start = 0; start < 50; ++start) {
      std::vector<double> init(distinct.size());
      for (double& v : init) v = 3.0 * nd(gen);
      const AdditiveFit fit = fit_additive_tv(y, bf, omega, z, q1(lambda, mu), init);
      CHECK(fit.diagnostics.converged);
      CHECK(fit.objective == doctest::Approx(ref.objective).epsilon(1e-6));
    }
  }
}

TEST_CASE("q=1 objective history never increases and the fit is consistent") {
  const Problem p = make_problem(2000, 18);
  const FitConfig cfg = q1(0.02, 0.15);
  const AdditiveFit fit = fit_additive_tv(p.y, p.bf, p.omega_f, p.z, cfg);
  const auto& h = fit.diagnostics.objective_history;
  REQUIRE(!h.empty());
  for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1]);
  CHECK(fit.diagnostics.converged);
  CHECK(fit.diagnostics.iterations <= cfg.max_iterations);
  const FittedValues fv = fitted_values(fit, p.bf, p.z);
  CHECK(fit.objective == doctest::Approx(additive_tv_objective(p.y, p.bf, p.omega_f, fit.gamma_f, fv.g,
                                                               fit.steps(), cfg))
                             .epsilon(1e-12));
  const StepFunction& g = fit.steps();
  CHECK(std::accumulate(g.weights.begin(), g.weights.end(), 0) == 2000);
  CHECK(std::is_sorted(g.breakpoints.begin(), g.breakpoints.end()));
}

TEST_CASE("q=1 total variation falls as mu grows") {
  const Problem p = make_problem(800, 19);
  double previous = 1e300;
  for (double mu : {0.05, 0.1, 0.3, 1.0}) {
    const AdditiveFit fit = fit_additive_tv(p.y, p.bf, p.omega_f, p.z, q1(0.05, mu));
    const double tv = fit.steps().total_variation();
    CHECK(tv <= previous + 1e-6);
    previous = tv;
  }
}

TEST_CASE("q=1 stopping after one sweep is reported as not converged") {
  const Problem p = make_problem(800, 20);
  FitConfig cfg = q1(0.05, 0.1);
  cfg.max_iterations = 1;
  const AdditiveFit fit = fit_additive_tv(p.y, p.bf, p.omega_f, p.z, cfg);
  CHECK(fit.diagnostics.iterations == 1);
  CHECK_FALSE(fit.diagnostics.converged);
}

TEST_CASE("q=1 step function evaluation and prediction") {
  const Problem p = make_problem(500, 21);
  const AdditiveFit fit = fit_additive_tv(p.y, p.bf, p.omega_f, p.z, q1(0.05, 0.2));
  const StepFunction& g = fit.steps();
  CHECK(g(g.breakpoints.front() - 1.0) == g.levels.front());
  CHECK(g(g.breakpoints.back() + 1.0) == g.levels.back());
  const FittedValues fv = fitted_values(fit, p.bf, p.z);
  for (std::size_t i = 0; i < p.z.size(); i += 41) {
    const auto [f, gz] = predict(fit, p.basis_f, p.x[i], p.z[i]);
    CHECK(f == doctest::Approx(fv.f[static_cast<Eigen::Index>(i)]).epsilon(1e-12));
    CHECK(gz == fv.g[static_cast<Eigen::Index>(i)]);
  }
  CHECK_THROWS_AS(kkt_residual(fit, p.y, p.bf, p.bg, p.omega_f, p.omega_g, fit.config), InputError);
}

TEST_CASE("q=1 input validation") {
  const Problem p = make_problem(300, 22);
  CHECK_THROWS_AS(fit_additive_tv(p.y, p.bf, p.omega_f, p.z, q1(0.0, 0.1)), InputError);
  CHECK_THROWS_AS(fit_additive_tv(p.y, p.bf, p.omega_f, p.z, q2(0.1, 0.1)), InputError);
  CHECK_THROWS_AS(fit_additive_tv(p.y, p.bf, p.omega_f, std::span(p.z).first(10), q1(0.1, 0.1)),
                  InputError);
  CHECK_THROWS_AS(fit_additive_tv(p.y, p.bf, p.omega_f, p.z, q1(0.1, 0.1), std::vector<double>{1.0}),
                  InputError);
}
