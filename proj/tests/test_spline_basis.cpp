#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "addmodel/errors.hpp"
#include "addmodel/spline_basis.hpp"
#include "oracles.hpp"

using namespace addmodel;

namespace {

std::vector<double> uniform_sample(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> xs(n);
  for (double& x : xs) x = u(gen);
  return xs;
}

double distance_to_knots(const SplineBasis& basis, double x) {
  double best = 1e300;
  for (double t : basis.knots().values()) best = std::min(best, std::abs(x - t));
  return best;
}

}  // namespace

TEST_CASE("basis dimension grows like 3 sqrt(n) / 5") {
  CHECK(basis_dimension(100) == 6);
  CHECK(basis_dimension(5000) == 43);
  CHECK(basis_dimension(101) == 7);
  CHECK_THROWS_AS(basis_dimension(25), InputError);
  CHECK_THROWS_AS(basis_dimension(1), InputError);
}

TEST_CASE("knots for n = 100 have no interior knots") {
  std::vector<double> xs(100);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i) / 99.0;
  const SplineBasis basis = SplineBasis::from_sample(xs);
  const auto t = basis.knots().values();
  REQUIRE(t.size() == 12u);
  for (int i = 0; i < 6; ++i) {
    CHECK(t[i] == 0.0);
    CHECK(t[6 + i] == 1.0);
  }
}

TEST_CASE("interior knots sit at evenly spaced ranks") {
  std::vector<double> xs(102);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i) / 101.0;
  const KnotVector knots = build_knots(xs, 10);
  const auto t = knots.values();
  REQUIRE(t.size() == 16u);
  const std::size_t ranks[] = {21, 41, 61, 81};
  for (int j = 0; j < 4; ++j) CHECK(t[6 + j] == xs[ranks[j] - 1]);
  CHECK(t.front() == 0.0);
  CHECK(t.back() == 1.0);
}

TEST_CASE("tied knot candidates are separated") {
  // Half the sample sits on one value, so several ranks land on the same number.
  std::vector<double> xs;
  for (int i = 0; i < 60; ++i) xs.push_back(0.5);
  for (int i = 0; i < 40; ++i) xs.push_back(0.01 * (i + 1) + (i >= 20 ? 0.5 : 0.0));
  xs.push_back(0.0);
  std::sort(xs.begin(), xs.end());
  const KnotVector knots = build_knots(xs, 12);
  const auto t = knots.values();
  for (int i = 6; i < 12; ++i) {
    CHECK(t[i] > t[i - 1]);
    CHECK(t[i] < t.back());
  }
}

TEST_CASE("degenerate samples are rejected") {
  std::vector<double> constant(100, 0.3);
  CHECK_THROWS_AS(SplineBasis::from_sample(constant), InputError);
  std::vector<double> unsorted = {0.0, 1.0, 0.5};
  CHECK_THROWS_AS(build_knots(unsorted, 6), InputError);
}

TEST_CASE("knot vector validation") {
  CHECK_NOTHROW(KnotVector({0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1}));
  CHECK_THROWS_AS(KnotVector({0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1}), InputError);
  CHECK_THROWS_AS(KnotVector({0, 0, 0, 0, 0, 0.1, 0.5, 1, 1, 1, 1, 1, 1}), InputError);
  CHECK_THROWS_AS(KnotVector({0, 0, 0, 0, 0, 0, 0.6, 0.5, 1, 1, 1, 1, 1, 1}), InputError);
  CHECK_THROWS_AS(KnotVector({1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1}), InputError);
}

TEST_CASE("partition of unity, nonnegativity and local support") {
  const auto xs = uniform_sample(5000, 1);
  const SplineBasis basis = SplineBasis::from_sample(xs);
  REQUIRE(basis.dimension() == 43);
  const auto t = basis.knots().values();
  double worst = 0.0;
  for (int i = 0; i <= 10000; ++i) {
    const double x = basis.knots().lower() + (basis.knots().upper() - basis.knots().lower()) * i / 10000.0;
    const Eigen::VectorXd b = basis.evaluate(x);
    worst = std::max(worst, std::abs(b.sum() - 1.0));
    CHECK(b.minCoeff() >= 0.0);
    for (int j = 0; j < basis.dimension(); ++j) {
      if (x < t[j] || x > t[j + 6]) CHECK(b[j] == 0.0);
    }
    CHECK((b.array() != 0.0).count() <= 6);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("end points evaluate to unit vectors") {
  const auto xs = uniform_sample(500, 2);
  const SplineBasis basis = SplineBasis::from_sample(xs);
  const Eigen::VectorXd left = basis.evaluate(basis.knots().lower());
  const Eigen::VectorXd right = basis.evaluate(basis.knots().upper());
  const int k = basis.dimension();
  CHECK(left[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(left.tail(k - 1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(right[k - 1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(right.head(k - 1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("points outside the range evaluate at the nearest end") {
  const auto xs = uniform_sample(500, 3);
  const SplineBasis basis = SplineBasis::from_sample(xs);
  for (int d = 0; d <= 3; ++d) {
    CHECK(basis.evaluate(-2.0, d) == basis.evaluate(basis.knots().lower(), d));
    CHECK(basis.evaluate(7.0, d) == basis.evaluate(basis.knots().upper(), d));
  }
}

TEST_CASE("derivatives agree with finite differences") {
  const auto xs = uniform_sample(2000, 4);
  const SplineBasis basis = SplineBasis::from_sample(xs);
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> u(basis.knots().lower(), basis.knots().upper());
  const double h = 1e-6;
  int checked = 0;
  while (checked < 200) {
    const double x = u(gen);
    if (distance_to_knots(basis, x) < 1e-3) continue;
    ++checked;
    for (int d = 1; d <= 3; ++d) {
      const Eigen::VectorXd fd = oracle::central_difference(
          [&](double s) { return basis.evaluate(s, d - 1); }, x, h);
      const Eigen::VectorXd exact = basis.evaluate(x, d);
      const double scale = std::max(1.0, exact.cwiseAbs().maxCoeff());
      CHECK((fd - exact).cwiseAbs().maxCoeff() <= 1e-5 * scale);
    }
  }
}

TEST_CASE("degree-5 polynomials are reproduced on a single segment") {
  const SplineBasis basis(KnotVector({0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1}));
  auto p = [](double x) { return 1.0 - 2.0 * x + 0.5 * x * x * x - 3.0 * std::pow(x, 5); };
  Eigen::MatrixXd a(6, 6);
  Eigen::VectorXd rhs(6);
  for (int i = 0; i < 6; ++i) {
    const double x = (i + 0.5) / 6.0;
    a.row(i) = basis.evaluate(x).transpose();
    rhs[i] = p(x);
  }
  const Eigen::VectorXd c = a.fullPivLu().solve(rhs);
  for (int i = 0; i <= 50; ++i) {
    const double x = i / 50.0;
    CHECK(basis.value(c, x) == doctest::Approx(p(x)).epsilon(1e-10));
  }
  // Derivative of a degree-5 fit is exact as well.
  CHECK(basis.value(c, 0.3, 1) ==
        doctest::Approx(-2.0 + 1.5 * 0.09 - 15.0 * std::pow(0.3, 4)).epsilon(1e-9));
}

TEST_CASE("sixth derivative request is rejected") {
  const SplineBasis basis(KnotVector({0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1}));
  CHECK_THROWS_AS(basis.evaluate(0.5, 6), InputError);
  CHECK_THROWS_AS(basis.evaluate(0.5, -1), InputError);
}

TEST_CASE("design matrix rows match pointwise evaluation") {
  const auto xs = uniform_sample(800, 5);
  const SplineBasis basis = SplineBasis::from_sample(xs);
  const DesignMatrix b = design_matrix(basis, xs);
  REQUIRE(b.rows() == 800);
  REQUIRE(b.cols() == basis.dimension());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Eigen::VectorXd row = basis.evaluate(xs[i]);
    CHECK((b.values.row(static_cast<Eigen::Index>(i)).transpose() - row).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((b.values.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(b.sample_points == xs);
}

TEST_CASE("fingerprint separates different knot vectors") {
  const KnotVector a({0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1});
  const KnotVector b({0, 0, 0, 0, 0, 0, 2, 2, 2, 2, 2, 2});
  CHECK(a.fingerprint() != b.fingerprint());
  CHECK(a.fingerprint() == KnotVector({0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1}).fingerprint());
}
