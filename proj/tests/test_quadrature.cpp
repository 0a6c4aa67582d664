#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "addmodel/errors.hpp"
#include "addmodel/quadrature.hpp"

using namespace addmodel;

TEST_CASE("gauss-legendre integrates monomials up to degree 2p-1 exactly") {
  for (int p = 1; p <= 16; ++p) {
    const QuadratureRule rule = gauss_legendre(p);
    REQUIRE(rule.nodes.size() == static_cast<std::size_t>(p));
    for (int deg = 0; deg <= 2 * p - 1; ++deg) {
      double sum = 0.0;
      for (int i = 0; i < p; ++i) sum += rule.weights[i] * std::pow(rule.nodes[i], deg);
      const double exact = deg % 2 == 1 ? 0.0 : 2.0 / (deg + 1);
      CHECK(sum == doctest::Approx(exact).epsilon(1e-13));
    }
  }
}

TEST_CASE("gauss-legendre nodes are symmetric and sorted") {
  const QuadratureRule rule = gauss_legendre(7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(rule.nodes[i] == doctest::Approx(-rule.nodes[6 - i]).epsilon(1e-15));
    CHECK(rule.weights[i] == doctest::Approx(rule.weights[6 - i]).epsilon(1e-14));
    if (i > 0) CHECK(rule.nodes[i] > rule.nodes[i - 1]);
  }
  CHECK(std::abs(rule.nodes[3]) < 1e-15);
}

TEST_CASE("gauss-legendre rejects a non-positive count") {
  CHECK_THROWS_AS(gauss_legendre(0), InputError);
}

TEST_CASE("composite rule on an interval") {
  const QuadratureRule rule = composite_gauss_legendre(0.0, 2.0, 5, 8);
  REQUIRE(rule.nodes.size() == 40u);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * std::exp(rule.nodes[i]);
  CHECK(sum == doctest::Approx(std::exp(2.0) - 1.0).epsilon(1e-13));
}

TEST_CASE("unit square integration") {
  const double v = integrate_unit_square([](double x, double u) { return std::sin(3 * x) * u * u; }, 64);
  CHECK(v == doctest::Approx((1.0 - std::cos(3.0)) / 3.0 / 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(integrate_unit_square([](double, double) { return 1.0; }, 50), InputError);

  // Narrow peak needs refinement.
  auto peak = [](double x, double u) { return std::exp(-500.0 * (0.5 * x + 0.5 * u - 0.1) * (0.5 * x + 0.5 * u - 0.1)); };
  const double coarse = integrate_unit_square(peak, 2048);
  CHECK(integrate_unit_square_refined(peak) == doctest::Approx(coarse).epsilon(1e-10));
}
