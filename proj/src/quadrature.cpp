#include "addmodel/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "addmodel/errors.hpp"

namespace addmodel {

namespace {

// Returns (P_n(x), P_n'(x)) by the three-term recurrence; n >= 1, |x| < 1.
std::pair<double, double> legendre(int n, double x) {
  double p0 = 1.0;
  double p1 = x;
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

}  // namespace

QuadratureRule gauss_legendre(int points) {
  if (points < 1) throw InputError("gauss_legendre: need at least one node");
  if (points == 1) return {{0.0}, {2.0}};
  QuadratureRule rule;
  rule.nodes.resize(points);
  rule.weights.resize(points);
  for (int i = 0; i < (points + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (points + 0.5));
    for (int iter = 0; iter < 100; ++iter) {
      const auto [value, slope] = legendre(points, x);
      const double step = value / slope;
      x -= step;
      if (std::abs(step) < 1e-16) break;
    }
    const double slope = legendre(points, x).second;
    const double w = 2.0 / ((1.0 - x * x) * slope * slope);
    rule.nodes[i] = -x;
    rule.nodes[points - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[points - 1 - i] = w;
  }
  if (points % 2 == 1) rule.nodes[points / 2] = 0.0;
  return rule;
}

QuadratureRule composite_gauss_legendre(double lo, double hi, int panels, int points_per_panel) {
  if (panels < 1) throw InputError("composite_gauss_legendre: need at least one panel");
  const QuadratureRule base = gauss_legendre(points_per_panel);
  QuadratureRule rule;
  rule.nodes.reserve(static_cast<std::size_t>(panels) * points_per_panel);
  rule.weights.reserve(rule.nodes.capacity());
  const double width = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * width;
    const double mid = a + 0.5 * width;
    for (int k = 0; k < points_per_panel; ++k) {
      rule.nodes.push_back(mid + 0.5 * width * base.nodes[k]);
      rule.weights.push_back(0.5 * width * base.weights[k]);
    }
  }
  return rule;
}

namespace {
constexpr int kPanelPoints = 16;
}

double integrate_unit_square(const std::function<double(double, double)>& integrand,
                             int nodes_per_axis) {
  if (nodes_per_axis < kPanelPoints || nodes_per_axis % kPanelPoints != 0) {
    throw InputError("integrate_unit_square: nodes per axis must be a positive multiple of 16");
  }
  const QuadratureRule rule =
      composite_gauss_legendre(0.0, 1.0, nodes_per_axis / kPanelPoints, kPanelPoints);
  double total = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      row += rule.weights[j] * integrand(rule.nodes[i], rule.nodes[j]);
    }
    total += rule.weights[i] * row;
  }
  return total;
}

double integrate_unit_square_refined(const std::function<double(double, double)>& integrand,
                                     double tolerance) {
  constexpr int kMaxNodes = 4096;
  int nodes = 64;
  double previous = integrate_unit_square(integrand, nodes);
  while (nodes < kMaxNodes) {
    nodes *= 2;
    const double current = integrate_unit_square(integrand, nodes);
    if (std::abs(current - previous) < tolerance) return current;
    previous = current;
  }
  throw NumericalError("integrate_unit_square_refined: no convergence at 4096 nodes per axis");
}

}  // namespace addmodel
