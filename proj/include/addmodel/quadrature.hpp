#pragma once

#include <functional>
#include <vector>

namespace addmodel {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss–Legendre rule with `points` nodes on [-1, 1]. Exact for polynomials
/// of degree 2*points - 1.
QuadratureRule gauss_legendre(int points);

/// Composite Gauss–Legendre rule on [lo, hi]: `panels` equal panels with a
/// `points_per_panel` rule on each.
QuadratureRule composite_gauss_legendre(double lo, double hi, int panels, int points_per_panel);

/// Tensor-product composite rule over [0,1]^2 with `nodes_per_axis` nodes per
/// axis (a multiple of 16; 16-point panels).
double integrate_unit_square(const std::function<double(double, double)>& integrand,
                             int nodes_per_axis);

/// Doubles the nodes per axis, starting at 64, until two successive values
/// differ by less than `tolerance` (absolute). Throws NumericalError if
/// 4096 nodes per axis are not enough.
double integrate_unit_square_refined(const std::function<double(double, double)>& integrand,
                                     double tolerance = 1e-10);

}  // namespace addmodel
