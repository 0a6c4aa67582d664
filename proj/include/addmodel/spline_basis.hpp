#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace addmodel {

/// Spline order used throughout (degree 5).
inline constexpr int kSplineOrder = 6;

/// Clamped knot vector: `order` copies of each end abscissa around strictly
/// increasing interior knots.
class KnotVector {
 public:
  /// Validates the clamped-end layout; throws InputError on violation.
  explicit KnotVector(std::vector<double> knots, int order = kSplineOrder);

  std::span<const double> values() const { return knots_; }
  int order() const { return order_; }
  int dimension() const { return static_cast<int>(knots_.size()) - order_; }
  double lower() const { return knots_.front(); }
  double upper() const { return knots_.back(); }

  /// FNV-1a hash of the knot bytes; ties penalty matrices to the basis they came from.
  std::uint64_t fingerprint() const;

 private:
  std::vector<double> knots_;
  int order_;
};

/// Number of basis functions for a sample of size n: ceil(3 sqrt(n) / 5).
/// Throws InputError when that is smaller than the spline order.
int basis_dimension(std::size_t n);

/// Knots for a sorted sample: clamped ends at the sample extremes, and K - 6
/// interior knots at evenly spaced ranks of the interior order statistics.
/// Tied candidates are moved to the midpoint with the next distinct value.
KnotVector build_knots(std::span<const double> sorted_sample, int dimension);

/// The (at most `order`) basis functions that can be nonzero at a point,
/// starting at column `first`.
struct LocalBasis {
  int first = 0;
  std::array<double, kSplineOrder> values{};
};

class SplineBasis {
 public:
  explicit SplineBasis(KnotVector knots);

  /// Sorts a copy of the sample and applies basis_dimension + build_knots.
  static SplineBasis from_sample(std::span<const double> sample);

  int dimension() const { return knots_.dimension(); }
  int order() const { return knots_.order(); }
  const KnotVector& knots() const { return knots_; }

  /// Points outside the knot range are evaluated at the nearest end.
  double clamp(double x) const;

  /// Index i of the knot interval [t_i, t_{i+1}) containing x (last interval closed).
  int span_index(double x) const;

  /// Derivative `derivative` (0..5) of the nonzero basis functions at x.
  LocalBasis evaluate_local(double x, int derivative = 0) const;

  /// Full length-K vector (b_1^{(d)}(x), ..., b_K^{(d)}(x)).
  Eigen::VectorXd evaluate(double x, int derivative = 0) const;

  /// Value of sum_j coefficients[j] * b_j^{(d)}(x).
  double value(const Eigen::VectorXd& coefficients, double x, int derivative = 0) const;

 private:
  KnotVector knots_;
};

struct DesignMatrix {
  Eigen::MatrixXd values;  // n x K
  std::vector<double> sample_points;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

DesignMatrix design_matrix(const SplineBasis& basis, std::span<const double> xs);

}  // namespace addmodel
