#include "addmodel/penalties.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "addmodel/errors.hpp"
#include "addmodel/quadrature.hpp"

namespace addmodel {

PenaltyMatrix penalty_matrix(const SplineBasis& basis, int derivative_order,
                             int nodes_per_segment) {
  if (derivative_order < 0 || derivative_order > kSplineOrder - 1) {
    throw InputError(fmt::format("penalty_matrix: derivative order {} outside 0..5",
                                 derivative_order));
  }
  const int k = basis.dimension();
  const int order = basis.order();
  const auto t = basis.knots().values();
  const QuadratureRule rule = gauss_legendre(nodes_per_segment);

  // Upper triangle only, mirrored at the end so the result is exactly symmetric.
  Eigen::MatrixXd upper = Eigen::MatrixXd::Zero(k, k);
  for (int seg = order - 1; seg < k; ++seg) {
    const double a = t[seg];
    const double b = t[seg + 1];
    if (!(b > a)) continue;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double x = mid + half * rule.nodes[q];
      const double w = half * rule.weights[q];
      const LocalBasis value = basis.evaluate_local(x, 0);
      const LocalBasis deriv = basis.evaluate_local(x, derivative_order);
      for (int i = 0; i < order; ++i) {
        for (int j = i; j < order; ++j) {
          upper(value.first + i, value.first + j) +=
              w * (deriv.values[i] * deriv.values[j] + value.values[i] * value.values[j]);
        }
      }
    }
  }
  PenaltyMatrix omega;
  omega.entries = upper.selfadjointView<Eigen::Upper>();
  omega.derivative_order = derivative_order;
  omega.basis_fingerprint = basis.knots().fingerprint();
  return omega;
}

double seminorm_value(const PenaltyMatrix& omega, const Eigen::VectorXd& gamma) {
  if (gamma.size() != omega.size()) {
    throw InputError(fmt::format("seminorm_value: coefficient length {} != matrix size {}",
                                 gamma.size(), omega.size()));
  }
  return std::max(0.0, gamma.dot(omega.entries * gamma));
}

int bandwidth(const Eigen::MatrixXd& m) {
  int band = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (m(i, j) != 0.0) band = std::max(band, static_cast<int>(std::abs(i - j)));
    }
  }
  return band;
}

CholeskyFactor factorize(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw InputError("factorize: matrix must be square");
  const Eigen::Index k = a.rows();
  CholeskyFactor factor;
  factor.bandwidth_ = bandwidth(a);
  const Eigen::Index band = factor.bandwidth_;
  factor.lower_ = Eigen::MatrixXd::Zero(k, k);
  Eigen::MatrixXd& l = factor.lower_;
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index start = std::max<Eigen::Index>(0, j - band);
    double pivot = a(j, j);
    for (Eigen::Index p = start; p < j; ++p) pivot -= l(j, p) * l(j, p);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) {
      throw NumericalError(
          fmt::format("factorize: non-positive pivot {:.6g} at index {}", pivot, j));
    }
    const double diag = std::sqrt(pivot);
    l(j, j) = diag;
    const Eigen::Index stop = std::min(k, j + band + 1);
    for (Eigen::Index i = j + 1; i < stop; ++i) {
      double s = a(i, j);
      for (Eigen::Index p = std::max<Eigen::Index>(0, i - band); p < j; ++p) s -= l(i, p) * l(j, p);
      l(i, j) = s / diag;
    }
  }
  return factor;
}

CholeskyFactor factorize(const PenaltyMatrix& omega) { return factorize(omega.entries); }

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& rhs) const {
  const Eigen::Index k = size();
  if (rhs.size() != k) throw InputError("CholeskyFactor::solve: dimension mismatch");
  const Eigen::Index band = bandwidth_;
  Eigen::VectorXd x = rhs;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index p = std::max<Eigen::Index>(0, i - band); p < i; ++p) x[i] -= lower_(i, p) * x[p];
    x[i] /= lower_(i, i);
  }
  for (Eigen::Index i = k - 1; i >= 0; --i) {
    for (Eigen::Index p = i + 1; p < std::min(k, i + band + 1); ++p) x[i] -= lower_(p, i) * x[p];
    x[i] /= lower_(i, i);
  }
  return x;
}

}  // namespace addmodel
