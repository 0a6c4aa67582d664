#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "addmodel/spline_basis.hpp"

namespace addmodel {

/// Gram matrix of int b_i^{(d)} b_j^{(d)} + int b_i b_j over the knot range.
struct PenaltyMatrix {
  Eigen::MatrixXd entries;
  int derivative_order = 0;
  std::uint64_t basis_fingerprint = 0;

  Eigen::Index size() const { return entries.rows(); }
};

/// Exact assembly by per-segment Gauss–Legendre quadrature. Six nodes per
/// segment integrate the degree-10 products exactly; the node count is
/// exposed only so tests can confirm that more nodes change nothing.
PenaltyMatrix penalty_matrix(const SplineBasis& basis, int derivative_order,
                             int nodes_per_segment = 6);

/// gamma^T Omega gamma.
double seminorm_value(const PenaltyMatrix& omega, const Eigen::VectorXd& gamma);

/// Largest |i - j| with a nonzero entry.
int bandwidth(const Eigen::MatrixXd& m);

/// Banded Cholesky factor: stores lower-triangular L with L L^T = A, so the
/// upper factor H = L^T satisfies H^T H = A.
class CholeskyFactor {
 public:
  const Eigen::MatrixXd& lower() const { return lower_; }
  Eigen::MatrixXd upper() const { return lower_.transpose(); }
  int bandwidth() const { return bandwidth_; }
  Eigen::Index size() const { return lower_.rows(); }

  /// Solves A x = rhs by banded forward and back substitution.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

 private:
  friend CholeskyFactor factorize(const Eigen::MatrixXd& a);
  Eigen::MatrixXd lower_;
  int bandwidth_ = 0;
};

/// O(K b^2) factorization of a symmetric banded matrix. Throws
/// NumericalError on a non-positive pivot.
CholeskyFactor factorize(const Eigen::MatrixXd& a);
CholeskyFactor factorize(const PenaltyMatrix& omega);

}  // namespace addmodel
