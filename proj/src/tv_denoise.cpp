#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "addmodel/errors.hpp"
#include "addmodel/solver.hpp"

namespace addmodel {

namespace {

// Largest |partial sum of w_i (v_i - mean)|: the smallest penalty (in the
// sum_i w_i/2 (v_i - theta_i)^2 scaling) at which the constant fit is optimal.
double constant_threshold(std::span<const double> v, std::span<const double> w, double mean) {
  double partial = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    partial += w[i] * (v[i] - mean);
    worst = std::max(worst, std::abs(partial));
  }
  return worst;
}

}  // namespace

std::vector<double> tv_denoise(std::span<const double> values, std::span<const double> weights,
                               double tv_weight) {
  const std::size_t m = values.size();
  if (weights.size() != m) {
    throw InputError(fmt::format("tv_denoise: {} values but {} weights", m, weights.size()));
  }
  if (!(tv_weight >= 0.0)) throw InputError("tv_denoise: tv_weight must be nonnegative");
  double total_weight = 0.0;
  double weighted_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(weights[i] > 0.0)) throw InputError("tv_denoise: weights must be positive");
    total_weight += weights[i];
    weighted_sum += weights[i] * values[i];
  }
  std::vector<double> theta(values.begin(), values.end());
  if (m <= 1 || tv_weight == 0.0) return theta;

  // Rescaled problem: sum_i (w_i / 2)(v_i - theta_i)^2 + lambda * TV(theta).
  const double lambda = 0.5 * total_weight * tv_weight;
  const double mean = weighted_sum / total_weight;
  if (lambda >= constant_threshold(values, weights, mean)) {
    std::fill(theta.begin(), theta.end(), mean);
    return theta;
  }

  // The derivative of each forward message is piecewise linear and increasing.
  // Knots live in x[l..r]; (a, b) hold the slope/intercept increments when
  // crossing a knot inward from the left (l side) or, negated, from the right.
  const auto n = static_cast<std::ptrdiff_t>(m);
  std::vector<double> x(2 * m), a(2 * m), b(2 * m), lower(m - 1), upper(m - 1);
  const double* y = values.data();
  const double* w = weights.data();

  lower[0] = y[0] - lambda / w[0];
  upper[0] = y[0] + lambda / w[0];
  std::ptrdiff_t l = n - 1;
  std::ptrdiff_t r = n;
  x[l] = lower[0];
  x[r] = upper[0];
  a[l] = w[0];
  b[l] = -w[0] * y[0] + lambda;
  a[r] = -w[0];
  b[r] = w[0] * y[0] + lambda;
  double afirst = w[1];
  double bfirst = -w[1] * y[1] - lambda;
  double alast = -w[1];
  double blast = w[1] * y[1] - lambda;

  for (std::size_t k = 1; k + 1 < m; ++k) {
    double alo = afirst;
    double blo = bfirst;
    std::ptrdiff_t lo = l;
    for (; lo <= r; ++lo) {
      if (alo * x[lo] + blo > -lambda) break;
      alo += a[lo];
      blo += b[lo];
    }
    double ahi = alast;
    double bhi = blast;
    std::ptrdiff_t hi = r;
    for (; hi >= lo; --hi) {
      if (-ahi * x[hi] - bhi < lambda) break;
      ahi += a[hi];
      bhi += b[hi];
    }

    lower[k] = (-lambda - blo) / alo;
    l = lo - 1;
    x[l] = lower[k];
    upper[k] = (lambda + bhi) / (-ahi);
    r = hi + 1;
    x[r] = upper[k];

    a[l] = alo;
    b[l] = blo + lambda;
    a[r] = ahi;
    b[r] = bhi + lambda;
    afirst = w[k + 1];
    bfirst = -w[k + 1] * y[k + 1] - lambda;
    alast = -w[k + 1];
    blast = w[k + 1] * y[k + 1] - lambda;
  }

  // Zero of the last message derivative.
  double alo = afirst;
  double blo = bfirst;
  for (std::ptrdiff_t lo = l; lo <= r; ++lo) {
    if (alo * x[lo] + blo > 0.0) break;
    alo += a[lo];
    blo += b[lo];
  }
  theta[m - 1] = -blo / alo;
  for (std::size_t k = m - 1; k-- > 0;) {
    theta[k] = std::clamp(theta[k + 1], lower[k], upper[k]);
  }
  return theta;
}

}  // namespace addmodel
