#include "addmodel/spline_basis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "addmodel/errors.hpp"

namespace addmodel {

KnotVector::KnotVector(std::vector<double> knots, int order) : knots_(std::move(knots)), order_(order) {
  if (order_ < 1) throw InputError("KnotVector: order must be positive");
  const auto total = static_cast<int>(knots_.size());
  if (total < 2 * order_) {
    throw InputError(fmt::format("KnotVector: {} knots cannot hold a clamped basis of order {}",
                                 total, order_));
  }
  if (!std::is_sorted(knots_.begin(), knots_.end())) {
    throw InputError("KnotVector: knots must be nondecreasing");
  }
  for (double t : knots_) {
    if (!std::isfinite(t)) throw InputError("KnotVector: knots must be finite");
  }
  const double lo = knots_.front();
  const double hi = knots_.back();
  if (!(lo < hi)) throw InputError("KnotVector: knot range has zero width");
  for (int i = 0; i < order_; ++i) {
    if (knots_[i] != lo || knots_[total - 1 - i] != hi) {
      throw InputError("KnotVector: end knots must be repeated `order` times");
    }
  }
  for (int i = order_; i < total - order_; ++i) {
    if (!(knots_[i] > lo && knots_[i] < hi)) {
      throw InputError("KnotVector: interior knots must lie strictly inside the range");
    }
  }
}

std::uint64_t KnotVector::fingerprint() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      hash ^= (word >> (8 * b)) & 0xffU;
      hash *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(order_));
  for (double t : knots_) mix(std::bit_cast<std::uint64_t>(t));
  return hash;
}

int basis_dimension(std::size_t n) {
  if (n < 2) throw InputError("basis_dimension: need at least two observations");
  const auto k = static_cast<int>(std::ceil(3.0 * std::sqrt(static_cast<double>(n)) / 5.0));
  if (k < kSplineOrder) {
    throw InputError(fmt::format(
        "basis_dimension: n={} gives K={} < {}, too few basis functions for the spline order", n,
        k, kSplineOrder));
  }
  return k;
}

KnotVector build_knots(std::span<const double> sorted_sample, int dimension) {
  const std::size_t n = sorted_sample.size();
  if (n < 2) throw InputError("build_knots: need at least two observations");
  if (dimension < kSplineOrder) {
    throw InputError(fmt::format("build_knots: dimension {} < spline order", dimension));
  }
  if (!std::is_sorted(sorted_sample.begin(), sorted_sample.end())) {
    throw InputError("build_knots: sample must be sorted");
  }
  const double lo = sorted_sample.front();
  const double hi = sorted_sample.back();
  if (!(lo < hi)) throw InputError("build_knots: all sample values are equal");

  std::vector<double> knots(kSplineOrder, lo);
  knots.reserve(static_cast<std::size_t>(dimension) + kSplineOrder);
  const int interior = dimension - kSplineOrder;
  double previous = lo;
  for (int j = 1; j <= interior; ++j) {
    // 1-based rank among x_(1..n); lands in [2, n-1] for n >= 3.
    const double position = 1.0 + j * static_cast<double>(n - 2) / (interior + 1);
    const auto rank = static_cast<std::size_t>(std::lround(position));
    double knot = sorted_sample[std::clamp<std::size_t>(rank, 1, n) - 1];
    if (knot <= previous) {
      const auto next = std::upper_bound(sorted_sample.begin(), sorted_sample.end(), previous);
      knot = 0.5 * (previous + *next);
    }
    if (knot >= hi) knot = 0.5 * (previous + hi);
    if (!(knot > previous && knot < hi)) {
      throw InputError("build_knots: sample has too few distinct values for the requested dimension");
    }
    knots.push_back(knot);
    previous = knot;
  }
  knots.insert(knots.end(), kSplineOrder, hi);
  return KnotVector(std::move(knots));
}

SplineBasis::SplineBasis(KnotVector knots) : knots_(std::move(knots)) {
  if (knots_.order() > kSplineOrder) {
    throw InputError("SplineBasis: order above 6 is not supported");
  }
}

SplineBasis SplineBasis::from_sample(std::span<const double> sample) {
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  return SplineBasis(build_knots(sorted, basis_dimension(sorted.size())));
}

double SplineBasis::clamp(double x) const { return std::clamp(x, knots_.lower(), knots_.upper()); }

int SplineBasis::span_index(double x) const {
  const auto t = knots_.values();
  const int degree = order() - 1;
  const int k = dimension();
  x = clamp(x);
  if (x >= t[k]) return k - 1;
  const auto it = std::upper_bound(t.begin() + degree, t.begin() + k + 1, x);
  return static_cast<int>(it - t.begin()) - 1;
}

// Cox–de Boor triangle plus the derivative recurrence over it
// (Piegl & Tiller, "The NURBS Book", A2.3).
LocalBasis SplineBasis::evaluate_local(double x, int derivative) const {
  const int degree = order() - 1;
  if (derivative < 0 || derivative > kSplineOrder - 1) {
    throw InputError(fmt::format("evaluate: derivative order {} outside 0..5", derivative));
  }
  LocalBasis out;
  const int span = span_index(x);
  out.first = span - degree;
  if (derivative > degree) return out;
  x = clamp(x);
  const auto t = knots_.values();

  constexpr int kMax = kSplineOrder;
  double ndu[kMax][kMax];
  double left[kMax];
  double right[kMax];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - t[span + 1 - j];
    right[j] = t[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  if (derivative == 0) {
    for (int j = 0; j <= degree; ++j) out.values[j] = ndu[j][degree];
    return out;
  }

  double a[2][kMax];
  for (int r = 0; r <= degree; ++r) {
    int s1 = 0;
    int s2 = 1;
    a[0][0] = 1.0;
    double d = 0.0;
    for (int k = 1; k <= derivative; ++k) {
      d = 0.0;
      const int rk = r - k;
      const int pk = degree - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : degree - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      std::swap(s1, s2);
    }
    out.values[r] = d;
  }
  double factor = degree;
  for (int k = 1; k < derivative; ++k) factor *= degree - k;
  for (int r = 0; r <= degree; ++r) out.values[r] *= factor;
  return out;
}

Eigen::VectorXd SplineBasis::evaluate(double x, int derivative) const {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(dimension());
  const LocalBasis local = evaluate_local(x, derivative);
  for (int j = 0; j < order(); ++j) row[local.first + j] = local.values[j];
  return row;
}

double SplineBasis::value(const Eigen::VectorXd& coefficients, double x, int derivative) const {
  if (coefficients.size() != dimension()) {
    throw InputError(fmt::format("value: {} coefficients for a basis of dimension {}",
                                 coefficients.size(), dimension()));
  }
  const LocalBasis local = evaluate_local(x, derivative);
  double sum = 0.0;
  for (int j = 0; j < order(); ++j) sum += coefficients[local.first + j] * local.values[j];
  return sum;
}

DesignMatrix design_matrix(const SplineBasis& basis, std::span<const double> xs) {
  DesignMatrix design;
  design.sample_points.assign(xs.begin(), xs.end());
  design.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(xs.size()), basis.dimension());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const LocalBasis local = basis.evaluate_local(xs[i], 0);
    for (int j = 0; j < basis.order(); ++j) {
      design.values(static_cast<Eigen::Index>(i), local.first + j) = local.values[j];
    }
  }
  return design;
}

}  // namespace addmodel
