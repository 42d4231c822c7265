#include "nggirt/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nggirt {

namespace {

// Linear-interpolation quantile of sorted values (the usual default in
// statistical software); p = 0.5 gives the textbook median.
double quantile_sorted(const Eigen::VectorXd& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const auto hi = std::min<Eigen::Index>(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Index of the knot span [knots[s], knots[s+1]) containing t, with the
// right end mapped onto the last non-degenerate span.
Eigen::Index find_span(const Eigen::VectorXd& knots, int degree, int d, double t) {
  if (t >= knots[d]) return d - 1;
  Eigen::Index lo = degree;
  Eigen::Index hi = d;
  while (hi - lo > 1) {
    const Eigen::Index mid = (lo + hi) / 2;
    if (t < knots[mid]) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return lo;
}

}  // namespace

Eigen::VectorXd evaluate_at(const SplineBasis& basis, double t) {
  if (!(t >= basis.lower() && t <= basis.upper())) {
    throw std::out_of_range("spline evaluation at " + std::to_string(t) + " outside [" +
                            std::to_string(basis.lower()) + ", " + std::to_string(basis.upper()) + "]");
  }
  const int p = basis.degree;
  const Eigen::VectorXd& U = basis.knots;
  const Eigen::Index span = find_span(U, p, basis.d, t);

  // Triangular de Boor-Cox scheme over the p + 1 functions alive on the span.
  Eigen::VectorXd N = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd left(p + 1), right(p + 1);
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - U[span + 1 - j];
    right[j] = U[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }

  Eigen::VectorXd out = Eigen::VectorXd::Zero(basis.d);
  for (int r = 0; r <= p; ++r) out[span - p + r] = N[r];
  return out;
}

SplineBasis build_basis(const Eigen::VectorXd& times, int degree, KnotPolicy policy) {
  if (degree < 1) throw std::invalid_argument("spline degree must be at least 1");
  if (times.size() < degree + 1) {
    throw std::invalid_argument("need at least degree + 1 time points");
  }
  for (Eigen::Index t = 1; t < times.size(); ++t) {
    if (!(times[t] > times[t - 1])) throw std::invalid_argument("spline times must be strictly increasing");
  }
  if (policy.n_interior < 0) throw std::invalid_argument("negative interior knot count");

  const double lo = times[0];
  const double hi = times[times.size() - 1];
  const int n_knots = 2 * (degree + 1) + policy.n_interior;

  SplineBasis basis;
  basis.degree = degree;
  basis.d = policy.n_interior + degree + 1;
  basis.knots.resize(n_knots);
  for (int k = 0; k <= degree; ++k) {
    basis.knots[k] = lo;
    basis.knots[n_knots - 1 - k] = hi;
  }
  for (int k = 1; k <= policy.n_interior; ++k) {
    basis.knots[degree + k] = quantile_sorted(times, static_cast<double>(k) / (policy.n_interior + 1));
  }

  basis.B.resize(basis.d, times.size());
  for (Eigen::Index t = 0; t < times.size(); ++t) basis.B.col(t) = evaluate_at(basis, times[t]);
  return basis;
}

}  // namespace nggirt
