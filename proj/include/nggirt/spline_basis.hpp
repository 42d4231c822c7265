#pragma once

#include <Eigen/Dense>

namespace nggirt {

/// Interior-knot placement. `n_interior` knots are put at the equally spaced
/// quantiles k / (n_interior + 1) of the observed times (linear interpolation
/// between order statistics); the default gives a single knot at the median.
struct KnotPolicy {
  int n_interior = 1;
};

/// Clamped B-spline basis evaluated on the observation grid.
struct SplineBasis {
  Eigen::VectorXd knots;  // full sequence, boundary knots repeated degree + 1 times
  int degree = 3;
  int d = 0;              // number of basis functions
  Eigen::MatrixXd B;      // d x T, column t holds the basis at times[t]

  double lower() const { return knots[0]; }
  double upper() const { return knots[knots.size() - 1]; }
};

/// Throws std::invalid_argument for non-increasing times, degree < 1 or
/// fewer than degree + 1 time points.
SplineBasis build_basis(const Eigen::VectorXd& times, int degree = 3, KnotPolicy policy = {});

/// Basis values at t (length d). Throws std::out_of_range outside the knot span.
Eigen::VectorXd evaluate_at(const SplineBasis& basis, double t);

}  // namespace nggirt
