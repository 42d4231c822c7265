#pragma once

#include <Eigen/Dense>

#include "nggirt/data_model.hpp"
#include "nggirt/rng.hpp"
#include "nggirt/spline_basis.hpp"

namespace nggirt {

struct LongitudinalParams {
  Eigen::MatrixXd b;        // N x d, subject spline coefficients (copies of cluster atoms)
  Eigen::VectorXd gamma_Z;  // q_Z
  double sigma2_Z = 1.0;
};

/// Inverse-gamma prior on the observation variance.
struct VariancePrior {
  double shape = 3.0;
  double rate = 2.0;
};

/// Mean trajectory of subject i: B^T b_i + (gamma_Z . X_Z_i) 1.
Eigen::VectorXd z_mean(int i, const LongitudinalParams& params, const SplineBasis& basis,
                       const Eigen::MatrixXd& X_Z);

/// Gaussian log-likelihood of subject i over its observed cells.
double z_loglik_subject(int i, const Dataset& ds, const LongitudinalParams& params, const SplineBasis& basis);

/// Sum of z_loglik_subject over all subjects.
double z_loglik(const Dataset& ds, const LongitudinalParams& params, const SplineBasis& basis);

/// Exact draw of gamma_Z from its Gaussian full conditional (prior N(0, I)),
/// using observed cells only.
Eigen::VectorXd gibbs_gamma_Z(const Dataset& ds, const LongitudinalParams& params, const SplineBasis& basis,
                              Rng& rng);

/// Exact draw of sigma2_Z from IG(shape + n_obs / 2, rate + SSR / 2) over observed cells.
double gibbs_sigma2_Z(const Dataset& ds, const LongitudinalParams& params, const SplineBasis& basis, Rng& rng,
                      VariancePrior prior = {});

/// Replaces the missing cells of row i of `Z_work` with independent draws
/// from N(mean, sigma2_Z); observed cells are left untouched.
void impute_missing_Z(int i, const Dataset& ds, const LongitudinalParams& params, const SplineBasis& basis,
                      Eigen::MatrixXd& Z_work, Rng& rng);

}  // namespace nggirt
