#include "nggirt/longitudinal_model.hpp"

#include <cmath>
#include <numbers>

namespace nggirt {

Eigen::VectorXd z_mean(int i, const LongitudinalParams& params, const SplineBasis& basis,
                       const Eigen::MatrixXd& X_Z) {
  const double shift = X_Z.cols() > 0 ? params.gamma_Z.dot(X_Z.row(i)) : 0.0;
  Eigen::VectorXd mean = basis.B.transpose() * params.b.row(i).transpose();
  mean.array() += shift;
  return mean;
}

double z_loglik_subject(int i, const Dataset& ds, const LongitudinalParams& params, const SplineBasis& basis) {
  const Eigen::VectorXd mean = z_mean(i, params, basis, ds.X_Z);
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * params.sigma2_Z);
  double total = 0.0;
  for (int t = 0; t < ds.dims.T_Z; ++t) {
    if (!ds.z_observed(i, t)) continue;
    const double r = ds.Z(i, t) - mean[t];
    total += log_norm - 0.5 * r * r / params.sigma2_Z;
  }
  return total;
}

double z_loglik(const Dataset& ds, const LongitudinalParams& params, const SplineBasis& basis) {
  double total = 0.0;
  for (int i = 0; i < ds.dims.N; ++i) total += z_loglik_subject(i, ds, params, basis);
  return total;
}

Eigen::VectorXd gibbs_gamma_Z(const Dataset& ds, const LongitudinalParams& params, const SplineBasis& basis,
                              Rng& rng) {
  const int q = ds.dims.q_Z;
  Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(q, q);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);
  if (q == 0) return rhs;
  const double inv_var = 1.0 / params.sigma2_Z;
  for (int i = 0; i < ds.dims.N; ++i) {
    const Eigen::VectorXd spline = basis.B.transpose() * params.b.row(i).transpose();
    int n_obs = 0;
    double resid_sum = 0.0;
    for (int t = 0; t < ds.dims.T_Z; ++t) {
      if (!ds.z_observed(i, t)) continue;
      ++n_obs;
      resid_sum += ds.Z(i, t) - spline[t];
    }
    if (n_obs == 0) continue;
    const auto x = ds.X_Z.row(i).transpose();
    precision.noalias() += (n_obs * inv_var) * x * x.transpose();
    rhs.noalias() += (resid_sum * inv_var) * x;
  }
  return rng.mvn_from_precision(precision, rhs);
}

double gibbs_sigma2_Z(const Dataset& ds, const LongitudinalParams& params, const SplineBasis& basis, Rng& rng,
                      VariancePrior prior) {
  long n_obs = 0;
  double ssr = 0.0;
  for (int i = 0; i < ds.dims.N; ++i) {
    const Eigen::VectorXd mean = z_mean(i, params, basis, ds.X_Z);
    for (int t = 0; t < ds.dims.T_Z; ++t) {
      if (!ds.z_observed(i, t)) continue;
      ++n_obs;
      const double r = ds.Z(i, t) - mean[t];
      ssr += r * r;
    }
  }
  return rng.inv_gamma(prior.shape + 0.5 * static_cast<double>(n_obs), prior.rate + 0.5 * ssr);
}

void impute_missing_Z(int i, const Dataset& ds, const LongitudinalParams& params, const SplineBasis& basis,
                      Eigen::MatrixXd& Z_work, Rng& rng) {
  const Eigen::VectorXd mean = z_mean(i, params, basis, ds.X_Z);
  const double sd = std::sqrt(params.sigma2_Z);
  for (int t = 0; t < ds.dims.T_Z; ++t) {
    if (ds.z_observed(i, t)) continue;
    Z_work(i, t) = rng.normal(mean[t], sd);
  }
}

}  // namespace nggirt
