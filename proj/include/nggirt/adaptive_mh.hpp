#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "nggirt/rng.hpp"

namespace nggirt {

inline constexpr double kTargetAcceptBlock = 0.234;
inline constexpr double kTargetAcceptScalar = 0.44;
inline constexpr double kProposalJitter = 1e-8;

/// Gaussian random-walk proposal with Haario-style covariance learning and a
/// Robbins-Monro scale tuned towards a target acceptance rate.
///
/// Until `adapt_start` states have been recorded the proposal is
/// initial_sd * I; afterwards it is (2.38 / sqrt(dim)) * chol(cov + eps I),
/// both multiplied by exp(log_lambda). Moments and log_lambda only move while
/// the kernel is adapting; freeze() stops them for good.
class AdaptiveKernel {
 public:
  AdaptiveKernel() = default;
  AdaptiveKernel(int dim, double target_accept, int adapt_start, double initial_sd = 0.5);

  Eigen::VectorXd propose(const Eigen::VectorXd& x, Rng& rng) const;

  /// Feeds the post-step state and whether the step was accepted.
  void record(const Eigen::VectorXd& x, bool accepted);

  void freeze() { adapting_ = false; }
  bool adapting() const { return adapting_; }
  int dim() const { return dim_; }
  double acceptance_rate() const {
    return proposals_ ? static_cast<double>(accepts_) / static_cast<double>(proposals_) : 0.0;
  }
  long proposals() const { return proposals_; }
  double log_lambda() const { return log_lambda_; }
  void set_log_lambda(double v) { log_lambda_ = v; }
  const Eigen::MatrixXd& proposal_factor() const { return factor_; }

  friend void to_json(nlohmann::json& j, const AdaptiveKernel& k);
  friend void from_json(const nlohmann::json& j, AdaptiveKernel& k);

 private:
  void refresh_factor();

  int dim_ = 0;
  double target_ = kTargetAcceptBlock;
  int adapt_start_ = 0;
  double initial_sd_ = 0.5;
  double log_lambda_ = 0.0;
  bool adapting_ = true;
  long n_ = 0;  // states folded into the running moments
  long proposals_ = 0;
  long accepts_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
  Eigen::MatrixXd factor_;  // current proposal Cholesky factor, without exp(log_lambda)
};

/// One-dimensional counterpart of AdaptiveKernel, kept separate because the
/// sampler holds one per latent trait.
class ScalarKernel {
 public:
  ScalarKernel() = default;
  ScalarKernel(double target_accept, int adapt_start, double initial_sd = 0.5)
      : target_(target_accept), adapt_start_(adapt_start), initial_sd_(initial_sd) {}

  double proposal_sd() const;
  void record(double x, bool accepted);
  void freeze() { adapting_ = false; }
  bool adapting() const { return adapting_; }
  double acceptance_rate() const {
    return proposals_ ? static_cast<double>(accepts_) / static_cast<double>(proposals_) : 0.0;
  }
  void set_log_lambda(double v) { log_lambda_ = v; }

  friend void to_json(nlohmann::json& j, const ScalarKernel& k);
  friend void from_json(const nlohmann::json& j, ScalarKernel& k);

 private:
  double target_ = kTargetAcceptScalar;
  int adapt_start_ = 0;
  double initial_sd_ = 0.5;
  double log_lambda_ = 0.0;
  bool adapting_ = true;
  long n_ = 0;
  long proposals_ = 0;
  long accepts_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct MhResult {
  Eigen::VectorXd value;
  double log_target = 0.0;
  bool accepted = false;
};

/// Metropolis acceptance test; a non-finite proposal target is rejected.
inline bool mh_accept(double log_ratio, Rng& rng) {
  if (std::isnan(log_ratio)) return false;
  return log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio;
}

/// Random-walk step on an unconstrained block. `current_log_target` must be
/// the (finite) target at `current`.
template <typename LogTarget>
MhResult mh_step(const Eigen::VectorXd& current, double current_log_target, LogTarget&& log_target,
                 AdaptiveKernel& kernel, Rng& rng) {
  Eigen::VectorXd proposal = kernel.propose(current, rng);
  const double proposal_log_target = log_target(proposal);
  const bool ok = std::isfinite(proposal_log_target) &&
                  mh_accept(proposal_log_target - current_log_target, rng);
  MhResult out{ok ? proposal : current, ok ? proposal_log_target : current_log_target, ok};
  kernel.record(out.value, ok);
  return out;
}

/// Random-walk step on the log of a positive block. `log_target` is the
/// density in the natural scale; the log-Jacobian sum(log x) is added here.
/// The returned log_target is in the natural scale.
template <typename LogTarget>
MhResult mh_step_logscale(const Eigen::VectorXd& current, double current_log_target, LogTarget&& log_target,
                          AdaptiveKernel& kernel, Rng& rng) {
  const Eigen::VectorXd log_current = current.array().log();
  const Eigen::VectorXd log_proposal = kernel.propose(log_current, rng);
  const Eigen::VectorXd proposal = log_proposal.array().exp();
  const double proposal_log_target = log_target(proposal);
  const double log_ratio = proposal_log_target + log_proposal.sum() - current_log_target - log_current.sum();
  const bool ok = std::isfinite(proposal_log_target) && (proposal.array() > 0.0).all() && mh_accept(log_ratio, rng);
  MhResult out{ok ? proposal : current, ok ? proposal_log_target : current_log_target, ok};
  kernel.record(ok ? log_proposal : log_current, ok);
  return out;
}

/// Scalar random-walk step; returns the new value and updates
/// `current_log_target` in place.
template <typename LogTarget>
double mh_scalar(double current, double& current_log_target, LogTarget&& log_target, ScalarKernel& kernel,
                 Rng& rng) {
  const double proposal = current + kernel.proposal_sd() * rng.normal();
  const double proposal_log_target = log_target(proposal);
  const bool ok = std::isfinite(proposal_log_target) &&
                  mh_accept(proposal_log_target - current_log_target, rng);
  if (ok) current_log_target = proposal_log_target;
  const double value = ok ? proposal : current;
  kernel.record(value, ok);
  return value;
}

/// Scalar step on log(x) for positive x; `log_target` is in the natural scale.
template <typename LogTarget>
double mh_scalar_logscale(double current, double& current_log_target, LogTarget&& log_target,
                          ScalarKernel& kernel, Rng& rng) {
  const double log_current = std::log(current);
  const double log_proposal = log_current + kernel.proposal_sd() * rng.normal();
  const double proposal = std::exp(log_proposal);
  const double proposal_log_target = proposal > 0.0 ? log_target(proposal)
                                                    : -std::numeric_limits<double>::infinity();
  const bool ok = std::isfinite(proposal_log_target) &&
                  mh_accept(proposal_log_target + log_proposal - current_log_target - log_current, rng);
  if (ok) current_log_target = proposal_log_target;
  kernel.record(ok ? log_proposal : log_current, ok);
  return ok ? proposal : current;
}

}  // namespace nggirt
