#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nggirt/data_model.hpp"
#include "nggirt/rng.hpp"

namespace nggirt {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Item parameters of the covariate-augmented partial credit model.
/// beta is J x m with columns 0 and 1 structurally zero; the sampler only
/// moves columns 2..m-1.
struct ItemParams {
  Eigen::VectorXd alpha;    // J, discrimination, > 0
  RowMatrix beta;           // J x m, difficulty steps
  Eigen::VectorXd mu;       // n_s, subscale means of log(alpha)
  Eigen::MatrixXd gamma_Y;  // J x q_Y

  /// Throws std::logic_error if a constraint is violated.
  void check() const;

  std::span<const double> beta_row(int j) const {
    return {beta.row(j).data(), static_cast<std::size_t>(beta.cols())};
  }
};

/// Latent traits, stored flat as [p][i][t].
struct Traits {
  int n_p = 0;
  int N = 0;
  int T_Y = 0;
  std::vector<double> theta;
  std::vector<double> theta0;

  Traits() = default;
  Traits(int n_p_, int N_, int T_Y_)
      : n_p(n_p_), N(N_), T_Y(T_Y_),
        theta(static_cast<std::size_t>(n_p_) * N_ * T_Y_, 0.0),
        theta0(static_cast<std::size_t>(n_p_) * N_ * T_Y_, 0.0) {}

  std::size_t index(int p, int i, int t) const {
    return (static_cast<std::size_t>(p) * N + i) * T_Y + t;
  }
  double& at(int p, int i, int t) { return theta[index(p, i, t)]; }
  double at(int p, int i, int t) const { return theta[index(p, i, t)]; }
  double& mean_at(int p, int i, int t) { return theta0[index(p, i, t)]; }
  double mean_at(int p, int i, int t) const { return theta0[index(p, i, t)]; }
};

/// Category logits alpha * (h * theta - sum_{l<h} beta_l) + h * eta for
/// h = 0..m-1. Throws std::invalid_argument when alpha <= 0.
Eigen::VectorXd category_logits(double theta, double alpha, std::span<const double> beta_row, double eta);

/// Softmax with max subtraction.
Eigen::VectorXd category_probs(const Eigen::VectorXd& logits);

/// log P(Y = y) for one observed cell. Allocation-free; the hot path of the
/// sampler.
double y_loglik_cell(int y, double theta, double alpha, std::span<const double> beta_row, double eta);

/// Same as y_loglik_cell but reading item j of `items`.
double y_loglik_cell(int y, double theta, const ItemParams& items, int j, double eta);

/// Sum of log-probabilities over the observed cells of item j, using the
/// trait of the item's domain. `eta_i` holds gamma_Y_j . X_Y_i per subject.
double y_loglik_item(int j, const Dataset& ds, const Traits& traits, const ItemParams& items,
                     std::span<const double> eta_i);

/// Convenience overload computing eta from the dataset covariates.
double y_loglik_item(int j, const Dataset& ds, const Traits& traits, const ItemParams& items);

/// Exact draw of the subscale means: mu_s ~ N(sum_{j in s} log alpha_j / (n_s + 1), 1 / (n_s + 1)).
Eigen::VectorXd gibbs_mu(const Eigen::VectorXd& alpha, std::span<const int> subscale, int n_s, Rng& rng);

/// Row g holds the category probabilities at theta_grid[g].
Eigen::MatrixXd icc_curve(int j, const ItemParams& items, const Eigen::VectorXd& theta_grid, double eta);

}  // namespace nggirt
