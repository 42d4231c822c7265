#include "nggirt/irt_pcm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nggirt {

void ItemParams::check() const {
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    if (!(alpha[j] > 0.0) || !std::isfinite(alpha[j])) throw std::logic_error("alpha must be positive and finite");
    if (beta(j, 0) != 0.0 || (beta.cols() > 1 && beta(j, 1) != 0.0)) {
      throw std::logic_error("beta_{j,0} and beta_{j,1} must be exactly zero");
    }
  }
  if (!beta.allFinite() || !mu.allFinite() || !gamma_Y.allFinite()) {
    throw std::logic_error("item parameters must be finite");
  }
}

Eigen::VectorXd category_logits(double theta, double alpha, std::span<const double> beta_row, double eta) {
  if (!(alpha > 0.0)) throw std::invalid_argument("discrimination must be positive");
  const auto m = static_cast<Eigen::Index>(beta_row.size());
  Eigen::VectorXd logits(m);
  double step_sum = 0.0;  // sum_{l<h} beta_l
  for (Eigen::Index h = 0; h < m; ++h) {
    logits[h] = alpha * (static_cast<double>(h) * theta - step_sum) + static_cast<double>(h) * eta;
    step_sum += beta_row[h];
  }
  return logits;
}

Eigen::VectorXd category_probs(const Eigen::VectorXd& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - top).exp();
  return p / p.sum();
}

double y_loglik_cell(int y, double theta, double alpha, std::span<const double> beta_row, double eta) {
  // Logits are built incrementally: l_h = l_{h-1} + alpha * (theta - beta_{h-1}) + eta.
  const int m = static_cast<int>(beta_row.size());
  double logits[kMaxCategories];
  double top = 0.0;
  logits[0] = 0.0;
  for (int h = 1; h < m; ++h) {
    logits[h] = logits[h - 1] + alpha * (theta - beta_row[h - 1]) + eta;
    if (logits[h] > top) top = logits[h];
  }
  double total = 0.0;
  for (int h = 0; h < m; ++h) total += std::exp(logits[h] - top);
  return logits[y] - top - std::log(total);
}

double y_loglik_cell(int y, double theta, const ItemParams& items, int j, double eta) {
  return y_loglik_cell(y, theta, items.alpha[j], items.beta_row(j), eta);
}

double y_loglik_item(int j, const Dataset& ds, const Traits& traits, const ItemParams& items,
                     std::span<const double> eta_i) {
  const int p = ds.domain[j];
  double total = 0.0;
  for (int t = 0; t < ds.dims.T_Y; ++t) {
    for (int i = 0; i < ds.dims.N; ++i) {
      if (!ds.y_observed(t, i, j)) continue;
      total += y_loglik_cell(ds.y(t, i, j), traits.at(p, i, t), items, j, eta_i[i]);
    }
  }
  return total;
}

double y_loglik_item(int j, const Dataset& ds, const Traits& traits, const ItemParams& items) {
  std::vector<double> eta(ds.dims.N);
  for (int i = 0; i < ds.dims.N; ++i) eta[i] = items.gamma_Y.row(j).dot(ds.X_Y.row(i));
  return y_loglik_item(j, ds, traits, items, eta);
}

Eigen::MatrixXd icc_curve(int j, const ItemParams& items, const Eigen::VectorXd& theta_grid, double eta) {
  Eigen::MatrixXd out(theta_grid.size(), items.beta.cols());
  for (Eigen::Index g = 0; g < theta_grid.size(); ++g) {
    out.row(g) = category_probs(category_logits(theta_grid[g], items.alpha[j], items.beta_row(j), eta)).transpose();
  }
  return out;
}

Eigen::VectorXd gibbs_mu(const Eigen::VectorXd& alpha, std::span<const int> subscale, int n_s, Rng& rng) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_s);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(n_s);
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    sum[subscale[j]] += std::log(alpha[j]);
    count[subscale[j]] += 1.0;
  }
  Eigen::VectorXd mu(n_s);
  for (int s = 0; s < n_s; ++s) mu[s] = rng.normal(sum[s] / (count[s] + 1.0), 1.0 / std::sqrt(count[s] + 1.0));
  return mu;
}

}  // namespace nggirt
