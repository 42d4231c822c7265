#include "nggirt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nggirt {

double Rng::gamma(double shape, double rate) {
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(engine_);
}

Eigen::VectorXd Rng::std_normal_vector(Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index k = 0; k < n; ++k) z[k] = normal();
  return z;
}

Eigen::VectorXd Rng::mvn_from_precision(const Eigen::MatrixXd& precision,
                                        const Eigen::VectorXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("precision matrix is not positive definite");
  }
  Eigen::VectorXd mean = llt.solve(rhs);
  // precision = L L^T, so L^{-T} z has covariance precision^{-1}.
  Eigen::VectorXd z = std_normal_vector(rhs.size());
  return mean + llt.matrixU().solve(z);
}

std::size_t Rng::categorical_log(std::span<const double> log_weights) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  double total = 0.0;
  for (double lw : log_weights) total += std::exp(lw - top);
  double target = uniform() * total;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    target -= std::exp(log_weights[k] - top);
    if (target <= 0.0) return k;
  }
  return log_weights.size() - 1;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double target = uniform() * total;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    target -= weights[k];
    if (target <= 0.0) return k;
  }
  return weights.size() - 1;
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << engine_ << ' ' << unif_ << ' ' << normal_;
  return out.str();
}

void Rng::deserialize(const std::string& text) {
  std::istringstream in(text);
  in >> engine_ >> unif_ >> normal_;
  if (!in) throw std::runtime_error("corrupt random-number state");
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(top)) return top;
  double total = 0.0;
  for (double v : x) total += std::exp(v - top);
  return top + std::log(total);
}

}  // namespace nggirt
