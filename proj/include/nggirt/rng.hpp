#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>

#include <Eigen/Dense>

namespace nggirt {

/// Seeded random source shared by every sampler step. The distribution
/// objects are members so that their cached state is part of a checkpoint.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  double uniform() { return unif_(engine_); }
  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }

  /// Gamma(shape, rate) draw.
  double gamma(double shape, double rate);

  /// Inverse-gamma with density proportional to x^{-shape-1} exp(-rate / x).
  double inv_gamma(double shape, double rate) { return 1.0 / gamma(shape, rate); }

  Eigen::VectorXd std_normal_vector(Eigen::Index n);

  /// Draw from N(precision^{-1} rhs, precision^{-1}) given a symmetric
  /// positive-definite precision matrix.
  Eigen::VectorXd mvn_from_precision(const Eigen::MatrixXd& precision,
                                     const Eigen::VectorXd& rhs);

  /// Index drawn with probability proportional to exp(log_weights[k]).
  std::size_t categorical_log(std::span<const double> log_weights);

  /// Index drawn with probability proportional to weights[k] (non-negative).
  std::size_t categorical(std::span<const double> weights);

  std::mt19937_64& engine() { return engine_; }

  std::string serialize() const;
  void deserialize(const std::string& text);

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Numerically safe log(sum(exp(x))).
double log_sum_exp(std::span<const double> x);

}  // namespace nggirt
