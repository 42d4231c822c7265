#include "nggirt/adaptive_mh.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace nggirt {

namespace {

// Robbins-Monro gain for the k-th adaptation step.
double gain(long k) { return std::min(0.5, 1.0 / std::pow(static_cast<double>(k) + 1.0, 0.6)); }

constexpr double kMaxLogLambda = 10.0;

}  // namespace

AdaptiveKernel::AdaptiveKernel(int dim, double target_accept, int adapt_start, double initial_sd)
    : dim_(dim),
      target_(target_accept),
      adapt_start_(std::max(adapt_start, 2)),
      initial_sd_(initial_sd),
      mean_(Eigen::VectorXd::Zero(dim)),
      m2_(Eigen::MatrixXd::Zero(dim, dim)),
      factor_(Eigen::MatrixXd::Identity(dim, dim) * initial_sd) {}

Eigen::VectorXd AdaptiveKernel::propose(const Eigen::VectorXd& x, Rng& rng) const {
  const Eigen::VectorXd z = rng.std_normal_vector(dim_);
  return x + std::exp(log_lambda_) * (factor_ * z);
}

void AdaptiveKernel::record(const Eigen::VectorXd& x, bool accepted) {
  ++proposals_;
  if (accepted) ++accepts_;
  if (!adapting_) return;
  ++n_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_.noalias() += delta * (x - mean_).transpose();
  log_lambda_ += gain(n_) * ((accepted ? 1.0 : 0.0) - target_);
  log_lambda_ = std::clamp(log_lambda_, -kMaxLogLambda, kMaxLogLambda);
  if (n_ >= adapt_start_) refresh_factor();
}

void AdaptiveKernel::refresh_factor() {
  Eigen::MatrixXd cov = m2_ / static_cast<double>(n_ - 1);
  cov = 0.5 * (cov + cov.transpose());
  cov.diagonal().array() += kProposalJitter;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return;  // keep the previous factor
  factor_ = (2.38 / std::sqrt(static_cast<double>(dim_))) * llt.matrixL().toDenseMatrix();
}

double ScalarKernel::proposal_sd() const {
  double base = initial_sd_;
  if (n_ >= std::max(adapt_start_, 2)) base = 2.38 * std::sqrt(m2_ / static_cast<double>(n_ - 1) + kProposalJitter);
  return std::exp(log_lambda_) * base;
}

void ScalarKernel::record(double x, bool accepted) {
  ++proposals_;
  if (accepted) ++accepts_;
  if (!adapting_) return;
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
  log_lambda_ += gain(n_) * ((accepted ? 1.0 : 0.0) - target_);
  log_lambda_ = std::clamp(log_lambda_, -kMaxLogLambda, kMaxLogLambda);
}

void to_json(nlohmann::json& j, const AdaptiveKernel& k) {
  j = nlohmann::json{{"dim", k.dim_},
                     {"target", k.target_},
                     {"adapt_start", k.adapt_start_},
                     {"initial_sd", k.initial_sd_},
                     {"log_lambda", k.log_lambda_},
                     {"adapting", k.adapting_},
                     {"n", k.n_},
                     {"proposals", k.proposals_},
                     {"accepts", k.accepts_},
                     {"mean", std::vector<double>(k.mean_.data(), k.mean_.data() + k.mean_.size())},
                     {"m2", std::vector<double>(k.m2_.data(), k.m2_.data() + k.m2_.size())},
                     {"factor", std::vector<double>(k.factor_.data(), k.factor_.data() + k.factor_.size())}};
}

void from_json(const nlohmann::json& j, AdaptiveKernel& k) {
  k.dim_ = j.at("dim").get<int>();
  k.target_ = j.at("target").get<double>();
  k.adapt_start_ = j.at("adapt_start").get<int>();
  k.initial_sd_ = j.at("initial_sd").get<double>();
  k.log_lambda_ = j.at("log_lambda").get<double>();
  k.adapting_ = j.at("adapting").get<bool>();
  k.n_ = j.at("n").get<long>();
  k.proposals_ = j.at("proposals").get<long>();
  k.accepts_ = j.at("accepts").get<long>();
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto m2 = j.at("m2").get<std::vector<double>>();
  const auto factor = j.at("factor").get<std::vector<double>>();
  k.mean_ = Eigen::Map<const Eigen::VectorXd>(mean.data(), k.dim_);
  k.m2_ = Eigen::Map<const Eigen::MatrixXd>(m2.data(), k.dim_, k.dim_);
  k.factor_ = Eigen::Map<const Eigen::MatrixXd>(factor.data(), k.dim_, k.dim_);
}

void to_json(nlohmann::json& j, const ScalarKernel& k) {
  j = nlohmann::json::array({k.target_, k.adapt_start_, k.initial_sd_, k.log_lambda_, k.adapting_, k.n_,
                             k.proposals_, k.accepts_, k.mean_, k.m2_});
}

void from_json(const nlohmann::json& j, ScalarKernel& k) {
  k.target_ = j.at(0).get<double>();
  k.adapt_start_ = j.at(1).get<int>();
  k.initial_sd_ = j.at(2).get<double>();
  k.log_lambda_ = j.at(3).get<double>();
  k.adapting_ = j.at(4).get<bool>();
  k.n_ = j.at(5).get<long>();
  k.proposals_ = j.at(6).get<long>();
  k.accepts_ = j.at(7).get<long>();
  k.mean_ = j.at(8).get<double>();
  k.m2_ = j.at(9).get<double>();
}

}  // namespace nggirt
