#include <algorithm>
#include <functional>
#include <memory>
#include <cmath>
#include <random>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "nggirt/ngg_prior.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace nggirt {
namespace {

TEST(Partition, FromLabelsAndValidity) {
  const std::vector<int> raw{7, 7, 3, 9, 3};
  const Partition p = Partition::from_labels(raw);
  EXPECT_EQ(p.c, (std::vector<int>{0, 0, 1, 2, 1}));
  EXPECT_EQ(p.sizes, (std::vector<int>{2, 2, 1}));
  EXPECT_TRUE(p.valid());
  Partition bad = p;
  bad.sizes[2] = 0;
  EXPECT_FALSE(bad.valid());
  EXPECT_TRUE(Partition::single_cluster(4).valid());
}

TEST(UrnWeights, ScalarCases) {
  EXPECT_NEAR(log_urn_weight_existing(2, 0.0, 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(log_urn_weight_existing(1, 0.75, 0.0), std::log(0.25), 1e-15);
  EXPECT_NEAR(log_urn_weight_existing(5, 0.3, -2.5), std::log(4.7) - 2.5, 1e-14);
  EXPECT_THROW(log_urn_weight_existing(0, 0.5, 0.0), std::invalid_argument);
  EXPECT_NEAR(log_urn_weight_new(1.0, 0.75, 1.0, 1, 0.0), 0.75 * std::log(2.0), 1e-15);
  EXPECT_NEAR(log_urn_weight_new(2.0, 1e-12, 4.0, 4, 0.0), std::log(0.5), 1e-10);
  EXPECT_NEAR(log_urn_weight_new(1.5, 0.4, 2.3, 3, 1.1), std::log(1.5 * std::pow(3.3, 0.4) / 3.0) + 1.1, 1e-14);
}

TEST(UrnWeights, AllocationProbabilitiesNormalise) {
  const std::vector<int> sizes{3, 1, 6};
  const std::vector<double> ll{-1.0, 0.5, -3.0};
  const std::vector<double> aux{-0.2, -4.0};
  const auto p = allocation_probabilities(sizes, ll, aux, NggConfig{1.3, 0.6, 2}, 0.8);
  ASSERT_EQ(p.size(), 5u);
  double total = 0.0;
  for (double v : p) total += v;
  EXPECT_NEAR(total, 1.0, 1e-14);
  // direct weights
  std::vector<double> w{(3 - 0.6) * std::exp(-1.0), (1 - 0.6) * std::exp(0.5), (6 - 0.6) * std::exp(-3.0),
                        1.3 * std::pow(1.8, 0.6) / 2 * std::exp(-0.2), 1.3 * std::pow(1.8, 0.6) / 2 * std::exp(-4.0)};
  double s = 0.0;
  for (double v : w) s += v;
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_NEAR(p[k], w[k] / s, 1e-14);
}

TEST(UrnWeights, TinySigmaRecoversDirichletUrn) {
  for (double u : {0.01, 1.0, 50.0}) {
    const std::vector<int> sizes{4, 1, 2};
    const std::vector<double> zero3(3, 0.0);
    const std::vector<double> aux(3, 0.0);
    const auto p = allocation_probabilities(sizes, zero3, aux, NggConfig{2.0, 1e-6, 3}, u);
    const double n = 7.0;
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(p[j], sizes[j] / (n + 2.0), 1e-5);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(p[3 + a], 2.0 / 3.0 / (n + 2.0), 1e-5);
  }
}

struct AllocationSetup {
  AtomDims dims{3, 1, 1};
  NggConfig cfg{1.0, 0.75, 3};
};

TEST(ResampleAllocation, SingleSubjectAlwaysFormsCluster) {
  AllocationSetup s;
  Rng rng(1);
  Partition p = Partition::single_cluster(1);
  UniqueValues atoms{draw_from_base(s.dims, rng)};
  AtomLogLik flat = [](int, const ClusterAtom&) { return 0.0; };
  for (int r = 0; r < 100; ++r) {
    resample_allocation(0, p, atoms, s.cfg, 1.0, flat, s.dims, rng);
    EXPECT_EQ(p.c[0], 0);
    EXPECT_EQ(p.K(), 1);
    EXPECT_EQ(atoms.size(), 1u);
  }
}

TEST(ResampleAllocation, FlatLikelihoodGivesUrnFrequencies) {
  AllocationSetup s;
  const double u = 1.7;
  Rng rng(2);
  AtomLogLik flat = [](int, const ClusterAtom&) { return 0.0; };
  // Subject 0 moves; the others form clusters of sizes 3, 1, 2.
  const std::vector<int> base{0, 0, 0, 0, 1, 2, 2};
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int r = 0; r < n; ++r) {
    Partition p = Partition::from_labels(base);
    UniqueValues atoms;
    for (int k = 0; k < p.K(); ++k) atoms.push_back(draw_from_base(s.dims, rng));
    resample_allocation(0, p, atoms, s.cfg, u, flat, s.dims, rng);
    ASSERT_TRUE(p.valid());
    ASSERT_EQ(atoms.size(), static_cast<std::size_t>(p.K()));
    ++counts[std::min(p.c[0], 3)];
  }
  const double w_new = std::pow(1.0 + u, 0.75);
  const std::vector<double> w{3 - 0.75, 1 - 0.75, 2 - 0.75, w_new};
  const double total = w[0] + w[1] + w[2] + w[3];
  for (int k = 0; k < 4; ++k) {
    const double p = w[k] / total;
    EXPECT_NEAR(counts[k] / static_cast<double>(n), p, 4.0 * std::sqrt(p * (1 - p) / n)) << k;
  }
}

TEST(ResampleAllocation, SingletonRemovalKeepsLabelsContiguous) {
  AllocationSetup s;
  Rng rng(3);
  AtomLogLik flat = [](int, const ClusterAtom&) { return 0.0; };
  for (int rep = 0; rep < 2000; ++rep) {
    const std::vector<int> base{0, 1, 1, 2, 3, 3, 3};
    Partition p = Partition::from_labels(base);
    UniqueValues atoms;
    for (int k = 0; k < p.K(); ++k) {
      atoms.push_back(draw_from_base(s.dims, rng));
      atoms.back().b[0] = 100.0 + k;  // tag
    }
    const int i = rep % 7;
    resample_allocation(i, p, atoms, s.cfg, 0.5, flat, s.dims, rng);
    ASSERT_TRUE(p.valid());
    // Every subject other than i keeps its original atom.
    for (int k = 0; k < 7; ++k) {
      if (k == i) continue;
      EXPECT_EQ(atoms[p.c[k]].b[0], 100.0 + base[k]);
    }
  }
}

TEST(ResampleAllocation, FarSeparatedClusterWins) {
  AllocationSetup s;
  Rng rng(4);
  AtomLogLik ll = [](int, const ClusterAtom& a) { return -0.5 * (a.b[0] - 10.0) * (a.b[0] - 10.0) * 50.0; };
  int near = 0;
  for (int r = 0; r < 1000; ++r) {
    Partition p = Partition::from_labels(std::vector<int>{0, 0, 0, 1, 1, 1});
    UniqueValues atoms(2);
    atoms[0].b = Eigen::VectorXd::Constant(3, -10.0);
    atoms[1].b = Eigen::VectorXd::Constant(3, 10.0);
    for (auto& a : atoms) a.theta0 = Eigen::MatrixXd::Zero(1, 1);
    resample_allocation(0, p, atoms, s.cfg, 1.0, ll, s.dims, rng);
    near += p.c[0] == 1 || (p.c[0] < p.K() && atoms[p.c[0]].b[0] == 10.0);
  }
  EXPECT_EQ(near, 1000);
}

TEST(SubjectAtomLoglik, MatchesScalarNormals) {
  Traits traits(2, 1, 2);
  traits.at(0, 0, 0) = 0.3;
  traits.at(0, 0, 1) = -1.0;
  traits.at(1, 0, 0) = 2.0;
  traits.at(1, 0, 1) = 0.0;
  ClusterAtom atom;
  atom.theta0 = Eigen::MatrixXd::Zero(2, 2);
  atom.theta0(1, 0) = 1.0;
  const std::vector<double> resid{1.0, std::nan(""), 0.5};
  Eigen::VectorXd traj(3);
  traj << 0.5, 7.0, 0.0;
  auto lnorm = [](double x, double m, double v) { return -0.5 * std::log(2 * M_PI * v) - 0.5 * (x - m) * (x - m) / v; };
  const double expected = lnorm(1.0, 0.5, 2.0) + lnorm(0.5, 0.0, 2.0) + lnorm(0.3, 0, 1) + lnorm(-1.0, 0, 1) +
                          lnorm(2.0, 1.0, 1) + lnorm(0.0, 0, 1);
  EXPECT_NEAR(subject_atom_loglik(resid, traj, 2.0, traits, 0, atom), expected, 1e-12);
}

class UniqueValueFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    sim_ = testing::small_simulation(Dims{9, 6, 2, 2, 3, 1, 2, 1, 0}, 2, 0.25, 41);
    basis_ = build_basis(sim_.data.z_times);
    params_.b = sim_.b;
    params_.gamma_Z = sim_.truth.gamma_Z;
    params_.sigma2_Z = 0.4;
  }
  Simulation sim_;
  SplineBasis basis_;
  LongitudinalParams params_;
};

TEST_F(UniqueValueFixture, Theta0ArithmeticCase) {
  Traits traits(2, 1, 2);
  std::fill(traits.theta.begin(), traits.theta.end(), 2.0);
  Rng rng(5);
  const std::vector<int> members{0};
  std::vector<double> draws;
  for (int r = 0; r < 20000; ++r) {
    const ClusterAtom a = gibbs_unique_values(members, sim_.data, params_, basis_, traits, rng, false);
    draws.push_back(a.theta0(1, 1));
  }
  EXPECT_NEAR(testing::mean(draws), 1.0, 3.0 * std::sqrt(0.5 / 20000));
  EXPECT_NEAR(testing::variance(draws), 0.5, 3.0 * 0.5 * std::sqrt(2.0 / 20000));
}

TEST_F(UniqueValueFixture, EmptyClusterIsPriorDraw) {
  Rng rng(6);
  const std::vector<int> none;
  std::vector<double> b0, t0;
  for (int r = 0; r < 20000; ++r) {
    const ClusterAtom a = gibbs_unique_values(none, sim_.data, params_, basis_, sim_.traits, rng);
    b0.push_back(a.b[2]);
    t0.push_back(a.theta0(0, 1));
  }
  EXPECT_NEAR(testing::mean(b0), 0.0, 3.0 / std::sqrt(20000.0));
  EXPECT_NEAR(testing::variance(b0), 1.0, 3.0 * std::sqrt(2.0 / 20000));
  EXPECT_NEAR(testing::mean(t0), 0.0, 3.0 / std::sqrt(20000.0));
}

TEST_F(UniqueValueFixture, SplineAtomMomentsMatchStackedRegression) {
  const std::vector<int> members{1, 3, 5, 7};
  const Dataset& ds = sim_.data;
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> ys;
  for (int i : members) {
    const double shift = params_.gamma_Z.dot(ds.X_Z.row(i));
    for (int t = 0; t < ds.dims.T_Z; ++t) {
      if (!ds.z_observed(i, t)) continue;
      rows.push_back(basis_.B.col(t));
      ys.push_back(ds.Z(i, t) - shift);
    }
  }
  Eigen::MatrixXd X(rows.size(), basis_.d);
  Eigen::VectorXd y(ys.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    X.row(r) = rows[r].transpose();
    y[r] = ys[r];
  }
  const Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(basis_.d, basis_.d) + X.transpose() * X / 0.4;
  const Eigen::MatrixXd cov = precision.inverse();
  const Eigen::VectorXd mean = cov * X.transpose() * y / 0.4;

  Rng rng(7);
  const int n = 10000;
  Eigen::MatrixXd draws(n, basis_.d);
  std::vector<double> theta0_draws;
  for (int r = 0; r < n; ++r) {
    const ClusterAtom a = gibbs_unique_values(members, ds, params_, basis_, sim_.traits, rng);
    draws.row(r) = a.b.transpose();
    theta0_draws.push_back(a.theta0(1, 0));
  }
  const Eigen::VectorXd m = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - m.transpose();
  const Eigen::MatrixXd c = centered.transpose() * centered / (n - 1);
  for (int k = 0; k < basis_.d; ++k) {
    EXPECT_NEAR(m[k], mean[k], 3.0 * std::sqrt(cov(k, k) / n));
    EXPECT_NEAR(c(k, k), cov(k, k), 3.0 * cov(k, k) * std::sqrt(2.0 / n));
  }
  double sum = 0.0;
  for (int i : members) sum += sim_.traits.at(1, i, 0);
  EXPECT_NEAR(testing::mean(theta0_draws), sum / 5.0, 3.0 * std::sqrt(0.2 / n));
}

TEST(UDensity, ModeMatchesGridSearch) {
  const NggConfig cfg{1.0, 0.75, 3};
  double best = -1e300, best_u = 0.0;
  const double step = 1e-4;
  for (double u = step; u < 100.0; u += step) {
    // direct transcription of the log density
    const double v = 9.0 * std::log(u) - (1.0 / 0.75) * (std::pow(1.0 + u, 0.75) - 1.0) -
                     (10.0 - 3.0 * 0.75) * std::log(1.0 + u);
    if (v > best) {
      best = v;
      best_u = u;
    }
  }
  double lib_best = -1e300, lib_u = 0.0;
  for (double u = step; u < 100.0; u += step) {
    const double v = log_u_density(u, 10, 3, cfg);
    if (v > lib_best) {
      lib_best = v;
      lib_u = u;
    }
  }
  EXPECT_NEAR(lib_u, best_u, step);
  EXPECT_NEAR(log_u_density(best_u, 10, 3, cfg), best, 1e-9);
  // sigma = 0 limit
  EXPECT_NEAR(log_u_density(2.0, 5, 2, NggConfig{1.5, 0.0, 1}), 4 * std::log(2.0) - 1.5 * std::log(3.0) - 5 * std::log(3.0),
              1e-12);
  EXPECT_EQ(log_u_density(0.0, 5, 2, cfg), -std::numeric_limits<double>::infinity());
}

// Normalised CDF of u on a fine log grid (midpoint rule), from a direct
// transcription of the density.
std::function<double(double)> grid_cdf(int N, int K, double kappa, double sigma) {
  auto log_f = [=](double x) {
    const double u = std::exp(x);
    return N * x - kappa / sigma * (std::pow(1.0 + u, sigma) - 1.0) - (N - K * sigma) * std::log1p(u);
  };
  const double lo = -20.0, hi = 20.0;
  const int n = 400000;
  const double h = (hi - lo) / n;
  auto cdf = std::make_shared<std::vector<double>>(n + 1, 0.0);
  double top = -1e300;
  for (int g = 0; g < n; ++g) top = std::max(top, log_f(lo + (g + 0.5) * h));
  for (int g = 0; g < n; ++g) (*cdf)[g + 1] = (*cdf)[g] + std::exp(log_f(lo + (g + 0.5) * h) - top);
  const double total = cdf->back();
  for (double& v : *cdf) v /= total;
  return [=](double u) {
    const double x = std::log(u);
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    const double pos = (x - lo) / h;
    const auto g = static_cast<std::size_t>(pos);
    return (*cdf)[g] + (pos - g) * ((*cdf)[g + 1] - (*cdf)[g]);
  };
}

double ks_distance(std::vector<double> draws, const std::function<double(double)>& cdf) {
  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double d = 0.0;
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const double F = cdf(draws[k]);
    d = std::max({d, std::abs(F - k / n), std::abs(F - (k + 1) / n)});
  }
  return d;
}

TEST(UpdateU, ChainMatchesGridDensity) {
  const NggConfig cfg{1.0, 0.75, 3};
  ScalarKernel kernel(kTargetAcceptScalar, 100, 0.5);
  Rng rng(8);
  double u = 1.0;
  for (int r = 0; r < 5000; ++r) u = update_u(u, 10, 3, cfg, kernel, rng);
  kernel.freeze();
  std::vector<double> draws;
  for (int r = 0; r < 100000; ++r) {
    u = update_u(u, 10, 3, cfg, kernel, rng);
    draws.push_back(u);
  }
  EXPECT_LT(ks_distance(draws, grid_cdf(10, 3, 1.0, 0.75)), 0.02);
}

TEST(SampleU, InverseCdfMatchesGridDensity) {
  const NggConfig cfg{1.0, 0.75, 3};
  Rng rng(9);
  for (auto [N, K] : {std::pair{10, 3}, std::pair{8, 1}, std::pair{20, 12}}) {
    std::vector<double> draws;
    for (int r = 0; r < 20000; ++r) draws.push_back(sample_u_given_partition(N, K, cfg, rng));
    EXPECT_LT(ks_distance(draws, grid_cdf(N, K, 1.0, 0.75)), 0.015) << N << "," << K;
  }
}

TEST(PriorTable, MatchesIndependentQuadrature) {
  for (auto [kappa, sigma] : {std::pair{1.0, 0.75}, std::pair{0.5, 0.2}, std::pair{3.0, 0.5}}) {
    const NggPriorTable table(20, NggConfig{kappa, sigma, 3});
    for (int n = 1; n <= 20; ++n) {
      for (int k = 1; k <= n; ++k) {
        EXPECT_NEAR(table.log_v(n, k), oracle::ngg_log_v(n, k, kappa, sigma), 1e-8) << n << "," << k;
      }
    }
  }
}

TEST(PriorTable, DirichletLimitClosedForm) {
  const double kappa = 1.7;
  const NggPriorTable table(15, NggConfig{kappa, 0.0, 3});
  for (int n = 1; n <= 15; ++n) {
    for (int k = 1; k <= n; ++k) {
      const double expected = k * std::log(kappa) + std::lgamma(kappa) - std::lgamma(kappa + n);
      EXPECT_NEAR(table.log_v(n, k), expected, 1e-9);
    }
  }
}

TEST(PriorTable, RecursionIdentity) {
  const double sigma = 0.75;
  const NggPriorTable table(20, NggConfig{1.0, sigma, 3});
  for (int n = 1; n < 20; ++n) {
    for (int k = 1; k <= n; ++k) {
      const double lhs = std::exp(table.log_v(n, k));
      const double rhs = (n - k * sigma) * std::exp(table.log_v(n + 1, k)) + std::exp(table.log_v(n + 1, k + 1));
      EXPECT_NEAR(lhs / rhs, 1.0, 1e-9) << n << "," << k;
    }
  }
}

TEST(PriorTable, PartitionsFollowExactClusterCountLaw) {
  const NggPriorTable table(12, NggConfig{1.0, 0.75, 3});
  const auto exact = table.k_distribution();
  double total = 0.0;
  for (double p : exact) total += p;
  EXPECT_NEAR(total, 1.0, 1e-10);

  Rng rng(10);
  const int n = 40000;
  std::vector<int> counts(13, 0);
  for (int r = 0; r < n; ++r) {
    const Partition p = table.sample_partition(rng);
    ASSERT_TRUE(p.valid());
    ++counts[p.K()];
  }
  // Pearson goodness of fit, pooling sparse cells.
  double chi2 = 0.0, obs_tail = 0.0, exp_tail = 0.0;
  int cells = 0;
  for (int k = 1; k <= 12; ++k) {
    const double e = exact[k] * n;
    if (e < 20.0) {
      obs_tail += counts[k];
      exp_tail += e;
      continue;
    }
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
    ++cells;
  }
  if (exp_tail > 0) {
    chi2 += (obs_tail - exp_tail) * (obs_tail - exp_tail) / exp_tail;
    ++cells;
  }
  const boost::math::chi_squared dist(cells - 1);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 1e-3);

  // The independent urn agrees with the exact law too.
  const oracle::NggUrn urn(12, 1.0, 0.75);
  for (int k = 1; k < 12; ++k) EXPECT_NEAR(urn.p_new(k, 1), std::exp(table.log_v(k + 1, 2) - table.log_v(k, 1)), 1e-8);
}

}  // namespace
}  // namespace nggirt
