#include <cmath>
#include <map>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "nggirt/irt_pcm.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace nggirt {
namespace {

TEST(CategoryLogits, ZeroAndLinearCases) {
  const std::vector<double> zero(5, 0.0);
  EXPECT_TRUE(category_logits(0.0, 1.3, zero, 0.0).isZero(0.0));
  const Eigen::VectorXd lin = category_logits(1.0, 1.0, zero, 0.0);
  for (int h = 0; h < 5; ++h) EXPECT_DOUBLE_EQ(lin[h], h);
}

TEST(CategoryLogits, DirectScalarEvaluation) {
  const std::vector<double> beta{0, 0, 1, 0, 0};
  const Eigen::VectorXd got = category_logits(0.5, 2.0, beta, 0.3);
  // alpha * (h theta - sum_{l<h} beta_l) + h eta, term by term
  const double expected[5] = {0.0, 2.0 * 0.5 + 0.3, 2.0 * 1.0 + 0.6, 2.0 * (1.5 - 1.0) + 0.9,
                              2.0 * (2.0 - 1.0) + 1.2};
  for (int h = 0; h < 5; ++h) EXPECT_NEAR(got[h], expected[h], 1e-15);
}

TEST(CategoryLogits, RejectsNonPositiveAlpha) {
  const std::vector<double> beta(3, 0.0);
  EXPECT_THROW(category_logits(0.0, 0.0, beta, 0.0), std::invalid_argument);
  EXPECT_THROW(category_logits(0.0, -1.0, beta, 0.0), std::invalid_argument);
}

TEST(CategoryProbs, UniformIsExact) {
  const Eigen::VectorXd p = category_probs(Eigen::VectorXd::Zero(5));
  for (int h = 0; h < 5; ++h) EXPECT_EQ(p[h], 0.2);
}

TEST(CategoryProbs, SoftmaxValues) {
  Eigen::VectorXd logits(5);
  logits << 0, 1, 2, 3, 4;
  const Eigen::VectorXd p = category_probs(logits);
  const double expected[5] = {0.01166, 0.03169, 0.08612, 0.23412, 0.63641};
  for (int h = 0; h < 5; ++h) EXPECT_NEAR(p[h], expected[h], 1e-5);
  const Eigen::VectorXd shifted = category_probs(logits.array() + 1000.0);
  EXPECT_TRUE(shifted.isApprox(p, 1e-14));
}

TEST(CategoryProbs, MatchesLiteralOracleOnRandomDraws) {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 20000; ++rep) {
    const int m = 2 + rep % 7;
    std::vector<double> beta(m, 0.0);
    for (int l = 2; l < m; ++l) beta[l] = 1.5 * z(gen);
    const double theta = 3.0 * z(gen);
    const double alpha = std::exp(0.7 * z(gen));
    const double eta = z(gen);
    const Eigen::VectorXd p = category_probs(category_logits(theta, alpha, beta, eta));
    const auto expected = oracle::pcm_probs(theta, alpha, beta, eta);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    for (int h = 0; h < m; ++h) {
      ASSERT_NEAR(p[h], expected[h], 1e-12);
      ASSERT_NEAR(y_loglik_cell(h, theta, alpha, beta, eta), std::log(expected[h]), 1e-10);
    }
  }
}

TEST(YLoglik, UniformAndKnownCell) {
  const std::vector<double> zero(5, 0.0);
  for (int y = 0; y < 5; ++y) EXPECT_NEAR(y_loglik_cell(y, 0.0, 1.0, zero, 0.0), std::log(0.2), 1e-15);
    // logits 0..4, so the top category has log probability 4 - log(sum e^h)
  const double norm = 1.0 + std::exp(1.0) + std::exp(2.0) + std::exp(3.0) + std::exp(4.0);
  EXPECT_NEAR(y_loglik_cell(4, 1.0, 1.0, zero, 0.0), 4.0 - std::log(norm), 1e-13);
}

class ItemFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    sim_ = testing::small_simulation(Dims{3, 4, 2, 3, 4, 2, 2, 1, 2}, 1, 0.3, 23);
  }
  Simulation sim_;
};

TEST_F(ItemFixture, ItemLoglikIsBruteForceSum) {
  const Dataset& ds = sim_.data;
  const ItemParams& items = sim_.truth.items;
  for (int j = 0; j < ds.dims.J; ++j) {
    double expected = 0.0;
    for (int t = 0; t < ds.dims.T_Y; ++t) {
      for (int i = 0; i < ds.dims.N; ++i) {
        if (!ds.y_observed(t, i, j)) continue;
        const double eta = items.gamma_Y.row(j).dot(ds.X_Y.row(i));
        std::vector<double> beta(items.beta.row(j).data(), items.beta.row(j).data() + ds.dims.m);
        const auto p = oracle::pcm_probs(sim_.traits.at(ds.domain[j], i, t), items.alpha[j], beta, eta);
        expected += std::log(p[ds.y(t, i, j)]);
      }
    }
    EXPECT_NEAR(y_loglik_item(j, ds, sim_.traits, items), expected, 1e-10);
  }
}

TEST_F(ItemFixture, AllMissingItemContributesNothing) {
  Dataset ds = sim_.data;
  for (int t = 0; t < ds.dims.T_Y; ++t) {
    for (int i = 0; i < ds.dims.N; ++i) ds.Y[ds.y_index(t, i, 0)] = -1;
  }
  rebuild_mask(ds);
  EXPECT_EQ(y_loglik_item(0, ds, sim_.traits, sim_.truth.items), 0.0);
}

// With alpha = 1, beta = 0 and eta = 0 the likelihood of a response vector
// depends on the answers only through their sum.
TEST(PartialCredit, SumIsSufficient) {
  const std::vector<double> zero(3, 0.0);
  for (double theta : {-1.3, 0.0, 0.4, 2.2}) {
    std::map<int, double> by_sum;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int c = 0; c < 3; ++c) {
          const double ll = y_loglik_cell(a, theta, 1.0, zero, 0.0) + y_loglik_cell(b, theta, 1.0, zero, 0.0) +
                            y_loglik_cell(c, theta, 1.0, zero, 0.0);
          auto [it, fresh] = by_sum.emplace(a + b + c, ll);
          if (!fresh) EXPECT_NEAR(it->second, ll, 1e-13);
        }
      }
    }
  }
}

TEST(IccCurve, RowsNormalisedAndTopCategoryMonotone) {
  ItemParams items;
  items.alpha = Eigen::VectorXd::Constant(1, 1.4);
  items.beta = RowMatrix::Zero(1, 5);
  items.beta.row(0) << 0, 0, 0.5, -1.0, 2.0;
  items.mu = Eigen::VectorXd::Zero(1);
  items.gamma_Y = Eigen::MatrixXd::Zero(1, 0);
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(801, -40.0, 40.0);
  const Eigen::MatrixXd icc = icc_curve(0, items, grid, 0.0);
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    EXPECT_NEAR(icc.row(g).sum(), 1.0, 1e-12);
    if (g > 0) EXPECT_GE(icc(g, 4), icc(g - 1, 4) - 1e-15);
  }
  EXPECT_NEAR(icc(0, 0), 1.0, 1e-12);
}

TEST(GibbsMu, MomentsMatchConditional) {
  Eigen::VectorXd alpha(5);
  alpha << 0.5, 1.2, 2.0, 0.9, 1.7;
  const std::vector<int> subscale{0, 0, 1, 1, 1};
  Rng rng(4);
  const int n = 10000;
  std::vector<double> m0, m1;
  for (int r = 0; r < n; ++r) {
    const Eigen::VectorXd mu = gibbs_mu(alpha, subscale, 3, rng);
    m0.push_back(mu[0]);
    m1.push_back(mu[2]);
  }
  const double mean0 = (std::log(0.5) + std::log(1.2)) / 3.0;
  EXPECT_NEAR(testing::mean(m0), mean0, 3.0 * std::sqrt(1.0 / 3.0 / n));
  EXPECT_NEAR(testing::mean(m1), 0.0, 3.0 * std::sqrt(1.0 / n));
  EXPECT_NEAR(testing::variance(m0), 1.0 / 3.0, 3.0 * (1.0 / 3.0) * std::sqrt(2.0 / n));
}

}  // namespace
}  // namespace nggirt
