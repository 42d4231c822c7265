#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "nggirt/sampler.hpp"
#include "test_support.hpp"

namespace nggirt {
namespace {

namespace fs = std::filesystem;

class SamplerFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    sim_ = testing::small_simulation(Dims{10, 6, 2, 4, 4, 2, 2, 2, 1}, 2, 0.15, 51);
    basis_ = build_basis(sim_.data.z_times);
  }

  McmcConfig small_config(long n_iter, long burn_in) const {
    McmcConfig cfg;
    cfg.n_iter = n_iter;
    cfg.burn_in = burn_in;
    cfg.thin = 1;
    cfg.init_burn_in = 20;
    cfg.seed = 99;
    cfg.checkpoint_every = 0;
    return cfg;
  }

  Simulation sim_;
  SplineBasis basis_;
};

TEST_F(SamplerFixture, InitialStateIsDeterministicAndValid) {
  const McmcConfig cfg = small_config(10, 0);
  Rng r1(5), r2(5);
  const ModelState a = init_state(sim_.data, basis_, cfg, r1);
  const ModelState b = init_state(sim_.data, basis_, cfg, r2);
  EXPECT_EQ(state_to_json(a).dump(), state_to_json(b).dump());
  EXPECT_EQ(a.partition.K(), 1);
  EXPECT_NO_THROW(check_invariants(a, sim_.data, basis_));
  for (int j = 0; j < 4; ++j) {
    EXPECT_EQ(a.items.beta(j, 0), 0.0);
    EXPECT_EQ(a.items.beta(j, 1), 0.0);
    EXPECT_GT(a.items.alpha[j], 0.0);
  }
}

TEST_F(SamplerFixture, InvariantsHoldAfterEverySweep) {
  const McmcConfig cfg = small_config(200, 100);
  Rng rng(6);
  ModelState s = init_state(sim_.data, basis_, cfg, rng);
  Sampler sampler(sim_.data, basis_, cfg);
  std::set<int> seen_k;
  for (int r = 0; r < 300; ++r) {
    sampler.sweep(s, rng);
    ASSERT_NO_THROW(check_invariants(s, sim_.data, basis_)) << r;
    seen_k.insert(s.partition.K());
    for (int i = 0; i < 10; ++i) {
      for (int t = 0; t < 6; ++t) {
        if (sim_.data.z_observed(i, t)) ASSERT_EQ(s.Z_work(i, t), sim_.data.Z(i, t));
      }
    }
    for (std::size_t k = 0; k < s.Y_work.size(); ++k) {
      if (!sim_.data.mask.y_missing[k]) {
        ASSERT_EQ(s.Y_work[k], sim_.data.Y[k]);
      } else {
        ASSERT_GE(s.Y_work[k], 0);
        ASSERT_LT(s.Y_work[k], 4);
      }
    }
  }
  EXPECT_GT(seen_k.size(), 1u);
  EXPECT_FALSE(sampler.adapting());
  EXPECT_EQ(s.iteration, 300);
}

TEST_F(SamplerFixture, StateJsonRoundTrip) {
  const McmcConfig cfg = small_config(50, 0);
  Rng rng(7);
  ModelState s = init_state(sim_.data, basis_, cfg, rng);
  Sampler sampler(sim_.data, basis_, cfg);
  for (int r = 0; r < 30; ++r) sampler.sweep(s, rng);
  const nlohmann::json j = state_to_json(s);
  const ModelState back = state_from_json(j);
  EXPECT_EQ(state_to_json(back).dump(), j.dump());
  EXPECT_EQ(back.partition, s.partition);
  EXPECT_TRUE(back.Z_work.isApprox(s.Z_work, 0.0));
  // Sweeping the copy and the original with the same stream stays identical.
  Rng r1(8), r2(8);
  ModelState a = s, b = back;
  Sampler s1(sim_.data, basis_, cfg), s2(sim_.data, basis_, cfg);
  s1.kernels_from_json(sampler.kernels_to_json());
  s2.kernels_from_json(sampler.kernels_to_json());
  for (int r = 0; r < 5; ++r) {
    s1.sweep(a, r1);
    s2.sweep(b, r2);
  }
  EXPECT_EQ(state_to_json(a).dump(), state_to_json(b).dump());
}

TEST_F(SamplerFixture, StoresExpectedNumberOfDraws) {
  McmcConfig cfg = small_config(10, 0);
  const ChainOutput out = run_chain(sim_.data, cfg);
  EXPECT_EQ(out.n_draws(), 10u);
  EXPECT_EQ(out.iterations.front(), 1);
  EXPECT_EQ(out.iterations.back(), 10);
  cfg.n_iter = 25;
  cfg.burn_in = 5;
  cfg.thin = 4;
  const ChainOutput thinned = run_chain(sim_.data, cfg);
  EXPECT_EQ(thinned.iterations, (std::vector<long>{9, 13, 17, 21, 25}));
  EXPECT_EQ(thinned.block("alpha").rows(), 5u);
  EXPECT_EQ(thinned.block("beta").width(), 4u * 2);
  EXPECT_EQ(thinned.block("gamma_Y").width(), 4u);
}

TEST_F(SamplerFixture, SameSeedSameChain) {
  const McmcConfig cfg = small_config(60, 20);
  const ChainOutput a = run_chain(sim_.data, cfg);
  const ChainOutput b = run_chain(sim_.data, cfg);
  EXPECT_EQ(a.partitions, b.partitions);
  for (const auto& name : chain_block_names()) EXPECT_EQ(a.block(name).values, b.block(name).values) << name;
  McmcConfig other = cfg;
  other.seed += 1;
  EXPECT_NE(run_chain(sim_.data, other).block("sigma2_Z").values, a.block("sigma2_Z").values);
}

std::map<std::string, std::string> directory_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = testing::slurp(e.path());
  return out;
}

TEST_F(SamplerFixture, ResumeFromCheckpointReproducesUninterruptedRun) {
  McmcConfig cfg = small_config(120, 40);
  cfg.checkpoint_every = 25;
  testing::TempDir full("full"), part("part");
  const ChainOutput a = run_chain(sim_.data, cfg, RunOptions{full.path()});
  EXPECT_FALSE(fs::exists(full / "INCOMPLETE"));
  EXPECT_FALSE(fs::exists(full / "checkpoint.json"));
  EXPECT_TRUE(fs::exists(full / "run_manifest.json"));

  // Abandon after 110 sweeps: the last checkpoint was at sweep 100, so ten
  // sweeps of output must be discarded on resume.
  RunOptions stop{part.path()};
  stop.stop_after = 110;
  run_chain(sim_.data, cfg, stop);
  EXPECT_TRUE(fs::exists(part / "INCOMPLETE"));
  EXPECT_TRUE(fs::exists(part / "checkpoint.json"));
  RunOptions resume{part.path()};
  resume.resume = true;
  const ChainOutput b = run_chain(sim_.data, cfg, resume);
  EXPECT_EQ(a.partitions, b.partitions);
  EXPECT_EQ(a.block("alpha").values, b.block("alpha").values);
  EXPECT_EQ(directory_contents(full.path()), directory_contents(part.path()));

  const ChainOutput back = read_chain(full.path());
  EXPECT_EQ(back.partitions, a.partitions);
  EXPECT_EQ(back.iterations, a.iterations);
  for (const auto& name : chain_block_names()) EXPECT_EQ(back.block(name).values, a.block(name).values) << name;
}

TEST_F(SamplerFixture, ResumeRefusesChangedConfiguration) {
  McmcConfig cfg = small_config(60, 10);
  cfg.checkpoint_every = 10;
  testing::TempDir dir("cfg");
  RunOptions stop{dir.path()};
  stop.stop_after = 35;
  run_chain(sim_.data, cfg, stop);
  cfg.thin = 2;
  RunOptions resume{dir.path()};
  resume.resume = true;
  EXPECT_THROW(run_chain(sim_.data, cfg, resume), std::runtime_error);
}

TEST(McmcConfig, JsonDefaultsAndStrictKeys) {
  const McmcConfig defaults;
  EXPECT_EQ(defaults.n_iter, 25000);
  EXPECT_EQ(defaults.burn_in, 15000);
  EXPECT_EQ(defaults.thin, 2);
  EXPECT_EQ(defaults.ngg.kappa, 1.0);
  EXPECT_EQ(defaults.ngg.sigma, 0.75);
  const nlohmann::json j = defaults;
  const McmcConfig back = j.get<McmcConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_THROW(nlohmann::json({{"n_iters", 5}}).get<McmcConfig>(), std::invalid_argument);
  EXPECT_THROW(nlohmann::json({{"thin", "two"}}).get<McmcConfig>(), std::invalid_argument);
  McmcConfig bad;
  bad.burn_in = bad.n_iter;
  EXPECT_THROW(bad.check(), std::invalid_argument);
  bad = McmcConfig{};
  bad.ngg.sigma = 1.0;
  EXPECT_THROW(bad.check(), std::invalid_argument);
}

// With every data term removed the sweep leaves the prior invariant.
TEST_F(SamplerFixture, LikelihoodFreeSweepSamplesThePrior) {
  McmcConfig cfg = small_config(40000, 1000);
  cfg.use_likelihood = false;
  cfg.thin = 5;
  const ChainOutput out = run_chain(sim_.data, cfg);
  const auto sigma2 = out.block("sigma2_Z").column(0);
  std::vector<double> log_alpha, mu, beta;
  for (double a : out.block("alpha").column(0)) log_alpha.push_back(std::log(a));
  // IG(3, 2) has mean 1; log alpha ~ N(0, 2); mu ~ N(0, 1); beta ~ N(0, 1)
  EXPECT_NEAR(testing::mean(sigma2), 1.0, 0.08);
  EXPECT_NEAR(testing::mean(log_alpha), 0.0, 0.1);
  EXPECT_NEAR(testing::variance(log_alpha), 2.0, 0.2);
  EXPECT_NEAR(testing::variance(out.block("mu").column(1)), 1.0, 0.1);
  EXPECT_NEAR(testing::variance(out.block("beta").column(3)), 1.0, 0.1);
  const NggPriorTable table(10, cfg.ngg);
  const auto exact = table.k_distribution();
  double mean_k = 0.0;
  for (int k = 1; k <= 10; ++k) mean_k += k * exact[k];
  EXPECT_NEAR(testing::mean(out.block("K").column(0)), mean_k, 0.15);
}

}  // namespace
}  // namespace nggirt
