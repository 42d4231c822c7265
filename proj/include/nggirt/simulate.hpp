#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "nggirt/data_model.hpp"
#include "nggirt/irt_pcm.hpp"
#include "nggirt/ngg_prior.hpp"
#include "nggirt/rng.hpp"
#include "nggirt/sampler.hpp"
#include "nggirt/spline_basis.hpp"

namespace nggirt {

/// Everything about a synthetic dataset that is fixed before any response is
/// drawn: dimensions, time grids, item maps and covariates.
struct SimulationDesign {
  Dims dims;
  Eigen::VectorXd z_times;
  std::vector<double> y_times;
  std::vector<int> subscale;  // 0-based
  std::vector<int> domain;    // 0-based
  Eigen::MatrixXd X_Z;
  Eigen::MatrixXd X_Y;
  std::vector<std::string> xz_names;
  std::vector<std::string> xy_names;
};

/// z_times on [0, 6], denser at early ages; waves 1..T_Y; items assigned to
/// subscales in contiguous blocks, subscale s mapped to domain s mod n_p,
/// covariates drawn as independent 0/1 dummies.
SimulationDesign make_design(const Dims& dims, Rng& rng);

/// Generating parameters. Atoms may be left empty to draw them from the
/// base measure.
struct TrueParams {
  Partition partition;
  UniqueValues atoms;
  Eigen::VectorXd gamma_Z;
  double sigma2_Z = 1.0;
  ItemParams items;
};

/// Draws every parameter except the partition from its prior.
TrueParams draw_true_params(const SimulationDesign& design, const Partition& partition, int spline_dim, Rng& rng);

struct Simulation {
  Dataset data;
  TrueParams truth;      // atoms filled in
  Traits traits;         // theta and theta0 per subject
  Eigen::MatrixXd b;     // N x d subject spline coefficients
  Eigen::MatrixXd Z_full;
  std::vector<int> Y_full;
};

/// Forward simulation: theta ~ N(theta0, 1), Z from the spline regression,
/// Y from the partial credit model; cells are then masked independently at
/// the requested rates. A subject left with no observed Z (or Y) cell gets
/// its mask row redrawn, so every subject stays usable.
Simulation generate(const SimulationDesign& design, const TrueParams& truth, double z_missing_rate,
                    double y_missing_rate, const KnotPolicy& knots, Rng& rng);

/// Default scenario: N = 100, T_Z = 14, T_Y = 4, J = 12, m = 5, four
/// subscales over two domains, two covariates per sub-model, three clusters
/// of sizes 40 / 35 / 25 placed far apart in (b, theta0), 6.5% missingness.
struct Scenario {
  SimulationDesign design;
  TrueParams truth;
  double z_missing_rate = 0.065;
  double y_missing_rate = 0.065;
};
Scenario default_scenario(std::uint64_t seed);

/// truth.json: partition (1-based labels), atoms and all generating parameters.
nlohmann::json truth_to_json(const Simulation& sim);
std::vector<int> read_truth_partition(const std::filesystem::path& truth_json);

/// Marginal-conditional versus successive-conditional test of the sampler.
struct GewekeConfig {
  Dims dims{8, 5, 2, 4, 3, 2, 2, 2, 1};
  long n_outer = 20000;     // draws per arm
  long warmup = 1000;       // adaptive sweeps of the successive arm, discarded
  int batches = 50;         // batch means for the successive arm's standard errors
  double missing_rate = 0.1;
  double z_threshold = 3.0;
  double pass_fraction = 0.95;
  std::uint64_t seed = 7;
  McmcConfig mcmc;          // ngg settings, priors and testing hooks are taken from here
};

void to_json(nlohmann::json& j, const GewekeConfig& cfg);
void from_json(const nlohmann::json& j, GewekeConfig& cfg);

struct GewekeStat {
  std::string name;
  int moment = 1;  // 1: E[g], 2: E[g^2]
  double marginal_mean = 0.0;
  double marginal_se = 0.0;
  double successive_mean = 0.0;
  double successive_se = 0.0;
  double z = 0.0;
};

struct GewekeReport {
  std::vector<GewekeStat> stats;
  double fraction_within = 0.0;
  double max_abs_z = 0.0;
  bool passed = false;
  double seconds = 0.0;
};

nlohmann::json report_to_json(const GewekeReport& report, const GewekeConfig& cfg);

/// Fixed parts of the Geweke problem: design, missingness mask and basis.
struct GewekeProblem {
  Dataset data;  // observed cells are overwritten on every draw
  SplineBasis basis;
};
GewekeProblem make_geweke_problem(const GewekeConfig& cfg);

/// Joint prior draw of every parameter, with observed and missing cells of
/// the returned state (and of problem.data) drawn from the likelihood.
ModelState draw_joint_prior(GewekeProblem& problem, const McmcConfig& mcmc, const NggPriorTable& table, Rng& rng);

/// Redraws the observed cells of problem.data (and the matching cells of
/// state.Z_work / state.Y_work) given the parameters in state.
void regenerate_data(ModelState& state, GewekeProblem& problem, Rng& rng);

/// Names of the statistic battery, in the order of geweke_statistics.
std::vector<std::string> geweke_statistic_names(const Dims& dims);
std::vector<double> geweke_statistics(const ModelState& state, const Dataset& data, const SplineBasis& basis);

/// Successive-conditional chain from `start`: entry 0 is the statistics of
/// the starting state, followed by `n` sweep-plus-regeneration steps.
/// `state` is advanced in place.
std::vector<std::vector<double>> successive_arm(GewekeProblem& problem, ModelState& state, Sampler& sampler, long n,
                                                Rng& rng);

GewekeReport geweke_run(const GewekeConfig& cfg);

}  // namespace nggirt
