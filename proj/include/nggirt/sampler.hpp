#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "nggirt/adaptive_mh.hpp"
#include "nggirt/chain_io.hpp"
#include "nggirt/data_model.hpp"
#include "nggirt/irt_pcm.hpp"
#include "nggirt/longitudinal_model.hpp"
#include "nggirt/ngg_prior.hpp"
#include "nggirt/rng.hpp"
#include "nggirt/spline_basis.hpp"

namespace nggirt {

struct McmcConfig {
  long n_iter = 25000;
  long burn_in = 15000;
  long thin = 2;
  long init_burn_in = 100;  // warm-up sweeps before n_iter, with the fixed initial proposals
  std::uint64_t seed = 20240601;
  NggConfig ngg;
  KnotPolicy knots;
  VariancePrior sigma2_prior;
  long checkpoint_every = 1000;  // sweeps between checkpoints; 0 disables
  bool store_traits = true;      // write theta.csv and psi_star.csv

  // Testing hooks. With use_likelihood false every data term is dropped so
  // the chain targets the prior. sigma2_shape_offset perturbs the shape used
  // by the sigma2_Z Gibbs step only, to check that the Geweke harness notices.
  bool use_likelihood = true;
  double sigma2_shape_offset = 0.0;

  /// Throws std::invalid_argument on an inconsistent configuration.
  void check() const;
};

void to_json(nlohmann::json& j, const McmcConfig& cfg);
void from_json(const nlohmann::json& j, McmcConfig& cfg);

/// Complete Markov state. Z_work and Y_work hold the data with missing cells
/// filled by the latest imputation.
struct ModelState {
  Partition partition;
  UniqueValues atoms;
  LongitudinalParams lon;
  ItemParams items;
  Traits traits;
  double u = 1.0;
  Eigen::MatrixXd Z_work;
  std::vector<int> Y_work;
  long iteration = 0;  // completed sweeps, warm-up included
};

/// Copies each subject's cluster atom into lon.b and traits.theta0.
void sync_subject_copies(ModelState& state);

/// Checks cluster bookkeeping, parameter constraints and that subject-level
/// copies of the atoms agree with the partition. Throws std::logic_error.
void check_invariants(const ModelState& state, const Dataset& ds, const SplineBasis& basis);

/// mu_s ~ N(0, 1), log alpha_j ~ N(mu_{s_j}, 1), free beta entries and
/// gamma_Y entries ~ N(0, 1).
ItemParams draw_item_prior(const Dims& dims, std::span<const int> subscale, Rng& rng);

/// All parameters drawn from their priors, every subject in one cluster,
/// u = 1, missing cells imputed from the resulting prior predictive.
ModelState init_state(const Dataset& ds, const SplineBasis& basis, const McmcConfig& cfg, Rng& rng);

/// Holds the adaptive kernels and per-dataset lookup tables for repeated sweeps.
class Sampler {
 public:
  Sampler(const Dataset& ds, const SplineBasis& basis, const McmcConfig& cfg);

  /// One full sweep, in the order: imputation, longitudinal Gibbs steps,
  /// measurement-model Metropolis steps, allocations, unique values, u.
  void sweep(ModelState& state, Rng& rng);

  /// Rebuilds the cached observed-cell tables after the observed values of
  /// the dataset changed in place (the missingness pattern must not change).
  void refresh_data();

  /// Stops adaptation of every kernel.
  void freeze();
  bool adapting() const { return adapting_; }

  /// Acceptance rates per kernel family.
  nlohmann::json acceptance_summary() const;

  nlohmann::json kernels_to_json() const;
  void kernels_from_json(const nlohmann::json& j);

  const Dataset& dataset() const { return ds_; }
  const SplineBasis& basis() const { return basis_; }
  const McmcConfig& config() const { return cfg_; }

 private:
  struct Cell {
    int j;
    int y;  // 0-based category
  };
  struct ItemCell {
    int i;
    int t;
    int y;
  };

  void impute(ModelState& s, Rng& rng);
  void update_longitudinal(ModelState& s, Rng& rng);
  void update_traits(ModelState& s, Rng& rng);
  void update_alpha(ModelState& s, Rng& rng);
  void update_beta(ModelState& s, Rng& rng);
  void update_mu(ModelState& s, Rng& rng);
  void update_gamma_Y(ModelState& s, Rng& rng);
  void update_clusters(ModelState& s, Rng& rng);
  void refresh_eta(const ModelState& s);
  double item_loglik(const ModelState& s, int j, double alpha, std::span<const double> beta_row,
                     std::span<const double> eta) const;

  const Dataset& ds_;
  const SplineBasis& basis_;
  McmcConfig cfg_;
  bool adapting_ = true;

  std::vector<std::size_t> trait_offsets_;  // CSR over (p, i, t) into trait_cells_
  std::vector<Cell> trait_cells_;
  std::vector<std::vector<ItemCell>> item_cells_;
  std::vector<double> eta_;  // J x N, gamma_Y_j . X_Y_i

  std::vector<ScalarKernel> theta_kernels_;
  std::vector<ScalarKernel> alpha_kernels_;
  std::vector<AdaptiveKernel> beta_kernels_;
  std::vector<AdaptiveKernel> gamma_Y_kernels_;
  ScalarKernel u_kernel_;
};

nlohmann::json state_to_json(const ModelState& s);
ModelState state_from_json(const nlohmann::json& j);

/// Options for run_chain beyond the sampler configuration.
struct RunOptions {
  std::filesystem::path output_dir;  // empty: keep draws in memory only
  bool resume = false;               // continue from output_dir/checkpoint.json
  const nlohmann::json* provenance = nullptr;  // extra manifest fields (input hashes)
  long stop_after = -1;              // testing: abandon the run after this many sweeps
};

/// Runs init_burn_in + n_iter sweeps and keeps every thin-th draw after
/// burn_in. With an output directory the draws are streamed to CSV files,
/// checkpoints are written periodically and a manifest closes the run; an
/// INCOMPLETE marker stays behind if the run does not finish.
ChainOutput run_chain(const Dataset& ds, const McmcConfig& cfg, const RunOptions& options = {});

/// Version string embedded in manifests.
const char* code_version();

}  // namespace nggirt
