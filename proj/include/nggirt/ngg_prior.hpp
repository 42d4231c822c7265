#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nggirt/adaptive_mh.hpp"
#include "nggirt/data_model.hpp"
#include "nggirt/irt_pcm.hpp"
#include "nggirt/longitudinal_model.hpp"
#include "nggirt/rng.hpp"
#include "nggirt/spline_basis.hpp"

namespace nggirt {

struct NggConfig {
  double kappa = 1.0;
  double sigma = 0.75;
  int m_aux = 3;  // auxiliary atoms per allocation draw

  /// Throws std::invalid_argument unless kappa > 0, 0 <= sigma < 1, m_aux >= 1.
  void check() const;
};

/// Cluster allocations with contiguous 0-based labels.
struct Partition {
  std::vector<int> c;
  std::vector<int> sizes;

  int K() const { return static_cast<int>(sizes.size()); }
  int N() const { return static_cast<int>(c.size()); }

  static Partition single_cluster(int N);
  /// Relabels arbitrary integer labels by order of first appearance.
  static Partition from_labels(std::span<const int> labels);

  /// Labels contiguous, sizes consistent with c, no empty cluster.
  bool valid() const;
  bool operator==(const Partition&) const = default;
};

/// One cluster's unique value: spline coefficients and trait means.
struct ClusterAtom {
  Eigen::VectorXd b;       // d
  Eigen::MatrixXd theta0;  // n_p x T_Y
};

using UniqueValues = std::vector<ClusterAtom>;

struct AtomDims {
  int d = 0;
  int n_p = 0;
  int T_Y = 0;
};

/// Draw from the base measure: N(0, I_d) x prod_p N(0, I_{T_Y}).
ClusterAtom draw_from_base(const AtomDims& dims, Rng& rng);

/// log((n_j^{-i} - sigma)) + loglik. Throws std::invalid_argument if the
/// weight is not positive.
double log_urn_weight_existing(int n_j_minus_i, double sigma, double loglik);

/// log(kappa (1 + u)^sigma / m_aux) + loglik for one auxiliary atom.
double log_urn_weight_new(double kappa, double sigma, double u, int m_aux, double loglik);

/// Normalised allocation probabilities over existing clusters followed by
/// auxiliary atoms.
std::vector<double> allocation_probabilities(std::span<const int> sizes_minus_i,
                                             std::span<const double> loglik_existing,
                                             std::span<const double> loglik_aux, const NggConfig& cfg, double u);

/// Log-likelihood of subject i if it were attached to a given atom.
using AtomLogLik = std::function<double(int, const ClusterAtom&)>;

/// One Neal-8 update of c_i conditional on u. Removes i, recycles its atom
/// as the first auxiliary atom when i was a singleton, draws the rest from
/// the base measure, samples the new label and promotes a chosen auxiliary
/// atom to a new cluster. Labels stay contiguous.
void resample_allocation(int i, Partition& partition, UniqueValues& atoms, const NggConfig& cfg, double u,
                         const AtomLogLik& loglik, const AtomDims& dims, Rng& rng);

/// Joint log-likelihood of subject i under an atom: observed Z cells given
/// b plus the trait term prod_p prod_t N(theta_pit | theta0_pt, 1).
/// `resid` holds Z_it - gamma_Z . X_Z_i (NaN where missing).
double subject_atom_loglik(std::span<const double> resid, const Eigen::VectorXd& atom_trajectory,
                           double sigma2_Z, const Traits& traits, int i, const ClusterAtom& atom);

/// Gibbs draw of one cluster's unique value. b* uses only observed Z cells
/// of the members; theta0* ~ N(sum theta / (n + 1), 1 / (n + 1)) per (p, t).
/// With `use_z` false the b* block is drawn from its prior.
ClusterAtom gibbs_unique_values(std::span<const int> members, const Dataset& ds, const LongitudinalParams& params,
                                const SplineBasis& basis, const Traits& traits, Rng& rng, bool use_z = true);

/// Unnormalised log-density of u given K clusters among N subjects:
/// (N-1) log u - kappa/sigma ((1+u)^sigma - 1) - (N - K sigma) log(1+u),
/// with the sigma -> 0 limit kappa log(1+u) for the middle term.
double log_u_density(double u, int N, int K, const NggConfig& cfg);

/// One adaptive random-walk Metropolis step on log u.
double update_u(double u, int N, int K, const NggConfig& cfg, ScalarKernel& kernel, Rng& rng);

/// Exact prior machinery of the NGG random partition: the EPPF weights
/// V(n, k), obtained by one-dimensional quadrature over u.
class NggPriorTable {
 public:
  NggPriorTable(int N, const NggConfig& cfg);

  /// log V(n, k) for 1 <= k <= n <= N.
  double log_v(int n, int k) const;

  /// Sequential-urn draw of a partition of N subjects.
  Partition sample_partition(Rng& rng) const;

  /// Exact distribution of the number of clusters, P(K_N = k) at index k.
  std::vector<double> k_distribution() const;

 private:
  int N_;
  NggConfig cfg_;
  std::vector<double> log_v_;  // (n, k) packed as n * (N + 1) + k
};

/// Draw of u from p(u | K clusters among N) by inverse-CDF on a fine log grid.
double sample_u_given_partition(int N, int K, const NggConfig& cfg, Rng& rng);

}  // namespace nggirt
