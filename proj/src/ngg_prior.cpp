#include "nggirt/ngg_prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace nggirt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Laplace exponent kappa/sigma ((1+u)^sigma - 1); kappa log(1+u) at sigma = 0.
double laplace_exponent(double u, const NggConfig& cfg) {
  const double l1p = std::log1p(u);
  if (cfg.sigma == 0.0) return cfg.kappa * l1p;
  return cfg.kappa / cfg.sigma * std::expm1(cfg.sigma * l1p);
}

// log of u^n (1+u)^{k sigma - n} exp(-psi(u)) at u = e^x, i.e. the u-integrand
// of V(n, k) including the dx = du / u Jacobian.
double log_u_integrand(double x, int n, int k, const NggConfig& cfg) {
  const double u = std::exp(x);
  const double softplus = x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(u);
  return n * x - (n - k * cfg.sigma) * softplus - laplace_exponent(u, cfg);
}

struct LogGrid {
  double lo = 0.0;
  double step = 0.0;
  std::vector<double> values;  // log integrand on the grid
};

// The integrand is log-concave in x, so a coarse scan brackets everything
// within `drop` nats of the mode; the fine grid then covers that bracket.
LogGrid make_grid(int n, int k, const NggConfig& cfg, int points) {
  constexpr double kLo = -80.0, kHi = 400.0, kCoarse = 0.5, kDrop = 46.0;
  double best = kNegInf;
  double best_x = 0.0;
  for (double x = kLo; x <= kHi; x += kCoarse) {
    const double v = log_u_integrand(x, n, k, cfg);
    if (v > best) {
      best = v;
      best_x = x;
    }
  }
  double lo = best_x, hi = best_x;
  while (lo > kLo && log_u_integrand(lo, n, k, cfg) > best - kDrop) lo -= kCoarse;
  while (hi < kHi && log_u_integrand(hi, n, k, cfg) > best - kDrop) hi += kCoarse;
  LogGrid grid;
  grid.lo = lo;
  grid.step = (hi - lo) / (points - 1);
  grid.values.resize(points);
  for (int g = 0; g < points; ++g) grid.values[g] = log_u_integrand(lo + g * grid.step, n, k, cfg);
  return grid;
}

double log_trapezoid(const LogGrid& grid) {
  const double top = *std::max_element(grid.values.begin(), grid.values.end());
  double total = 0.0;
  const auto last = grid.values.size() - 1;
  for (std::size_t g = 0; g <= last; ++g) {
    const double w = (g == 0 || g == last) ? 0.5 : 1.0;
    total += w * std::exp(grid.values[g] - top);
  }
  return top + std::log(total * grid.step);
}

}  // namespace

void NggConfig::check() const {
  if (!(kappa > 0.0)) throw std::invalid_argument("NGG kappa must be positive");
  if (!(sigma >= 0.0 && sigma < 1.0)) throw std::invalid_argument("NGG sigma must lie in [0, 1)");
  if (m_aux < 1) throw std::invalid_argument("m_aux must be at least 1");
}

Partition Partition::single_cluster(int N) {
  Partition p;
  p.c.assign(N, 0);
  if (N > 0) p.sizes.assign(1, N);
  return p;
}

Partition Partition::from_labels(std::span<const int> labels) {
  Partition p;
  std::vector<std::pair<int, int>> seen;  // (raw label, new label)
  for (int raw : labels) {
    auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& s) { return s.first == raw; });
    int label;
    if (it == seen.end()) {
      label = static_cast<int>(seen.size());
      seen.emplace_back(raw, label);
      p.sizes.push_back(0);
    } else {
      label = it->second;
    }
    p.c.push_back(label);
    ++p.sizes[label];
  }
  return p;
}

bool Partition::valid() const {
  std::vector<int> counts(sizes.size(), 0);
  for (int label : c) {
    if (label < 0 || label >= K()) return false;
    ++counts[label];
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] < 1 || counts[k] != sizes[k]) return false;
  }
  return true;
}

ClusterAtom draw_from_base(const AtomDims& dims, Rng& rng) {
  ClusterAtom atom;
  atom.b = rng.std_normal_vector(dims.d);
  atom.theta0.resize(dims.n_p, dims.T_Y);
  for (int p = 0; p < dims.n_p; ++p) {
    for (int t = 0; t < dims.T_Y; ++t) atom.theta0(p, t) = rng.normal();
  }
  return atom;
}

double log_urn_weight_existing(int n_j_minus_i, double sigma, double loglik) {
  const double w = static_cast<double>(n_j_minus_i) - sigma;
  if (!(w > 0.0)) throw std::invalid_argument("urn weight n_j - sigma must be positive");
  return std::log(w) + loglik;
}

double log_urn_weight_new(double kappa, double sigma, double u, int m_aux, double loglik) {
  return std::log(kappa) + sigma * std::log1p(u) - std::log(static_cast<double>(m_aux)) + loglik;
}

std::vector<double> allocation_probabilities(std::span<const int> sizes_minus_i,
                                             std::span<const double> loglik_existing,
                                             std::span<const double> loglik_aux, const NggConfig& cfg, double u) {
  std::vector<double> lw;
  lw.reserve(sizes_minus_i.size() + loglik_aux.size());
  for (std::size_t j = 0; j < sizes_minus_i.size(); ++j) {
    lw.push_back(log_urn_weight_existing(sizes_minus_i[j], cfg.sigma, loglik_existing[j]));
  }
  for (double ll : loglik_aux) {
    lw.push_back(log_urn_weight_new(cfg.kappa, cfg.sigma, u, static_cast<int>(loglik_aux.size()), ll));
  }
  const double total = log_sum_exp(lw);
  for (double& v : lw) v = std::exp(v - total);
  return lw;
}

void resample_allocation(int i, Partition& partition, UniqueValues& atoms, const NggConfig& cfg, double u,
                         const AtomLogLik& loglik, const AtomDims& dims, Rng& rng) {
  const int old = partition.c[i];
  std::vector<ClusterAtom> aux;
  aux.reserve(cfg.m_aux);
  if (--partition.sizes[old] == 0) {
    aux.push_back(std::move(atoms[old]));
    const int last = partition.K() - 1;
    if (old != last) {
      atoms[old] = std::move(atoms[last]);
      partition.sizes[old] = partition.sizes[last];
      for (int& label : partition.c) {
        if (label == last) label = old;
      }
    }
    atoms.pop_back();
    partition.sizes.pop_back();
  }
  partition.c[i] = -1;
  while (static_cast<int>(aux.size()) < cfg.m_aux) aux.push_back(draw_from_base(dims, rng));

  const int K = partition.K();
  std::vector<double> lw(K + cfg.m_aux);
  for (int j = 0; j < K; ++j) lw[j] = log_urn_weight_existing(partition.sizes[j], cfg.sigma, loglik(i, atoms[j]));
  for (int a = 0; a < cfg.m_aux; ++a) {
    lw[K + a] = log_urn_weight_new(cfg.kappa, cfg.sigma, u, cfg.m_aux, loglik(i, aux[a]));
  }
  const auto choice = static_cast<int>(rng.categorical_log(lw));
  if (choice < K) {
    partition.c[i] = choice;
    ++partition.sizes[choice];
  } else {
    atoms.push_back(std::move(aux[choice - K]));
    partition.sizes.push_back(1);
    partition.c[i] = K;
  }
}

double subject_atom_loglik(std::span<const double> resid, const Eigen::VectorXd& atom_trajectory,
                           double sigma2_Z, const Traits& traits, int i, const ClusterAtom& atom) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  const double z_norm = -0.5 * (kLog2Pi + std::log(sigma2_Z));
  double total = 0.0;
  for (std::size_t t = 0; t < resid.size(); ++t) {
    if (std::isnan(resid[t])) continue;
    const double r = resid[t] - atom_trajectory[static_cast<Eigen::Index>(t)];
    total += z_norm - 0.5 * r * r / sigma2_Z;
  }
  for (int p = 0; p < traits.n_p; ++p) {
    for (int t = 0; t < traits.T_Y; ++t) {
      const double r = traits.at(p, i, t) - atom.theta0(p, t);
      total += -0.5 * (kLog2Pi + r * r);
    }
  }
  return total;
}

ClusterAtom gibbs_unique_values(std::span<const int> members, const Dataset& ds, const LongitudinalParams& params,
                                const SplineBasis& basis, const Traits& traits, Rng& rng, bool use_z) {
  const int d = basis.d;
  ClusterAtom atom;
  Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  if (use_z) {
    const double inv_var = 1.0 / params.sigma2_Z;
    for (int i : members) {
      const double shift = ds.dims.q_Z > 0 ? params.gamma_Z.dot(ds.X_Z.row(i)) : 0.0;
      for (int t = 0; t < ds.dims.T_Z; ++t) {
        if (!ds.z_observed(i, t)) continue;
        const auto col = basis.B.col(t);
        precision.noalias() += inv_var * col * col.transpose();
        rhs.noalias() += (inv_var * (ds.Z(i, t) - shift)) * col;
      }
    }
  }
  atom.b = rng.mvn_from_precision(precision, rhs);

  const double n_plus = static_cast<double>(members.size()) + 1.0;
  const double sd = 1.0 / std::sqrt(n_plus);
  atom.theta0.resize(traits.n_p, traits.T_Y);
  for (int p = 0; p < traits.n_p; ++p) {
    for (int t = 0; t < traits.T_Y; ++t) {
      double sum = 0.0;
      for (int i : members) sum += traits.at(p, i, t);
      atom.theta0(p, t) = rng.normal(sum / n_plus, sd);
    }
  }
  return atom;
}

double log_u_density(double u, int N, int K, const NggConfig& cfg) {
  if (!(u > 0.0)) return kNegInf;
  return (N - 1) * std::log(u) - laplace_exponent(u, cfg) - (N - K * cfg.sigma) * std::log1p(u);
}

double update_u(double u, int N, int K, const NggConfig& cfg, ScalarKernel& kernel, Rng& rng) {
  double current = log_u_density(u, N, K, cfg);
  return mh_scalar_logscale(
      u, current, [&](double v) { return log_u_density(v, N, K, cfg); }, kernel, rng);
}

NggPriorTable::NggPriorTable(int N, const NggConfig& cfg)
    : N_(N), cfg_(cfg), log_v_(static_cast<std::size_t>(N + 2) * (N + 2), kNegInf) {
  cfg.check();
  for (int n = 1; n <= N; ++n) {
    for (int k = 1; k <= n; ++k) {
      const LogGrid grid = make_grid(n, k, cfg, 801);
      log_v_[static_cast<std::size_t>(n) * (N_ + 1) + k] =
          k * std::log(cfg.kappa) - std::lgamma(static_cast<double>(n)) + log_trapezoid(grid);
    }
  }
}

double NggPriorTable::log_v(int n, int k) const {
  if (n < 1 || n > N_ || k < 1 || k > n) throw std::out_of_range("V(n, k) index");
  return log_v_[static_cast<std::size_t>(n) * (N_ + 1) + k];
}

Partition NggPriorTable::sample_partition(Rng& rng) const {
  Partition p;
  if (N_ == 0) return p;
  p.c.push_back(0);
  p.sizes.push_back(1);
  std::vector<double> lw;
  for (int n = 1; n < N_; ++n) {
    const int k = p.K();
    const double base = log_v(n, k);
    lw.assign(k + 1, 0.0);
    for (int j = 0; j < k; ++j) lw[j] = std::log(p.sizes[j] - cfg_.sigma) + log_v(n + 1, k) - base;
    lw[k] = log_v(n + 1, k + 1) - base;
    const auto choice = static_cast<int>(rng.categorical_log(lw));
    if (choice == k) p.sizes.push_back(0);
    p.c.push_back(choice);
    ++p.sizes[choice];
  }
  return p;
}

std::vector<double> NggPriorTable::k_distribution() const {
  std::vector<double> prob(N_ + 1, 0.0);
  if (N_ == 0) return prob;
  prob[1] = 1.0;
  for (int n = 1; n < N_; ++n) {
    std::vector<double> next(N_ + 1, 0.0);
    for (int k = 1; k <= n; ++k) {
      if (prob[k] == 0.0) continue;
      const double base = log_v(n, k);
      next[k] += prob[k] * (n - k * cfg_.sigma) * std::exp(log_v(n + 1, k) - base);
      next[k + 1] += prob[k] * std::exp(log_v(n + 1, k + 1) - base);
    }
    prob = std::move(next);
  }
  return prob;
}

double sample_u_given_partition(int N, int K, const NggConfig& cfg, Rng& rng) {
  const LogGrid grid = make_grid(N, K, cfg, 8001);
  const double top = *std::max_element(grid.values.begin(), grid.values.end());
  const std::size_t points = grid.values.size();
  std::vector<double> cdf(points, 0.0);
  for (std::size_t g = 1; g < points; ++g) {
    cdf[g] = cdf[g - 1] + 0.5 * (std::exp(grid.values[g - 1] - top) + std::exp(grid.values[g] - top));
  }
  const double target = rng.uniform() * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  const std::size_t g = std::clamp<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), 1, points - 1);
  const double frac = (target - cdf[g - 1]) / std::max(cdf[g] - cdf[g - 1], 1e-300);
  const double x = grid.lo + (static_cast<double>(g - 1) + frac) * grid.step;
  return std::exp(x);
}

}  // namespace nggirt
