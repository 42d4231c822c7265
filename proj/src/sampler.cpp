#include "nggirt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "nggirt/csv.hpp"
#include "nggirt/hash.hpp"

namespace nggirt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kInitialThetaSd = 0.5;
constexpr double kInitialAlphaSd = 0.3;
constexpr double kInitialBlockSd = 0.3;
constexpr double kInitialUSd = 0.5;

const char* kCheckpointFile = "checkpoint.json";
const char* kIncompleteMarker = "INCOMPLETE";
const char* kManifestFile = "run_manifest.json";

double eta_of(const Dataset& ds, const ItemParams& items, int j, int i) {
  return ds.dims.q_Y > 0 ? items.gamma_Y.row(j).dot(ds.X_Y.row(i)) : 0.0;
}

void impute_y_cell(const Dataset& ds, ModelState& s, int t, int i, int j, double eta, Rng& rng) {
  const Eigen::VectorXd probs = category_probs(
      category_logits(s.traits.at(ds.domain[j], i, t), s.items.alpha[j], s.items.beta_row(j), eta));
  s.Y_work[ds.y_index(t, i, j)] = static_cast<int>(rng.categorical(std::span<const double>(probs.data(), probs.size())));
}

std::vector<double> to_vector(const Eigen::MatrixXd& m) {
  // Row-major flattening.
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

Eigen::MatrixXd from_vector(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw std::runtime_error("checkpoint matrix size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

}  // namespace

void sync_subject_copies(ModelState& s) {
  for (int i = 0; i < s.partition.N(); ++i) {
    const ClusterAtom& atom = s.atoms[s.partition.c[i]];
    s.lon.b.row(i) = atom.b.transpose();
    for (int p = 0; p < s.traits.n_p; ++p) {
      for (int t = 0; t < s.traits.T_Y; ++t) s.traits.mean_at(p, i, t) = atom.theta0(p, t);
    }
  }
}

void McmcConfig::check() const {
  if (n_iter < 1) throw std::invalid_argument("n_iter must be positive");
  if (burn_in < 0 || burn_in >= n_iter) throw std::invalid_argument("burn_in must lie in [0, n_iter)");
  if (thin < 1) throw std::invalid_argument("thin must be at least 1");
  if (init_burn_in < 0) throw std::invalid_argument("init_burn_in must be non-negative");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be non-negative");
  if (knots.n_interior < 0) throw std::invalid_argument("number of interior knots must be non-negative");
  if (!(sigma2_prior.shape > 0.0 && sigma2_prior.rate > 0.0)) {
    throw std::invalid_argument("sigma2_Z prior parameters must be positive");
  }
  ngg.check();
}

void to_json(json& j, const McmcConfig& cfg) {
  j = json{{"n_iter", cfg.n_iter},
           {"burn_in", cfg.burn_in},
           {"thin", cfg.thin},
           {"init_burn_in", cfg.init_burn_in},
           {"seed", cfg.seed},
           {"kappa", cfg.ngg.kappa},
           {"sigma", cfg.ngg.sigma},
           {"m_aux", cfg.ngg.m_aux},
           {"interior_knots", cfg.knots.n_interior},
           {"sigma2_prior_shape", cfg.sigma2_prior.shape},
           {"sigma2_prior_rate", cfg.sigma2_prior.rate},
           {"checkpoint_every", cfg.checkpoint_every},
           {"store_traits", cfg.store_traits}};
}

void from_json(const json& j, McmcConfig& cfg) {
  if (!j.is_object()) throw std::invalid_argument("configuration must be a JSON object");
  const McmcConfig defaults;
  json known;
  to_json(known, defaults);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown configuration key: " + key);
  }
  try {
    cfg.n_iter = j.value("n_iter", defaults.n_iter);
    cfg.burn_in = j.value("burn_in", defaults.burn_in);
    cfg.thin = j.value("thin", defaults.thin);
    cfg.init_burn_in = j.value("init_burn_in", defaults.init_burn_in);
    cfg.seed = j.value("seed", defaults.seed);
    cfg.ngg.kappa = j.value("kappa", defaults.ngg.kappa);
    cfg.ngg.sigma = j.value("sigma", defaults.ngg.sigma);
    cfg.ngg.m_aux = j.value("m_aux", defaults.ngg.m_aux);
    cfg.knots.n_interior = j.value("interior_knots", defaults.knots.n_interior);
    cfg.sigma2_prior.shape = j.value("sigma2_prior_shape", defaults.sigma2_prior.shape);
    cfg.sigma2_prior.rate = j.value("sigma2_prior_rate", defaults.sigma2_prior.rate);
    cfg.checkpoint_every = j.value("checkpoint_every", defaults.checkpoint_every);
    cfg.store_traits = j.value("store_traits", defaults.store_traits);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad configuration value: ") + e.what());
  }
}

void check_invariants(const ModelState& s, const Dataset& ds, const SplineBasis& basis) {
  const Dims& D = ds.dims;
  auto fail = [](const std::string& what) { throw std::logic_error("invariant violated: " + what); };
  if (s.partition.N() != D.N || !s.partition.valid()) fail("partition bookkeeping");
  if (static_cast<int>(s.atoms.size()) != s.partition.K()) fail("one atom per cluster");
  for (const auto& atom : s.atoms) {
    if (atom.b.size() != basis.d || atom.theta0.rows() != D.n_p || atom.theta0.cols() != D.T_Y) fail("atom shape");
    if (!atom.b.allFinite() || !atom.theta0.allFinite()) fail("finite atoms");
  }
  for (int i = 0; i < D.N; ++i) {
    const ClusterAtom& atom = s.atoms[s.partition.c[i]];
    if (s.lon.b.row(i).transpose() != atom.b) fail("subject spline coefficients equal their atom");
    for (int p = 0; p < D.n_p; ++p) {
      for (int t = 0; t < D.T_Y; ++t) {
        if (s.traits.mean_at(p, i, t) != atom.theta0(p, t)) fail("subject trait means equal their atom");
      }
    }
  }
  if (!(s.lon.sigma2_Z > 0.0) || !std::isfinite(s.lon.sigma2_Z)) fail("sigma2_Z positive");
  if (!(s.u > 0.0) || !std::isfinite(s.u)) fail("u positive");
  if (!s.lon.gamma_Z.allFinite()) fail("finite gamma_Z");
  s.items.check();
  for (double th : s.traits.theta) {
    if (!std::isfinite(th)) fail("finite traits");
  }
  for (int i = 0; i < D.N; ++i) {
    for (int t = 0; t < D.T_Z; ++t) {
      if (!std::isfinite(s.Z_work(i, t))) fail("Z imputed");
      if (ds.z_observed(i, t) && s.Z_work(i, t) != ds.Z(i, t)) fail("observed Z untouched");
    }
  }
  for (std::size_t k = 0; k < s.Y_work.size(); ++k) {
    if (s.Y_work[k] < 0 || s.Y_work[k] >= D.m) fail("Y imputed within range");
    if (ds.mask.y_missing[k] == 0 && s.Y_work[k] != ds.Y[k]) fail("observed Y untouched");
  }
}

ItemParams draw_item_prior(const Dims& dims, std::span<const int> subscale, Rng& rng) {
  ItemParams items;
  items.mu = rng.std_normal_vector(dims.n_s);
  items.alpha.resize(dims.J);
  for (int j = 0; j < dims.J; ++j) items.alpha[j] = std::exp(rng.normal(items.mu[subscale[j]], 1.0));
  items.beta = RowMatrix::Zero(dims.J, dims.m);
  for (int j = 0; j < dims.J; ++j) {
    for (int l = 2; l < dims.m; ++l) items.beta(j, l) = rng.normal();
  }
  items.gamma_Y.resize(dims.J, dims.q_Y);
  for (int j = 0; j < dims.J; ++j) {
    for (int q = 0; q < dims.q_Y; ++q) items.gamma_Y(j, q) = rng.normal();
  }
  return items;
}

ModelState init_state(const Dataset& ds, const SplineBasis& basis, const McmcConfig& cfg, Rng& rng) {
  const Dims& D = ds.dims;
  ModelState s;
  s.lon.gamma_Z = rng.std_normal_vector(D.q_Z);
  s.lon.sigma2_Z = rng.inv_gamma(cfg.sigma2_prior.shape, cfg.sigma2_prior.rate);
  s.items = draw_item_prior(D, ds.subscale, rng);

  s.partition = Partition::single_cluster(D.N);
  s.atoms = {draw_from_base(AtomDims{basis.d, D.n_p, D.T_Y}, rng)};
  s.lon.b.resize(D.N, basis.d);
  s.traits = Traits(D.n_p, D.N, D.T_Y);
  sync_subject_copies(s);
  for (std::size_t k = 0; k < s.traits.theta.size(); ++k) s.traits.theta[k] = rng.normal(s.traits.theta0[k], 1.0);
  s.u = 1.0;

  s.Z_work = ds.Z;
  for (int i = 0; i < D.N; ++i) impute_missing_Z(i, ds, s.lon, basis, s.Z_work, rng);
  s.Y_work = ds.Y;
  for (int t = 0; t < D.T_Y; ++t) {
    for (int i = 0; i < D.N; ++i) {
      for (int j = 0; j < D.J; ++j) {
        if (!ds.y_observed(t, i, j)) impute_y_cell(ds, s, t, i, j, eta_of(ds, s.items, j, i), rng);
      }
    }
  }
  s.iteration = 0;
  return s;
}

Sampler::Sampler(const Dataset& ds, const SplineBasis& basis, const McmcConfig& cfg)
    : ds_(ds), basis_(basis), cfg_(cfg) {
  cfg_.check();
  const Dims& D = ds.dims;
  const int start = static_cast<int>(cfg_.init_burn_in);
  theta_kernels_.assign(static_cast<std::size_t>(D.n_p) * D.N * D.T_Y,
                        ScalarKernel(kTargetAcceptScalar, start, kInitialThetaSd));
  alpha_kernels_.assign(D.J, ScalarKernel(kTargetAcceptScalar, start, kInitialAlphaSd));
  if (D.m > 2) {
    const double target = D.m - 2 == 1 ? kTargetAcceptScalar : kTargetAcceptBlock;
    beta_kernels_.assign(D.J, AdaptiveKernel(D.m - 2, target, start, kInitialBlockSd));
  }
  if (D.q_Y > 0) {
    const double target = D.q_Y == 1 ? kTargetAcceptScalar : kTargetAcceptBlock;
    gamma_Y_kernels_.assign(D.J, AdaptiveKernel(D.q_Y, target, start, kInitialBlockSd));
  }
  u_kernel_ = ScalarKernel(kTargetAcceptScalar, start, kInitialUSd);

  eta_.assign(static_cast<std::size_t>(D.J) * D.N, 0.0);
  refresh_data();
}

void Sampler::refresh_data() {
  const Dims& D = ds_.dims;
  trait_offsets_.assign(static_cast<std::size_t>(D.n_p) * D.N * D.T_Y + 1, 0);
  trait_cells_.clear();
  item_cells_.assign(D.J, {});
  for (int p = 0; p < D.n_p; ++p) {
    for (int i = 0; i < D.N; ++i) {
      for (int t = 0; t < D.T_Y; ++t) {
        for (int j = 0; j < D.J; ++j) {
          if (ds_.domain[j] == p && ds_.y_observed(t, i, j)) trait_cells_.push_back({j, ds_.y(t, i, j)});
        }
        trait_offsets_[(static_cast<std::size_t>(p) * D.N + i) * D.T_Y + t + 1] = trait_cells_.size();
      }
    }
  }
  for (int j = 0; j < D.J; ++j) {
    for (int t = 0; t < D.T_Y; ++t) {
      for (int i = 0; i < D.N; ++i) {
        if (ds_.y_observed(t, i, j)) item_cells_[j].push_back({i, t, ds_.y(t, i, j)});
      }
    }
  }
}

void Sampler::freeze() {
  for (auto& k : theta_kernels_) k.freeze();
  for (auto& k : alpha_kernels_) k.freeze();
  for (auto& k : beta_kernels_) k.freeze();
  for (auto& k : gamma_Y_kernels_) k.freeze();
  u_kernel_.freeze();
  adapting_ = false;
}

void Sampler::sweep(ModelState& s, Rng& rng) {
  if (adapting_ && s.iteration >= cfg_.init_burn_in + cfg_.burn_in) freeze();
  refresh_eta(s);
  impute(s, rng);
  update_longitudinal(s, rng);
  update_traits(s, rng);
  update_alpha(s, rng);
  update_beta(s, rng);
  update_mu(s, rng);
  update_gamma_Y(s, rng);
  update_clusters(s, rng);
  ++s.iteration;
}

void Sampler::refresh_eta(const ModelState& s) {
  const Dims& D = ds_.dims;
  for (int j = 0; j < D.J; ++j) {
    for (int i = 0; i < D.N; ++i) eta_[static_cast<std::size_t>(j) * D.N + i] = eta_of(ds_, s.items, j, i);
  }
}

void Sampler::impute(ModelState& s, Rng& rng) {
  const Dims& D = ds_.dims;
  for (int i = 0; i < D.N; ++i) impute_missing_Z(i, ds_, s.lon, basis_, s.Z_work, rng);
  for (int t = 0; t < D.T_Y; ++t) {
    for (int i = 0; i < D.N; ++i) {
      for (int j = 0; j < D.J; ++j) {
        if (!ds_.y_observed(t, i, j)) impute_y_cell(ds_, s, t, i, j, eta_[static_cast<std::size_t>(j) * D.N + i], rng);
      }
    }
  }
}

void Sampler::update_longitudinal(ModelState& s, Rng& rng) {
  if (cfg_.use_likelihood) {
    s.lon.gamma_Z = gibbs_gamma_Z(ds_, s.lon, basis_, rng);
    VariancePrior prior = cfg_.sigma2_prior;
    prior.shape += cfg_.sigma2_shape_offset;
    s.lon.sigma2_Z = gibbs_sigma2_Z(ds_, s.lon, basis_, rng, prior);
  } else {
    s.lon.gamma_Z = rng.std_normal_vector(ds_.dims.q_Z);
    s.lon.sigma2_Z = rng.inv_gamma(cfg_.sigma2_prior.shape + cfg_.sigma2_shape_offset, cfg_.sigma2_prior.rate);
  }
}

void Sampler::update_traits(ModelState& s, Rng& rng) {
  const Dims& D = ds_.dims;
  const bool use_lik = cfg_.use_likelihood;
  for (int p = 0; p < D.n_p; ++p) {
    for (int i = 0; i < D.N; ++i) {
      for (int t = 0; t < D.T_Y; ++t) {
        const std::size_t k = s.traits.index(p, i, t);
        const double th0 = s.traits.theta0[k];
        const std::size_t begin = trait_offsets_[k], end = trait_offsets_[k + 1];
        auto target = [&](double th) {
          double v = -0.5 * (th - th0) * (th - th0);
          if (!use_lik) return v;
          for (std::size_t c = begin; c < end; ++c) {
            const Cell& cell = trait_cells_[c];
            v += y_loglik_cell(cell.y, th, s.items.alpha[cell.j], s.items.beta_row(cell.j),
                               eta_[static_cast<std::size_t>(cell.j) * D.N + i]);
          }
          return v;
        };
        double current = target(s.traits.theta[k]);
        s.traits.theta[k] = mh_scalar(s.traits.theta[k], current, target, theta_kernels_[k], rng);
      }
    }
  }
}

double Sampler::item_loglik(const ModelState& s, int j, double alpha, std::span<const double> beta_row,
                            std::span<const double> eta) const {
  if (!cfg_.use_likelihood) return 0.0;
  const int p = ds_.domain[j];
  double total = 0.0;
  for (const ItemCell& c : item_cells_[j]) total += y_loglik_cell(c.y, s.traits.at(p, c.i, c.t), alpha, beta_row, eta[c.i]);
  return total;
}

void Sampler::update_alpha(ModelState& s, Rng& rng) {
  const int N = ds_.dims.N;
  for (int j = 0; j < ds_.dims.J; ++j) {
    const double mu = s.items.mu[ds_.subscale[j]];
    const std::span<const double> eta(eta_.data() + static_cast<std::size_t>(j) * N, N);
    // Log-normal prior density in the natural scale.
    auto target = [&](double a) {
      const double la = std::log(a);
      return item_loglik(s, j, a, s.items.beta_row(j), eta) - 0.5 * (la - mu) * (la - mu) - la;
    };
    double current = target(s.items.alpha[j]);
    s.items.alpha[j] = mh_scalar_logscale(s.items.alpha[j], current, target, alpha_kernels_[j], rng);
  }
}

void Sampler::update_beta(ModelState& s, Rng& rng) {
  const int N = ds_.dims.N, m = ds_.dims.m;
  if (m <= 2) return;
  std::vector<double> row(m, 0.0);
  for (int j = 0; j < ds_.dims.J; ++j) {
    const std::span<const double> eta(eta_.data() + static_cast<std::size_t>(j) * N, N);
    auto target = [&](const Eigen::VectorXd& free) {
      for (int l = 2; l < m; ++l) row[l] = free[l - 2];
      return item_loglik(s, j, s.items.alpha[j], row, eta) - 0.5 * free.squaredNorm();
    };
    const Eigen::VectorXd current = s.items.beta.row(j).segment(2, m - 2).transpose();
    const MhResult r = mh_step(current, target(current), target, beta_kernels_[j], rng);
    s.items.beta.row(j).segment(2, m - 2) = r.value.transpose();
  }
}

void Sampler::update_mu(ModelState& s, Rng& rng) {
  s.items.mu = gibbs_mu(s.items.alpha, ds_.subscale, ds_.dims.n_s, rng);
}

void Sampler::update_gamma_Y(ModelState& s, Rng& rng) {
  const int N = ds_.dims.N, q = ds_.dims.q_Y;
  if (q == 0) return;
  std::vector<double> eta(N);
  for (int j = 0; j < ds_.dims.J; ++j) {
    auto target = [&](const Eigen::VectorXd& g) {
      for (int i = 0; i < N; ++i) eta[i] = ds_.X_Y.row(i).dot(g);
      return item_loglik(s, j, s.items.alpha[j], s.items.beta_row(j), eta) - 0.5 * g.squaredNorm();
    };
    const Eigen::VectorXd current = s.items.gamma_Y.row(j).transpose();
    const MhResult r = mh_step(current, target(current), target, gamma_Y_kernels_[j], rng);
    if (r.accepted) {
      s.items.gamma_Y.row(j) = r.value.transpose();
      for (int i = 0; i < N; ++i) eta_[static_cast<std::size_t>(j) * N + i] = eta_of(ds_, s.items, j, i);
    }
  }
}

void Sampler::update_clusters(ModelState& s, Rng& rng) {
  const Dims& D = ds_.dims;
  const bool use_lik = cfg_.use_likelihood;
  std::vector<double> resid(static_cast<std::size_t>(D.N) * D.T_Z, std::nan(""));
  if (use_lik) {
    for (int i = 0; i < D.N; ++i) {
      const double shift = D.q_Z > 0 ? s.lon.gamma_Z.dot(ds_.X_Z.row(i)) : 0.0;
      for (int t = 0; t < D.T_Z; ++t) {
        if (ds_.z_observed(i, t)) resid[static_cast<std::size_t>(i) * D.T_Z + t] = ds_.Z(i, t) - shift;
      }
    }
  }
  Eigen::VectorXd trajectory = Eigen::VectorXd::Zero(D.T_Z);
  const AtomLogLik loglik = [&](int i, const ClusterAtom& atom) {
    if (use_lik) trajectory.noalias() = basis_.B.transpose() * atom.b;
    const std::span<const double> r(resid.data() + static_cast<std::size_t>(i) * D.T_Z, D.T_Z);
    return subject_atom_loglik(r, trajectory, s.lon.sigma2_Z, s.traits, i, atom);
  };
  const AtomDims dims{basis_.d, D.n_p, D.T_Y};
  for (int i = 0; i < D.N; ++i) resample_allocation(i, s.partition, s.atoms, cfg_.ngg, s.u, loglik, dims, rng);

  std::vector<std::vector<int>> members(s.partition.K());
  for (int i = 0; i < D.N; ++i) members[s.partition.c[i]].push_back(i);
  for (int k = 0; k < s.partition.K(); ++k) {
    s.atoms[k] = gibbs_unique_values(members[k], ds_, s.lon, basis_, s.traits, rng, use_lik);
  }
  s.u = update_u(s.u, D.N, s.partition.K(), cfg_.ngg, u_kernel_, rng);
  sync_subject_copies(s);
}

json Sampler::acceptance_summary() const {
  auto mean_rate = [](const auto& kernels) {
    if (kernels.empty()) return 0.0;
    double total = 0.0;
    for (const auto& k : kernels) total += k.acceptance_rate();
    return total / static_cast<double>(kernels.size());
  };
  return json{{"theta", mean_rate(theta_kernels_)},
              {"alpha", mean_rate(alpha_kernels_)},
              {"beta", mean_rate(beta_kernels_)},
              {"gamma_Y", mean_rate(gamma_Y_kernels_)},
              {"u", u_kernel_.acceptance_rate()}};
}

json Sampler::kernels_to_json() const {
  return json{{"adapting", adapting_},      {"theta", theta_kernels_},     {"alpha", alpha_kernels_},
              {"beta", beta_kernels_},      {"gamma_Y", gamma_Y_kernels_}, {"u", u_kernel_}};
}

void Sampler::kernels_from_json(const json& j) {
  adapting_ = j.at("adapting").get<bool>();
  theta_kernels_ = j.at("theta").get<std::vector<ScalarKernel>>();
  alpha_kernels_ = j.at("alpha").get<std::vector<ScalarKernel>>();
  beta_kernels_ = j.at("beta").get<std::vector<AdaptiveKernel>>();
  gamma_Y_kernels_ = j.at("gamma_Y").get<std::vector<AdaptiveKernel>>();
  u_kernel_ = j.at("u").get<ScalarKernel>();
}

json state_to_json(const ModelState& s) {
  json atoms = json::array();
  for (const auto& a : s.atoms) {
    atoms.push_back({{"b", std::vector<double>(a.b.data(), a.b.data() + a.b.size())}, {"theta0", to_vector(a.theta0)}});
  }
  return json{{"iteration", s.iteration},
              {"labels", s.partition.c},
              {"atoms", atoms},
              {"d", s.lon.b.cols()},
              {"n_p", s.traits.n_p},
              {"T_Y", s.traits.T_Y},
              {"gamma_Z", std::vector<double>(s.lon.gamma_Z.data(), s.lon.gamma_Z.data() + s.lon.gamma_Z.size())},
              {"sigma2_Z", s.lon.sigma2_Z},
              {"alpha", std::vector<double>(s.items.alpha.data(), s.items.alpha.data() + s.items.alpha.size())},
              {"beta", to_vector(s.items.beta)},
              {"m", s.items.beta.cols()},
              {"mu", std::vector<double>(s.items.mu.data(), s.items.mu.data() + s.items.mu.size())},
              {"gamma_Y", to_vector(s.items.gamma_Y)},
              {"q_Y", s.items.gamma_Y.cols()},
              {"theta", s.traits.theta},
              {"u", s.u},
              {"Z_work", to_vector(s.Z_work)},
              {"T_Z", s.Z_work.cols()},
              {"Y_work", s.Y_work}};
}

ModelState state_from_json(const json& j) {
  ModelState s;
  const auto labels = j.at("labels").get<std::vector<int>>();
  // Labels are kept as stored: relabelling would reorder the atoms and change
  // the continuation of the chain.
  s.partition.c = labels;
  s.partition.sizes.assign(labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1, 0);
  for (int label : labels) {
    if (label >= 0) ++s.partition.sizes[label];
  }
  if (!s.partition.valid()) throw std::runtime_error("checkpoint partition is not contiguous");
  const int N = s.partition.N();
  const auto d = j.at("d").get<Eigen::Index>();
  const int n_p = j.at("n_p").get<int>(), T_Y = j.at("T_Y").get<int>();
  for (const auto& a : j.at("atoms")) {
    ClusterAtom atom;
    const auto b = a.at("b").get<std::vector<double>>();
    atom.b = from_vector(b, d, 1);
    atom.theta0 = from_vector(a.at("theta0").get<std::vector<double>>(), n_p, T_Y);
    s.atoms.push_back(std::move(atom));
  }
  s.lon.gamma_Z = Eigen::Map<const Eigen::VectorXd>(j.at("gamma_Z").get<std::vector<double>>().data(),
                                                    static_cast<Eigen::Index>(j.at("gamma_Z").size()));
  s.lon.sigma2_Z = j.at("sigma2_Z").get<double>();
  s.lon.b.resize(N, d);
  const auto alpha = j.at("alpha").get<std::vector<double>>();
  const auto J = static_cast<Eigen::Index>(alpha.size());
  s.items.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), J);
  s.items.beta = from_vector(j.at("beta").get<std::vector<double>>(), J, j.at("m").get<Eigen::Index>());
  const auto mu = j.at("mu").get<std::vector<double>>();
  s.items.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  s.items.gamma_Y = from_vector(j.at("gamma_Y").get<std::vector<double>>(), J, j.at("q_Y").get<Eigen::Index>());
  s.traits = Traits(n_p, N, T_Y);
  s.traits.theta = j.at("theta").get<std::vector<double>>();
  if (s.traits.theta.size() != s.traits.theta0.size()) throw std::runtime_error("checkpoint trait size mismatch");
  s.u = j.at("u").get<double>();
  s.Z_work = from_vector(j.at("Z_work").get<std::vector<double>>(), N, j.at("T_Z").get<Eigen::Index>());
  s.Y_work = j.at("Y_work").get<std::vector<int>>();
  s.iteration = j.at("iteration").get<long>();
  sync_subject_copies(s);
  return s;
}

const char* code_version() { return "nggirt 0.1.0"; }

namespace {

// Column names and CSV writing for stored draws.
class DrawRecorder {
 public:
  DrawRecorder(const Dataset& ds, const SplineBasis& basis, const McmcConfig& cfg) : ds_(ds), basis_(basis), cfg_(cfg) {
    const Dims& D = ds.dims;
    auto& cols = columns_;
    for (int q = 0; q < D.q_Z; ++q) cols["gamma_Z"].push_back("gamma_Z_" + ds.xz_names[q]);
    cols["sigma2_Z"] = {"sigma2_Z"};
    for (int j = 0; j < D.J; ++j) cols["alpha"].push_back(fmt::format("alpha_{}", j + 1));
    for (int j = 0; j < D.J; ++j) {
      for (int l = 2; l < D.m; ++l) cols["beta"].push_back(fmt::format("beta_{}_{}", j + 1, l));
    }
    for (int k = 0; k < D.n_s; ++k) cols["mu"].push_back(fmt::format("mu_{}", k + 1));
    for (int j = 0; j < D.J; ++j) {
      for (int q = 0; q < D.q_Y; ++q) cols["gamma_Y"].push_back(fmt::format("gamma_Y_{}_{}", j + 1, ds.xy_names[q]));
    }
    cols["u"] = {"u"};
    cols["K"] = {"K"};
    cols["gamma_Z"];
    cols["beta"];
    cols["gamma_Y"];
  }

  ChainOutput empty_output() const {
    ChainOutput out;
    for (const auto& [name, cols] : columns_) out.blocks[name].columns = cols;
    return out;
  }

  std::map<std::string, std::vector<std::string>> file_headers() const {
    const Dims& D = ds_.dims;
    auto headers = columns_;
    std::vector<std::string> labels;
    for (int i = 0; i < D.N; ++i) labels.push_back(ds_.subject_ids[i]);
    headers["partition"] = labels;
    if (cfg_.store_traits) {
      std::vector<std::string> theta;
      for (int p = 0; p < D.n_p; ++p) {
        for (int i = 0; i < D.N; ++i) {
          for (int t = 0; t < D.T_Y; ++t) theta.push_back(fmt::format("theta_{}_{}_{}", p + 1, i + 1, t + 1));
        }
      }
      headers["theta"] = theta;
      std::vector<std::string> psi{"cluster"};
      for (int k = 0; k < basis_.d; ++k) psi.push_back(fmt::format("b_{}", k + 1));
      for (int p = 0; p < D.n_p; ++p) {
        for (int t = 0; t < D.T_Y; ++t) psi.push_back(fmt::format("theta0_{}_{}", p + 1, t + 1));
      }
      headers["psi_star"] = psi;
    }
    return headers;
  }

  void record(long iteration, const ModelState& s, ChainOutput& out, ChainWriter* writer) const {
    std::map<std::string, std::vector<double>> rows;
    rows["gamma_Z"].assign(s.lon.gamma_Z.data(), s.lon.gamma_Z.data() + s.lon.gamma_Z.size());
    rows["sigma2_Z"] = {s.lon.sigma2_Z};
    rows["alpha"].assign(s.items.alpha.data(), s.items.alpha.data() + s.items.alpha.size());
    auto& beta = rows["beta"];
    for (Eigen::Index j = 0; j < s.items.beta.rows(); ++j) {
      for (Eigen::Index l = 2; l < s.items.beta.cols(); ++l) beta.push_back(s.items.beta(j, l));
    }
    rows["mu"].assign(s.items.mu.data(), s.items.mu.data() + s.items.mu.size());
    rows["gamma_Y"] = to_vector(s.items.gamma_Y);
    rows["u"] = {s.u};
    rows["K"] = {static_cast<double>(s.partition.K())};

    out.iterations.push_back(iteration);
    out.partitions.push_back(s.partition.c);
    for (const auto& [name, row] : rows) out.blocks[name].append(row);
    if (!writer) return;

    auto text = [](const std::vector<double>& v) {
      std::vector<std::string> cells;
      cells.reserve(v.size());
      for (double x : v) cells.push_back(csv::format(x));
      return cells;
    };
    for (const auto& [name, row] : rows) writer->write(name, iteration, text(row));
    std::vector<std::string> labels;
    for (int c : s.partition.c) labels.push_back(std::to_string(c + 1));
    writer->write("partition", iteration, labels);
    if (cfg_.store_traits) {
      writer->write("theta", iteration, text(s.traits.theta));
      for (int k = 0; k < s.partition.K(); ++k) {
        const ClusterAtom& a = s.atoms[k];
        std::vector<double> v(a.b.data(), a.b.data() + a.b.size());
        const auto theta0 = to_vector(a.theta0);
        v.insert(v.end(), theta0.begin(), theta0.end());
        auto cells = text(v);
        cells.insert(cells.begin(), std::to_string(k + 1));
        writer->write("psi_star", iteration, cells);
      }
    }
  }

 private:
  const Dataset& ds_;
  const SplineBasis& basis_;
  const McmcConfig& cfg_;
  std::map<std::string, std::vector<std::string>> columns_;
};

void write_json_atomic(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << j.dump(1) << '\n';
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

ChainOutput run_chain(const Dataset& ds, const McmcConfig& cfg, const RunOptions& options) {
  cfg.check();
  validate(ds);
  const SplineBasis basis = build_basis(ds.z_times, 3, cfg.knots);
  Sampler sampler(ds, basis, cfg);
  const DrawRecorder recorder(ds, basis, cfg);
  Rng rng(cfg.seed);
  const bool disk = !options.output_dir.empty();
  const fs::path& dir = options.output_dir;
  const auto headers = recorder.file_headers();

  ChainOutput out = recorder.empty_output();
  ModelState state;
  bool resumed = false;
  ChainWriter writer;
  if (disk) {
    fs::create_directories(dir);
    if (options.resume && fs::exists(dir / kCheckpointFile)) {
      std::ifstream in(dir / kCheckpointFile);
      const json ck = json::parse(in);
      if (ck.at("config") != json(cfg)) throw std::runtime_error("checkpoint was written with a different configuration");
      truncate_chain_files(dir, ck.at("file_sizes").get<std::map<std::string, std::uintmax_t>>());
      state = state_from_json(ck.at("state"));
      rng.deserialize(ck.at("rng").get<std::string>());
      sampler.kernels_from_json(ck.at("kernels"));
      if (ck.at("draws").get<long>() > 0) out = read_chain(dir);
      resumed = true;
    } else {
      for (const auto& [name, header] : headers) fs::remove(dir / (name + ".csv"));
      fs::remove(dir / kCheckpointFile);
      fs::remove(dir / kManifestFile);
    }
    std::ofstream(dir / kIncompleteMarker) << "run did not finish; resume from checkpoint.json if present\n";
    writer = ChainWriter(dir, headers);
  }
  if (!resumed) state = init_state(ds, basis, cfg, rng);

  const long total = cfg.init_burn_in + cfg.n_iter;
  long swept = 0;
  while (state.iteration < total) {
    if (options.stop_after >= 0 && swept >= options.stop_after) {
      if (disk) writer.flush();
      return out;
    }
    sampler.sweep(state, rng);
    ++swept;
    const long post = state.iteration - cfg.init_burn_in;
    if (post > cfg.burn_in && (post - cfg.burn_in) % cfg.thin == 0) {
      recorder.record(post, state, out, disk ? &writer : nullptr);
    }
    if (disk && cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 && state.iteration < total) {
      const json ck{{"config", cfg},
                    {"state", state_to_json(state)},
                    {"rng", rng.serialize()},
                    {"kernels", sampler.kernels_to_json()},
                    {"file_sizes", writer.sizes()},
                    {"draws", static_cast<long>(out.n_draws())}};
      write_json_atomic(dir / kCheckpointFile, ck);
    }
  }

  if (disk) {
    writer.flush();
    json manifest{{"code_version", code_version()},
                  {"seed", cfg.seed},
                  {"config", cfg},
                  {"config_sha1", sha1_hex(json(cfg).dump())},
                  {"dims",
                   {{"N", ds.dims.N}, {"T_Z", ds.dims.T_Z}, {"T_Y", ds.dims.T_Y}, {"J", ds.dims.J}, {"m", ds.dims.m},
                    {"n_s", ds.dims.n_s}, {"n_p", ds.dims.n_p}, {"q_Z", ds.dims.q_Z}, {"q_Y", ds.dims.q_Y}}},
                  {"spline_dim", basis.d},
                  {"sweeps", state.iteration},
                  {"draws", out.n_draws()},
                  {"acceptance", sampler.acceptance_summary()}};
    if (options.provenance) manifest["inputs"] = *options.provenance;
    write_json_atomic(dir / kManifestFile, manifest);
    fs::remove(dir / kCheckpointFile);
    fs::remove(dir / kIncompleteMarker);
  }
  return out;
}

}  // namespace nggirt
