#include "nggirt/simulate.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace nggirt {

using nlohmann::json;

namespace {

double eta_of(const Dataset& ds, const ItemParams& items, int j, int i) {
  return ds.dims.q_Y > 0 ? items.gamma_Y.row(j).dot(ds.X_Y.row(i)) : 0.0;
}

int draw_category(double theta, const ItemParams& items, int j, double eta, Rng& rng) {
  const Eigen::VectorXd probs = category_probs(category_logits(theta, items.alpha[j], items.beta_row(j), eta));
  return static_cast<int>(rng.categorical(std::span<const double>(probs.data(), probs.size())));
}

// Independent cell masks at `rate`; a subject with every cell masked has its
// row drawn again.
std::vector<std::uint8_t> draw_z_mask(const Dims& D, double rate, Rng& rng) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(D.N) * D.T_Z, 0);
  for (int i = 0; i < D.N; ++i) {
    bool any_observed = false;
    while (!any_observed) {
      for (int t = 0; t < D.T_Z; ++t) {
        const bool missing = rng.uniform() < rate;
        mask[static_cast<std::size_t>(i) * D.T_Z + t] = missing ? 1 : 0;
        any_observed = any_observed || !missing;
      }
    }
  }
  return mask;
}

std::vector<std::uint8_t> draw_y_mask(const Dims& D, double rate, Rng& rng) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(D.T_Y) * D.N * D.J, 0);
  auto index = [&](int t, int i, int j) { return (static_cast<std::size_t>(t) * D.N + i) * D.J + j; };
  for (int i = 0; i < D.N; ++i) {
    bool any_observed = false;
    while (!any_observed) {
      for (int t = 0; t < D.T_Y; ++t) {
        for (int j = 0; j < D.J; ++j) {
          const bool missing = rng.uniform() < rate;
          mask[index(t, i, j)] = missing ? 1 : 0;
          any_observed = any_observed || !missing;
        }
      }
    }
  }
  return mask;
}

Dataset dataset_shell(const SimulationDesign& design) {
  Dataset ds;
  ds.dims = design.dims;
  ds.z_times = design.z_times;
  ds.y_times = design.y_times;
  ds.X_Z = design.X_Z;
  ds.X_Y = design.X_Y;
  ds.subscale = design.subscale;
  ds.domain = design.domain;
  ds.xz_names = design.xz_names;
  ds.xy_names = design.xy_names;
  for (int i = 0; i < design.dims.N; ++i) ds.subject_ids.push_back(fmt::format("S{:03d}", i + 1));
  return ds;
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec_json(m.row(r).transpose()));
  return rows;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

SimulationDesign make_design(const Dims& dims, Rng& rng) {
  SimulationDesign d;
  d.dims = dims;
  d.z_times.resize(dims.T_Z);
  for (int t = 0; t < dims.T_Z; ++t) {
    const double frac = dims.T_Z > 1 ? static_cast<double>(t) / (dims.T_Z - 1) : 0.0;
    d.z_times[t] = 6.0 * std::pow(frac, 1.5);
  }
  for (int t = 0; t < dims.T_Y; ++t) d.y_times.push_back(t + 1.0);
  for (int j = 0; j < dims.J; ++j) {
    const int s = std::min(dims.n_s - 1, j * dims.n_s / dims.J);
    d.subscale.push_back(s);
    d.domain.push_back(s % dims.n_p);
  }
  d.X_Z.resize(dims.N, dims.q_Z);
  d.X_Y.resize(dims.N, dims.q_Y);
  for (int i = 0; i < dims.N; ++i) {
    for (int q = 0; q < dims.q_Z; ++q) d.X_Z(i, q) = rng.uniform() < 0.5 ? 1.0 : 0.0;
    for (int q = 0; q < dims.q_Y; ++q) d.X_Y(i, q) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }
  for (int q = 0; q < dims.q_Z; ++q) d.xz_names.push_back(fmt::format("xz{}", q + 1));
  for (int q = 0; q < dims.q_Y; ++q) d.xy_names.push_back(fmt::format("xy{}", q + 1));
  return d;
}

TrueParams draw_true_params(const SimulationDesign& design, const Partition& partition, int spline_dim, Rng& rng) {
  const Dims& D = design.dims;
  TrueParams p;
  p.partition = partition;
  for (int k = 0; k < partition.K(); ++k) p.atoms.push_back(draw_from_base({spline_dim, D.n_p, D.T_Y}, rng));
  p.gamma_Z = rng.std_normal_vector(D.q_Z);
  p.sigma2_Z = rng.inv_gamma(VariancePrior{}.shape, VariancePrior{}.rate);
  p.items = draw_item_prior(D, design.subscale, rng);
  return p;
}

Simulation generate(const SimulationDesign& design, const TrueParams& truth, double z_missing_rate,
                    double y_missing_rate, const KnotPolicy& knots, Rng& rng) {
  const Dims& D = design.dims;
  const SplineBasis basis = build_basis(design.z_times, 3, knots);
  Simulation sim;
  sim.truth = truth;
  if (truth.partition.N() != D.N) throw std::invalid_argument("true partition does not cover N subjects");
  if (sim.truth.atoms.empty()) {
    for (int k = 0; k < truth.partition.K(); ++k) sim.truth.atoms.push_back(draw_from_base({basis.d, D.n_p, D.T_Y}, rng));
  }
  if (static_cast<int>(sim.truth.atoms.size()) != truth.partition.K()) {
    throw std::invalid_argument("one atom per true cluster required");
  }

  sim.b.resize(D.N, basis.d);
  sim.traits = Traits(D.n_p, D.N, D.T_Y);
  for (int i = 0; i < D.N; ++i) {
    const ClusterAtom& atom = sim.truth.atoms[truth.partition.c[i]];
    if (atom.b.size() != basis.d) throw std::invalid_argument("atom spline dimension does not match the basis");
    sim.b.row(i) = atom.b.transpose();
    for (int p = 0; p < D.n_p; ++p) {
      for (int t = 0; t < D.T_Y; ++t) {
        sim.traits.mean_at(p, i, t) = atom.theta0(p, t);
        sim.traits.at(p, i, t) = rng.normal(atom.theta0(p, t), 1.0);
      }
    }
  }

  const double sd = std::sqrt(truth.sigma2_Z);
  sim.Z_full.resize(D.N, D.T_Z);
  for (int i = 0; i < D.N; ++i) {
    const double shift = D.q_Z > 0 ? truth.gamma_Z.dot(design.X_Z.row(i)) : 0.0;
    const Eigen::VectorXd mean = basis.B.transpose() * sim.b.row(i).transpose();
    for (int t = 0; t < D.T_Z; ++t) sim.Z_full(i, t) = mean[t] + shift + sd * rng.normal();
  }

  Dataset ds = dataset_shell(design);
  sim.Y_full.assign(static_cast<std::size_t>(D.T_Y) * D.N * D.J, 0);
  for (int t = 0; t < D.T_Y; ++t) {
    for (int i = 0; i < D.N; ++i) {
      for (int j = 0; j < D.J; ++j) {
        sim.Y_full[ds.y_index(t, i, j)] =
            draw_category(sim.traits.at(design.domain[j], i, t), truth.items, j, eta_of(ds, truth.items, j, i), rng);
      }
    }
  }

  ds.mask.z_missing = draw_z_mask(D, z_missing_rate, rng);
  ds.mask.y_missing = draw_y_mask(D, y_missing_rate, rng);
  ds.Z = sim.Z_full;
  for (int i = 0; i < D.N; ++i) {
    for (int t = 0; t < D.T_Z; ++t) {
      if (!ds.z_observed(i, t)) ds.Z(i, t) = std::nan("");
    }
  }
  ds.Y = sim.Y_full;
  for (std::size_t k = 0; k < ds.Y.size(); ++k) {
    if (ds.mask.y_missing[k]) ds.Y[k] = -1;
  }
  validate(ds);
  sim.data = std::move(ds);
  return sim;
}

Scenario default_scenario(std::uint64_t seed) {
  Rng rng(seed);
  Scenario sc;
  const Dims dims{100, 14, 4, 12, 5, 4, 2, 2, 2};
  sc.design = make_design(dims, rng);

  std::vector<int> labels;
  for (int k = 0; k < 3; ++k) labels.insert(labels.end(), std::array{40, 35, 25}[k], k);
  std::shuffle(labels.begin(), labels.end(), rng.engine());
  // Cluster ids are kept as drawn so that atom k belongs to cluster k.
  sc.truth.partition.c = labels;
  sc.truth.partition.sizes = {40, 35, 25};

  const std::array<std::array<double, 5>, 3> b{{{0.0, 0.5, 1.0, 1.5, 2.0},
                                                {-1.0, -1.0, -1.2, -1.2, -1.0},
                                                {1.5, 1.0, -0.5, 0.0, 0.5}}};
  const std::array<std::array<double, 2>, 3> theta0{{{1.5, -1.0}, {-1.0, 1.5}, {0.0, 0.0}}};
  for (int k = 0; k < 3; ++k) {
    ClusterAtom atom;
    atom.b = Eigen::Map<const Eigen::VectorXd>(b[k].data(), 5);
    atom.theta0.resize(dims.n_p, dims.T_Y);
    for (int p = 0; p < dims.n_p; ++p) atom.theta0.row(p).setConstant(theta0[k][p]);
    sc.truth.atoms.push_back(std::move(atom));
  }
  sc.truth.gamma_Z = Eigen::Vector2d(0.3, -0.2);
  sc.truth.sigma2_Z = 0.25;
  ItemParams& items = sc.truth.items;
  items.mu = Eigen::Vector4d(0.4, 0.2, 0.4, 0.2);
  items.alpha.resize(dims.J);
  items.beta = RowMatrix::Zero(dims.J, dims.m);
  items.gamma_Y.resize(dims.J, dims.q_Y);
  for (int j = 0; j < dims.J; ++j) {
    items.alpha[j] = std::exp(items.mu[sc.design.subscale[j]] + 0.25 * rng.normal());
    for (int l = 2; l < dims.m; ++l) items.beta(j, l) = 0.5 * rng.normal();
    for (int q = 0; q < dims.q_Y; ++q) items.gamma_Y(j, q) = 0.3 * rng.normal();
  }
  return sc;
}

json truth_to_json(const Simulation& sim) {
  std::vector<int> labels;
  for (int c : sim.truth.partition.c) labels.push_back(c + 1);
  json atoms = json::array();
  for (const auto& a : sim.truth.atoms) atoms.push_back({{"b", vec_json(a.b)}, {"theta0", mat_json(a.theta0)}});
  return json{{"partition", labels},
              {"atoms", atoms},
              {"gamma_Z", vec_json(sim.truth.gamma_Z)},
              {"sigma2_Z", sim.truth.sigma2_Z},
              {"alpha", vec_json(sim.truth.items.alpha)},
              {"beta", mat_json(sim.truth.items.beta)},
              {"mu", vec_json(sim.truth.items.mu)},
              {"gamma_Y", mat_json(sim.truth.items.gamma_Y)},
              {"theta", sim.traits.theta}};
}

std::vector<int> read_truth_partition(const std::filesystem::path& truth_json) {
  std::ifstream in(truth_json);
  if (!in) throw std::runtime_error("cannot open " + truth_json.string());
  auto labels = json::parse(in).at("partition").get<std::vector<int>>();
  for (int& c : labels) --c;
  return labels;
}

void to_json(json& j, const GewekeConfig& cfg) {
  const Dims& D = cfg.dims;
  j = json{{"dims",
            {{"N", D.N}, {"T_Z", D.T_Z}, {"T_Y", D.T_Y}, {"J", D.J}, {"m", D.m}, {"n_s", D.n_s}, {"n_p", D.n_p},
             {"q_Z", D.q_Z}, {"q_Y", D.q_Y}}},
           {"n_outer", cfg.n_outer},
           {"warmup", cfg.warmup},
           {"batches", cfg.batches},
           {"missing_rate", cfg.missing_rate},
           {"z_threshold", cfg.z_threshold},
           {"pass_fraction", cfg.pass_fraction},
           {"seed", cfg.seed},
           {"kappa", cfg.mcmc.ngg.kappa},
           {"sigma", cfg.mcmc.ngg.sigma},
           {"sigma2_shape_offset", cfg.mcmc.sigma2_shape_offset}};
}

void from_json(const json& j, GewekeConfig& cfg) {
  if (!j.is_object()) throw std::invalid_argument("Geweke configuration must be a JSON object");
  const GewekeConfig defaults;
  json known;
  to_json(known, defaults);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown Geweke configuration key: " + key);
  }
  try {
    if (j.contains("dims")) {
      const json& d = j.at("dims");
      for (const auto& [key, value] : d.items()) {
        if (!known.at("dims").contains(key)) throw std::invalid_argument("unknown dimension: " + key);
      }
      Dims& D = cfg.dims;
      D.N = d.value("N", D.N);
      D.T_Z = d.value("T_Z", D.T_Z);
      D.T_Y = d.value("T_Y", D.T_Y);
      D.J = d.value("J", D.J);
      D.m = d.value("m", D.m);
      D.n_s = d.value("n_s", D.n_s);
      D.n_p = d.value("n_p", D.n_p);
      D.q_Z = d.value("q_Z", D.q_Z);
      D.q_Y = d.value("q_Y", D.q_Y);
    }
    cfg.n_outer = j.value("n_outer", cfg.n_outer);
    cfg.warmup = j.value("warmup", cfg.warmup);
    cfg.batches = j.value("batches", cfg.batches);
    cfg.missing_rate = j.value("missing_rate", cfg.missing_rate);
    cfg.z_threshold = j.value("z_threshold", cfg.z_threshold);
    cfg.pass_fraction = j.value("pass_fraction", cfg.pass_fraction);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.mcmc.ngg.kappa = j.value("kappa", cfg.mcmc.ngg.kappa);
    cfg.mcmc.ngg.sigma = j.value("sigma", cfg.mcmc.ngg.sigma);
    cfg.mcmc.sigma2_shape_offset = j.value("sigma2_shape_offset", cfg.mcmc.sigma2_shape_offset);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad Geweke configuration value: ") + e.what());
  }
  if (cfg.n_outer < cfg.batches || cfg.batches < 2) throw std::invalid_argument("need n_outer >= batches >= 2");
  if (cfg.warmup < 0) throw std::invalid_argument("warmup must be non-negative");
  cfg.mcmc.ngg.check();
}

GewekeProblem make_geweke_problem(const GewekeConfig& cfg) {
  Rng rng(cfg.seed);
  const SimulationDesign design = make_design(cfg.dims, rng);
  GewekeProblem problem;
  problem.basis = build_basis(design.z_times, 3, cfg.mcmc.knots);
  Dataset& ds = problem.data;
  ds = dataset_shell(design);
  ds.mask.z_missing = draw_z_mask(cfg.dims, cfg.missing_rate, rng);
  ds.mask.y_missing = draw_y_mask(cfg.dims, cfg.missing_rate, rng);
  ds.Z = Eigen::MatrixXd::Zero(cfg.dims.N, cfg.dims.T_Z);
  ds.Y.assign(ds.mask.y_missing.size(), 0);
  for (int i = 0; i < cfg.dims.N; ++i) {
    for (int t = 0; t < cfg.dims.T_Z; ++t) {
      if (!ds.z_observed(i, t)) ds.Z(i, t) = std::nan("");
    }
  }
  for (std::size_t k = 0; k < ds.Y.size(); ++k) {
    if (ds.mask.y_missing[k]) ds.Y[k] = -1;
  }
  validate(ds);
  return problem;
}

ModelState draw_joint_prior(GewekeProblem& problem, const McmcConfig& mcmc, const NggPriorTable& table, Rng& rng) {
  const Dataset& ds = problem.data;
  const Dims& D = ds.dims;
  ModelState s;
  s.partition = table.sample_partition(rng);
  s.u = sample_u_given_partition(D.N, s.partition.K(), mcmc.ngg, rng);
  for (int k = 0; k < s.partition.K(); ++k) s.atoms.push_back(draw_from_base({problem.basis.d, D.n_p, D.T_Y}, rng));
  s.lon.gamma_Z = rng.std_normal_vector(D.q_Z);
  s.lon.sigma2_Z = rng.inv_gamma(mcmc.sigma2_prior.shape, mcmc.sigma2_prior.rate);
  s.lon.b.resize(D.N, problem.basis.d);
  s.items = draw_item_prior(D, ds.subscale, rng);
  s.traits = Traits(D.n_p, D.N, D.T_Y);
  sync_subject_copies(s);
  for (std::size_t k = 0; k < s.traits.theta.size(); ++k) s.traits.theta[k] = rng.normal(s.traits.theta0[k], 1.0);
  s.Z_work = Eigen::MatrixXd::Zero(D.N, D.T_Z);
  s.Y_work.assign(ds.Y.size(), 0);
  // Missing cells first, then the observed ones through regenerate_data.
  const double sd = std::sqrt(s.lon.sigma2_Z);
  for (int i = 0; i < D.N; ++i) {
    const Eigen::VectorXd mean = z_mean(i, s.lon, problem.basis, ds.X_Z);
    for (int t = 0; t < D.T_Z; ++t) {
      if (!ds.z_observed(i, t)) s.Z_work(i, t) = rng.normal(mean[t], sd);
    }
  }
  for (int t = 0; t < D.T_Y; ++t) {
    for (int i = 0; i < D.N; ++i) {
      for (int j = 0; j < D.J; ++j) {
        if (ds.y_observed(t, i, j)) continue;
        s.Y_work[ds.y_index(t, i, j)] = draw_category(s.traits.at(ds.domain[j], i, t), s.items, j,
                                                      eta_of(ds, s.items, j, i), rng);
      }
    }
  }
  regenerate_data(s, problem, rng);
  return s;
}

void regenerate_data(ModelState& s, GewekeProblem& problem, Rng& rng) {
  Dataset& ds = problem.data;
  const Dims& D = ds.dims;
  const double sd = std::sqrt(s.lon.sigma2_Z);
  for (int i = 0; i < D.N; ++i) {
    const Eigen::VectorXd mean = z_mean(i, s.lon, problem.basis, ds.X_Z);
    for (int t = 0; t < D.T_Z; ++t) {
      if (!ds.z_observed(i, t)) continue;
      ds.Z(i, t) = rng.normal(mean[t], sd);
      s.Z_work(i, t) = ds.Z(i, t);
    }
  }
  for (int t = 0; t < D.T_Y; ++t) {
    for (int i = 0; i < D.N; ++i) {
      for (int j = 0; j < D.J; ++j) {
        if (!ds.y_observed(t, i, j)) continue;
        const std::size_t k = ds.y_index(t, i, j);
        ds.Y[k] = draw_category(s.traits.at(ds.domain[j], i, t), s.items, j, eta_of(ds, s.items, j, i), rng);
        s.Y_work[k] = ds.Y[k];
      }
    }
  }
}

std::vector<std::string> geweke_statistic_names(const Dims& D) {
  std::vector<std::string> names;
  for (int q = 0; q < D.q_Z; ++q) names.push_back(fmt::format("gamma_Z_{}", q + 1));
  names.push_back("sigma2_Z");
  for (int j = 0; j < D.J; ++j) names.push_back(fmt::format("log_alpha_{}", j + 1));
  for (int s = 0; s < D.n_s; ++s) names.push_back(fmt::format("mu_{}", s + 1));
  for (int j = 0; j < D.J; ++j) {
    for (int l = 2; l < D.m; ++l) names.push_back(fmt::format("beta_{}_{}", j + 1, l));
  }
  for (int j = 0; j < D.J; ++j) {
    for (int q = 0; q < D.q_Y; ++q) names.push_back(fmt::format("gamma_Y_{}_{}", j + 1, q + 1));
  }
  for (const char* n : {"theta_mean", "theta_sq_mean", "K", "log_u", "b_mean", "b_sq_mean", "theta0_mean",
                        "coclustered_pairs", "z_observed_mean", "y_observed_mean", "z_residual_sq_mean",
                        "y_loglik_mean"}) {
    names.emplace_back(n);
  }
  return names;
}

std::vector<double> geweke_statistics(const ModelState& s, const Dataset& ds, const SplineBasis& basis) {
  const Dims& D = ds.dims;
  std::vector<double> g;
  for (int q = 0; q < D.q_Z; ++q) g.push_back(s.lon.gamma_Z[q]);
  g.push_back(s.lon.sigma2_Z);
  for (int j = 0; j < D.J; ++j) g.push_back(std::log(s.items.alpha[j]));
  for (int k = 0; k < D.n_s; ++k) g.push_back(s.items.mu[k]);
  for (int j = 0; j < D.J; ++j) {
    for (int l = 2; l < D.m; ++l) g.push_back(s.items.beta(j, l));
  }
  for (int j = 0; j < D.J; ++j) {
    for (int q = 0; q < D.q_Y; ++q) g.push_back(s.items.gamma_Y(j, q));
  }
  double th = 0.0, th2 = 0.0;
  for (double v : s.traits.theta) {
    th += v;
    th2 += v * v;
  }
  const auto n_th = static_cast<double>(s.traits.theta.size());
  g.push_back(th / n_th);
  g.push_back(th2 / n_th);
  g.push_back(s.partition.K());
  g.push_back(std::log(s.u));
  g.push_back(s.lon.b.mean());
  g.push_back(s.lon.b.array().square().mean());
  g.push_back(mean_of(s.traits.theta0));
  double same = 0.0;
  for (int i = 0; i < D.N; ++i) {
    for (int k = i + 1; k < D.N; ++k) same += s.partition.c[i] == s.partition.c[k] ? 1.0 : 0.0;
  }
  g.push_back(same / (0.5 * D.N * (D.N - 1)));

  double z_sum = 0.0, r2_sum = 0.0;
  long z_n = 0;
  for (int i = 0; i < D.N; ++i) {
    const Eigen::VectorXd mean = z_mean(i, s.lon, basis, ds.X_Z);
    for (int t = 0; t < D.T_Z; ++t) {
      if (!ds.z_observed(i, t)) continue;
      z_sum += ds.Z(i, t);
      r2_sum += (ds.Z(i, t) - mean[t]) * (ds.Z(i, t) - mean[t]);
      ++z_n;
    }
  }
  double y_sum = 0.0, ll_sum = 0.0;
  long y_n = 0;
  for (int t = 0; t < D.T_Y; ++t) {
    for (int i = 0; i < D.N; ++i) {
      for (int j = 0; j < D.J; ++j) {
        if (!ds.y_observed(t, i, j)) continue;
        y_sum += ds.y(t, i, j);
        ll_sum += y_loglik_cell(ds.y(t, i, j), s.traits.at(ds.domain[j], i, t), s.items, j, eta_of(ds, s.items, j, i));
        ++y_n;
      }
    }
  }
  g.push_back(z_sum / z_n);
  g.push_back(y_sum / y_n);
  g.push_back(r2_sum / z_n);
  g.push_back(ll_sum / y_n);
  return g;
}

std::vector<std::vector<double>> successive_arm(GewekeProblem& problem, ModelState& state, Sampler& sampler, long n,
                                                Rng& rng) {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  out.push_back(geweke_statistics(state, problem.data, problem.basis));
  for (long r = 0; r < n; ++r) {
    sampler.sweep(state, rng);
    regenerate_data(state, problem, rng);
    sampler.refresh_data();
    out.push_back(geweke_statistics(state, problem.data, problem.basis));
  }
  return out;
}

GewekeReport geweke_run(const GewekeConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  GewekeProblem problem = make_geweke_problem(cfg);
  const NggPriorTable table(cfg.dims.N, cfg.mcmc.ngg);

  Rng marginal_rng(cfg.seed + 1);
  std::vector<std::vector<double>> marginal;
  marginal.reserve(cfg.n_outer);
  ModelState start;
  Dataset start_data;
  for (long r = 0; r < cfg.n_outer; ++r) {
    ModelState s = draw_joint_prior(problem, cfg.mcmc, table, marginal_rng);
    marginal.push_back(geweke_statistics(s, problem.data, problem.basis));
    if (r == 0) {
      start = std::move(s);
      start_data = problem.data;
    }
  }

  problem.data = start_data;
  McmcConfig mc = cfg.mcmc;
  mc.init_burn_in = std::min<long>(100, cfg.warmup);
  mc.burn_in = cfg.warmup - mc.init_burn_in;
  mc.n_iter = mc.burn_in + 1;
  mc.checkpoint_every = 0;
  Sampler sampler(problem.data, problem.basis, mc);
  Rng successive_rng(cfg.seed + 2);
  successive_arm(problem, start, sampler, cfg.warmup, successive_rng);
  auto successive = successive_arm(problem, start, sampler, cfg.n_outer - 1, successive_rng);

  const auto names = geweke_statistic_names(cfg.dims);
  GewekeReport report;
  const std::size_t n = marginal.size();
  const std::size_t batch = n / static_cast<std::size_t>(cfg.batches);
  int within = 0;
  for (std::size_t k = 0; k < names.size(); ++k) {
    for (int moment = 1; moment <= 2; ++moment) {
      auto value = [&](const std::vector<double>& row) { return moment == 1 ? row[k] : row[k] * row[k]; };
      double m_mean = 0.0, m_sq = 0.0;
      for (const auto& row : marginal) {
        m_mean += value(row);
        m_sq += value(row) * value(row);
      }
      m_mean /= n;
      const double m_var = std::max(0.0, m_sq / n - m_mean * m_mean) * n / (n - 1.0);

      std::vector<double> batch_means(cfg.batches, 0.0);
      for (int bidx = 0; bidx < cfg.batches; ++bidx) {
        for (std::size_t r = bidx * batch; r < (bidx + 1) * batch; ++r) batch_means[bidx] += value(successive[r]);
        batch_means[bidx] /= static_cast<double>(batch);
      }
      const double s_mean = mean_of(batch_means);
      double s_var = 0.0;
      for (double bm : batch_means) s_var += (bm - s_mean) * (bm - s_mean);
      s_var /= (cfg.batches - 1.0);

      GewekeStat st{names[k], moment, m_mean, std::sqrt(m_var / n), s_mean, std::sqrt(s_var / cfg.batches), 0.0};
      const double se = std::hypot(st.marginal_se, st.successive_se);
      const double diff = st.successive_mean - st.marginal_mean;
      st.z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff));
      if (std::abs(st.z) < cfg.z_threshold) ++within;
      report.max_abs_z = std::max(report.max_abs_z, std::abs(st.z));
      report.stats.push_back(std::move(st));
    }
  }
  report.fraction_within = static_cast<double>(within) / static_cast<double>(report.stats.size());
  report.passed = report.fraction_within >= cfg.pass_fraction;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

json report_to_json(const GewekeReport& report, const GewekeConfig& cfg) {
  json stats = json::array();
  for (const auto& s : report.stats) {
    stats.push_back({{"name", s.name},
                     {"moment", s.moment},
                     {"marginal_mean", s.marginal_mean},
                     {"marginal_se", s.marginal_se},
                     {"successive_mean", s.successive_mean},
                     {"successive_se", s.successive_se},
                     {"z", s.z}});
  }
  return json{{"config", cfg},
              {"result", report.passed ? "PASS" : "FAIL"},
              {"fraction_within", report.fraction_within},
              {"max_abs_z", report.max_abs_z},
              {"seconds", report.seconds},
              {"statistics", stats}};
}

}  // namespace nggirt
