#include "nggirt/cli.hpp"

#include <cstdlib>
#include <exception>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "nggirt/chain_io.hpp"
#include "nggirt/data_model.hpp"
#include "nggirt/hash.hpp"
#include "nggirt/posterior_analysis.hpp"
#include "nggirt/sampler.hpp"
#include "nggirt/simulate.hpp"

namespace nggirt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error("ConfigError: " + what) {}
};

fs::path resolve_output(const fs::path& p) {
  const char* root = std::getenv("NGGIRT_OUTPUT_ROOT");
  if (root && *root && p.is_relative()) return fs::path(root) / p;
  return p;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

const json& require(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing field '" + key + "'");
  return j.at(key);
}

template <typename T>
T require_as(const json& j, const std::string& key) {
  try {
    return require(j, key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + key + "' has the wrong type");
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json hash_files(const fs::path& dir, const std::vector<std::string>& names) {
  json out = json::object();
  for (const auto& name : names) {
    if (fs::exists(dir / name)) out[name] = git_blob_sha1(dir / name);
  }
  return out;
}

const std::vector<std::string>& dataset_files() {
  static const std::vector<std::string> names{"z.csv", "y.csv", "xz.csv", "xy.csv", "meta.json"};
  return names;
}

Dims parse_dims(const json& j) {
  Dims d;
  d.N = require_as<int>(j, "N");
  d.T_Z = require_as<int>(j, "T_Z");
  d.T_Y = require_as<int>(j, "T_Y");
  d.J = require_as<int>(j, "J");
  d.m = require_as<int>(j, "m");
  d.n_s = require_as<int>(j, "n_s");
  d.n_p = require_as<int>(j, "n_p");
  d.q_Z = require_as<int>(j, "q_Z");
  d.q_Y = require_as<int>(j, "q_Y");
  if (d.N < 1 || d.T_Z < 4 || d.T_Y < 1 || d.J < 1 || d.m < 2 || d.m > kMaxCategories || d.n_s < 1 || d.n_p < 1 ||
      d.n_p > d.n_s || d.n_s > d.J || d.q_Z < 0 || d.q_Y < 0) {
    throw ConfigError("inconsistent dims");
  }
  return d;
}

int cmd_simulate(const fs::path& config_path, std::optional<std::uint64_t> seed_override, const fs::path& out_dir,
                 std::ostream& out) {
  const json cfg = config_path.empty() ? json{{"seed", 1}, {"scenario", "default"}} : read_json(config_path);
  const auto seed = seed_override.value_or(require_as<std::uint64_t>(cfg, "seed"));
  const std::string scenario = cfg.value("scenario", "default");
  const KnotPolicy knots{cfg.value("interior_knots", 1)};

  Scenario sc;
  if (scenario == "default") {
    sc = default_scenario(seed);
    sc.z_missing_rate = cfg.value("z_missing_rate", sc.z_missing_rate);
    sc.y_missing_rate = cfg.value("y_missing_rate", sc.y_missing_rate);
  } else if (scenario == "prior") {
    const Dims dims = parse_dims(require(cfg, "dims"));
    const auto sizes = require_as<std::vector<int>>(cfg, "cluster_sizes");
    int total = 0;
    for (int s : sizes) {
      if (s < 1) throw ConfigError("cluster sizes must be positive");
      total += s;
    }
    if (total != dims.N) throw ConfigError("cluster_sizes must sum to N");
    sc.z_missing_rate = require_as<double>(cfg, "z_missing_rate");
    sc.y_missing_rate = require_as<double>(cfg, "y_missing_rate");
    Rng rng(seed);
    sc.design = make_design(dims, rng);
    std::vector<int> labels;
    for (std::size_t k = 0; k < sizes.size(); ++k) labels.insert(labels.end(), sizes[k], static_cast<int>(k));
    std::shuffle(labels.begin(), labels.end(), rng.engine());
    Partition partition;
    partition.c = labels;
    partition.sizes = sizes;
    sc.truth = draw_true_params(sc.design, partition, knots.n_interior + 4, rng);
  } else {
    throw ConfigError("unknown scenario '" + scenario + "' (expected default or prior)");
  }
  for (double rate : {sc.z_missing_rate, sc.y_missing_rate}) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("missing rates must lie in [0, 1)");
  }

  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const Simulation sim = generate(sc.design, sc.truth, sc.z_missing_rate, sc.y_missing_rate, knots, rng);
  save_dataset(sim.data, out_dir);
  write_json(out_dir / "truth.json", truth_to_json(sim));
  const json manifest{{"command", "simulate"},
                      {"code_version", code_version()},
                      {"seed", seed},
                      {"config", cfg},
                      {"config_sha1", sha1_hex(cfg.dump())},
                      {"outputs", hash_files(out_dir, {"z.csv", "y.csv", "xz.csv", "xy.csv", "meta.json", "truth.json"})}};
  write_json(out_dir / "manifest.json", manifest);
  const MissingRates rates = missing_rates(sim.data);
  out << fmt::format("simulated N={} into {} (Z missing {:.4f})\n", sim.data.dims.N, out_dir.string(), rates.z_rate);
  return kExitOk;
}

struct FitOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<long> iters, burnin, thin;
  std::optional<double> kappa, sigma;
};

McmcConfig fit_config(const fs::path& config_path, const FitOverrides& o) {
  McmcConfig cfg;
  if (!config_path.empty()) {
    try {
      from_json(read_json(config_path), cfg);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.iters) cfg.n_iter = *o.iters;
  if (o.burnin) cfg.burn_in = *o.burnin;
  if (o.thin) cfg.thin = *o.thin;
  if (o.kappa) cfg.ngg.kappa = *o.kappa;
  if (o.sigma) cfg.ngg.sigma = *o.sigma;
  try {
    cfg.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

int cmd_fit(const fs::path& data_dir, const McmcConfig& cfg, const fs::path& out_dir, int chains, bool resume,
            std::ostream& out) {
  const Dataset ds = load_dataset(DatasetPaths::in_dir(data_dir));
  const json inputs = hash_files(data_dir, dataset_files());
  std::vector<std::exception_ptr> errors(chains);
  std::vector<std::size_t> draws(chains, 0);
  auto run_one = [&](int c) {
    try {
      McmcConfig chain_cfg = cfg;
      chain_cfg.seed = cfg.seed + static_cast<std::uint64_t>(c);
      const fs::path dir = chains == 1 ? out_dir : out_dir / fmt::format("chain_{}", c + 1);
      fs::create_directories(dir);
      save_dataset(ds, dir / "data");
      RunOptions options;
      options.output_dir = dir;
      options.resume = resume;
      options.provenance = &inputs;
      draws[c] = run_chain(ds, chain_cfg, options).n_draws();
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (chains == 1) {
    run_one(0);
  } else {
    std::vector<std::thread> threads;
    for (int c = 0; c < chains; ++c) threads.emplace_back(run_one, c);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (int c = 0; c < chains; ++c) out << fmt::format("chain {}: {} draws stored\n", c + 1, draws[c]);
  return kExitOk;
}

int cmd_summarize(const fs::path& chain_dir, const fs::path& data_dir, const fs::path& out_dir, std::ostream& out) {
  const ChainOutput chain = read_chain(chain_dir);
  const Dataset ds = load_dataset(DatasetPaths::in_dir(data_dir));
  std::vector<std::string> chain_files{"run_manifest.json", "partition.csv"};
  for (const auto& name : chain_block_names()) chain_files.push_back(name + ".csv");
  json inputs{{"chain_files", hash_files(chain_dir, chain_files)}, {"data_files", hash_files(data_dir, dataset_files())},
              {"code_version", code_version()}};
  write_summary(chain, ds, out_dir, inputs);
  out << fmt::format("summarized {} draws into {}\n", chain.n_draws(), out_dir.string());
  return kExitOk;
}

int cmd_geweke(const fs::path& config_path, const fs::path& report_path, std::ostream& out) {
  GewekeConfig cfg;
  if (!config_path.empty()) {
    try {
      from_json(read_json(config_path), cfg);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  const GewekeReport report = geweke_run(cfg);
  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  write_json(report_path, report_to_json(report, cfg));
  out << fmt::format("geweke {}: {:.1f}% of {} z-scores within {}, max |z| = {:.2f}, {:.1f} s\n",
                     report.passed ? "PASS" : "FAIL", 100.0 * report.fraction_within, report.stats.size(),
                     cfg.z_threshold, report.max_abs_z, report.seconds);
  return report.passed ? kExitOk : kExitTestFailed;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint longitudinal / item-response clustering with an NGG mixture prior", "nggirt"};
  app.require_subcommand(1);

  std::string sim_config, sim_out;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset with known truth");
  simulate->add_option("--config", sim_config, "Simulation config (JSON); default scenario when omitted");
  simulate->add_option("--seed", sim_seed, "Override the config seed");
  simulate->add_option("--out", sim_out, "Output dataset directory")->required();

  std::string fit_data, fit_config_path, fit_out;
  FitOverrides overrides;
  int chains = 1;
  bool resume = false, print_config = false;
  auto* fit = app.add_subcommand("fit", "Run the MCMC sampler on a dataset");
  fit->add_option("--data", fit_data, "Dataset directory");
  fit->add_option("--config", fit_config_path, "Sampler config (JSON)");
  fit->add_option("--out", fit_out, "Chain output directory");
  fit->add_option("--seed", overrides.seed);
  fit->add_option("--iters", overrides.iters, "Post-warm-up sweeps (n_iter)");
  fit->add_option("--burnin", overrides.burnin);
  fit->add_option("--thin", overrides.thin);
  fit->add_option("--kappa", overrides.kappa);
  fit->add_option("--sigma", overrides.sigma);
  fit->add_option("--chains", chains, "Independent chains, seeds seed..seed+k-1")->check(CLI::Range(1, 64));
  fit->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");
  fit->add_flag("--print-config", print_config, "Print the effective configuration and exit");

  std::string sum_chain, sum_data, sum_out;
  auto* summarize = app.add_subcommand("summarize", "Posterior summaries of a stored chain");
  summarize->add_option("--chain", sum_chain, "Chain directory")->required();
  summarize->add_option("--data", sum_data, "Dataset directory (default: <chain>/data)");
  summarize->add_option("--out", sum_out, "Summary output directory")->required();

  std::string gw_config, gw_out;
  auto* geweke = app.add_subcommand("geweke", "Joint-distribution test of the sampler");
  geweke->add_option("--config", gw_config, "Geweke config (JSON)");
  geweke->add_option("--out", gw_out, "Report file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim_config, sim_seed, resolve_output(sim_out), out);
    if (*fit) {
      const McmcConfig cfg = fit_config(fit_config_path, overrides);
      if (print_config) {
        out << json(cfg).dump(2) << '\n';
        return kExitOk;
      }
      if (fit_data.empty() || fit_out.empty()) throw CLI::RequiredError("--data and --out");
      return cmd_fit(fit_data, cfg, resolve_output(fit_out), chains, resume, out);
    }
    if (*summarize) {
      const fs::path data = sum_data.empty() ? fs::path(sum_chain) / "data" : fs::path(sum_data);
      return cmd_summarize(sum_chain, data, resolve_output(sum_out), out);
    }
    if (*geweke) return cmd_geweke(gw_config, resolve_output(gw_out), out);
  } catch (const CLI::Error& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "DataError(" << to_string(e.code()) << "): " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace nggirt
