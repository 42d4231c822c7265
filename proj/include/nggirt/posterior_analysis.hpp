#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "nggirt/chain_io.hpp"
#include "nggirt/data_model.hpp"

namespace nggirt {

/// P(i, k) = fraction of partitions in which i and k share a cluster.
Eigen::MatrixXd coclustering(const std::vector<std::vector<int>>& partitions);

/// sum_{i<k} (1[c_i = c_k] - 1/2) (P(i, k) - 1/2); larger is better.
double binder_score(std::span<const int> labels, const Eigen::MatrixXd& P);

/// Expected Binder loss with equal costs, sum_{i<k} |1[c_i = c_k] - P(i, k)|.
double binder_loss(std::span<const int> labels, const Eigen::MatrixXd& P);

/// Relabels clusters 0, 1, ... by decreasing size, ties by first member.
std::vector<int> labels_by_size(std::span<const int> labels);

struct BinderResult {
  std::vector<int> labels;  // ordered by decreasing cluster size
  std::vector<int> sizes;
  double loss = 0.0;
  long source_draw = -1;  // index of the first sampled partition equal to the estimate
};

/// Best Binder partition among the sampled ones. Ties go to fewer clusters,
/// then to the earliest draw. Throws std::invalid_argument when empty.
BinderResult binder_estimate(const std::vector<std::vector<int>>& partitions, const Eigen::MatrixXd& P);

/// Best Binder partition over every set partition of N <= 10 subjects,
/// enumerated as restricted growth strings. Same tie-breaks.
BinderResult binder_exhaustive(const Eigen::MatrixXd& P);

/// Hubert-Arabie adjusted Rand index.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Empirical quantile x_(ceil(n p)) of sorted data (type 1).
double quantile_type1(std::span<const double> sorted, double p);

struct ScalarSummary {
  std::string block;
  std::string name;
  double mean = 0.0;
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  bool significant = false;  // central 95% interval excludes zero
};

ScalarSummary summarize_draws(std::string block, std::string name, std::vector<double> draws);

/// One summary per column of every stored block. Throws
/// std::invalid_argument with fewer than two draws.
std::vector<ScalarSummary> summarize_scalars(const ChainOutput& chain);

struct DiscriminationEntry {
  int item = 0;  // 0-based
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  bool highly_discriminatory = false;  // 2.5% quantile above one
};

/// Items by posterior median of alpha, descending; ties keep item order.
std::vector<DiscriminationEntry> discrimination_ranking(const ChainOutput& chain);

/// Posterior-mean category curves at eta = 0. Row layout matches icc.csv:
/// (grid value, item, category, probability), item and category 0-based.
struct IccRow {
  double theta;
  int item;
  int category;
  double probability;
};
std::vector<IccRow> icc_table(const ChainOutput& chain, const Eigen::VectorXd& grid);

/// Per-cluster summaries of observed data at one time point. lo and hi are
/// the 2.5% / 97.5% empirical quantiles across members; NaN when no member
/// is observed.
struct TrajectoryPoint {
  int cluster = 0;     // 0-based
  std::string series;  // "Z" or "domain_<p>" (1-based p)
  double time = 0.0;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int n = 0;
};

/// Mean observed Z per cluster and time, and mean domain sum score per
/// cluster and wave, where a subject's sum score adds its observed answers
/// (1..m coding) over the domain's items and is absent if none is observed.
std::vector<TrajectoryPoint> cluster_trajectories(const Dataset& ds, std::span<const int> labels);

/// Writes coclustering.csv, binder_partition.csv, summaries.csv, icc.csv,
/// trajectories.csv and run_report.json into out_dir. `ds` supplies subject
/// ids and the trajectory data. `inputs` goes into the report verbatim.
void write_summary(const ChainOutput& chain, const Dataset& ds, const std::filesystem::path& out_dir,
                   const nlohmann::json& inputs);

}  // namespace nggirt
