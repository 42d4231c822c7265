#include "nggirt/posterior_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "nggirt/csv.hpp"
#include "nggirt/irt_pcm.hpp"
#include "nggirt/ngg_prior.hpp"

namespace nggirt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTieTolerance = 1e-10;

// Keeps the running best candidate under the declared tie-breaks.
struct BestTracker {
  double score = -std::numeric_limits<double>::infinity();
  int clusters = 0;
  std::vector<int> labels;
  long index = -1;

  void offer(std::span<const int> candidate, double s, int k, long idx) {
    const bool better = s > score + kTieTolerance || (std::abs(s - score) <= kTieTolerance && k < clusters);
    if (!better) return;
    score = s;
    clusters = k;
    labels.assign(candidate.begin(), candidate.end());
    index = idx;
  }
};

BinderResult finish(const BestTracker& best, const Eigen::MatrixXd& P) {
  BinderResult r;
  r.labels = labels_by_size(best.labels);
  const int K = r.labels.empty() ? 0 : *std::max_element(r.labels.begin(), r.labels.end()) + 1;
  r.sizes.assign(K, 0);
  for (int c : r.labels) ++r.sizes[c];
  r.loss = binder_loss(r.labels, P);
  r.source_draw = best.index;
  return r;
}

int count_clusters(std::span<const int> labels) {
  std::vector<int> seen(labels.begin(), labels.end());
  std::sort(seen.begin(), seen.end());
  return static_cast<int>(std::unique(seen.begin(), seen.end()) - seen.begin());
}

std::string format_or_na(double x) { return csv::format(x); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

Eigen::MatrixXd coclustering(const std::vector<std::vector<int>>& partitions) {
  if (partitions.empty()) throw std::invalid_argument("co-clustering needs at least one partition");
  const auto N = static_cast<Eigen::Index>(partitions.front().size());
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(N, N);
  for (const auto& c : partitions) {
    if (static_cast<Eigen::Index>(c.size()) != N) throw std::invalid_argument("partitions of different sizes");
    for (Eigen::Index i = 0; i < N; ++i) {
      for (Eigen::Index k = i + 1; k < N; ++k) {
        if (c[i] == c[k]) counts(i, k) += 1.0;
      }
    }
  }
  counts /= static_cast<double>(partitions.size());
  Eigen::MatrixXd P = counts + counts.transpose().eval();
  P.diagonal().setOnes();
  return P;
}

double binder_score(std::span<const int> labels, const Eigen::MatrixXd& P) {
  const auto N = static_cast<Eigen::Index>(labels.size());
  double s = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index k = i + 1; k < N; ++k) {
      s += ((labels[i] == labels[k]) ? 0.5 : -0.5) * (P(i, k) - 0.5);
    }
  }
  return s;
}

double binder_loss(std::span<const int> labels, const Eigen::MatrixXd& P) {
  const auto N = static_cast<Eigen::Index>(labels.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index k = i + 1; k < N; ++k) loss += labels[i] == labels[k] ? 1.0 - P(i, k) : P(i, k);
  }
  return loss;
}

std::vector<int> labels_by_size(std::span<const int> labels) {
  const Partition canon = Partition::from_labels(labels);
  std::vector<int> order(canon.K());
  std::iota(order.begin(), order.end(), 0);
  // Canonical labels are in first-appearance order, so a stable sort keeps
  // the first-member tie-break.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return canon.sizes[a] > canon.sizes[b]; });
  std::vector<int> rank(canon.K());
  for (int r = 0; r < canon.K(); ++r) rank[order[r]] = r;
  std::vector<int> out(canon.c.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rank[canon.c[i]];
  return out;
}

BinderResult binder_estimate(const std::vector<std::vector<int>>& partitions, const Eigen::MatrixXd& P) {
  if (partitions.empty()) throw std::invalid_argument("Binder estimate needs at least one partition");
  std::map<std::vector<int>, long> seen;
  BestTracker best;
  for (std::size_t s = 0; s < partitions.size(); ++s) {
    const Partition canon = Partition::from_labels(partitions[s]);
    if (!seen.emplace(canon.c, static_cast<long>(s)).second) continue;
    best.offer(canon.c, binder_score(canon.c, P), canon.K(), static_cast<long>(s));
  }
  return finish(best, P);
}

BinderResult binder_exhaustive(const Eigen::MatrixXd& P) {
  const int N = static_cast<int>(P.rows());
  if (N < 1 || N > 10) throw std::invalid_argument("exhaustive Binder search supports 1 <= N <= 10");
  std::vector<int> a(N, 0);
  BestTracker best;
  long index = 0;
  std::function<void(int, int)> grow = [&](int i, int top) {
    if (i == N) {
      best.offer(a, binder_score(a, P), top + 1, index++);
      return;
    }
    for (int label = 0; label <= top + 1; ++label) {
      a[i] = label;
      grow(i + 1, std::max(top, label));
    }
  };
  grow(1, 0);
  return finish(best, P);
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw std::invalid_argument("label vectors differ in length");
  const Partition pa = Partition::from_labels(a), pb = Partition::from_labels(b);
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(pa.K(), pb.K());
  for (std::size_t i = 0; i < a.size(); ++i) table(pa.c[i], pb.c[i]) += 1.0;
  auto pairs = [](double n) { return 0.5 * n * (n - 1.0); };
  double index = 0.0, rows = 0.0, cols = 0.0;
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.cols(); ++c) index += pairs(table(r, c));
  }
  for (int s : pa.sizes) rows += pairs(s);
  for (int s : pb.sizes) cols += pairs(s);
  const double total = pairs(static_cast<double>(a.size()));
  const double expected = total > 0.0 ? rows * cols / total : 0.0;
  const double max_index = 0.5 * (rows + cols);
  if (max_index == expected) return 1.0;  // both trivial partitions
  return (index - expected) / (max_index - expected);
}

double quantile_type1(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  const double n = static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(n * p - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

ScalarSummary summarize_draws(std::string block, std::string name, std::vector<double> draws) {
  ScalarSummary s;
  s.block = std::move(block);
  s.name = std::move(name);
  s.mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
  std::sort(draws.begin(), draws.end());
  s.median = quantile_type1(draws, 0.5);
  s.q025 = quantile_type1(draws, 0.025);
  s.q975 = quantile_type1(draws, 0.975);
  s.significant = s.q025 > 0.0 || s.q975 < 0.0;
  return s;
}

std::vector<ScalarSummary> summarize_scalars(const ChainOutput& chain) {
  if (chain.n_draws() < 2) throw std::invalid_argument("summaries need at least two draws");
  std::vector<ScalarSummary> out;
  for (const auto& name : chain_block_names()) {
    auto it = chain.blocks.find(name);
    if (it == chain.blocks.end()) continue;
    const ChainBlock& block = it->second;
    for (std::size_t c = 0; c < block.width(); ++c) out.push_back(summarize_draws(name, block.columns[c], block.column(c)));
  }
  return out;
}

std::vector<DiscriminationEntry> discrimination_ranking(const ChainOutput& chain) {
  const ChainBlock& alpha = chain.block("alpha");
  std::vector<DiscriminationEntry> out;
  for (std::size_t j = 0; j < alpha.width(); ++j) {
    const ScalarSummary s = summarize_draws("alpha", alpha.columns[j], alpha.column(j));
    out.push_back({static_cast<int>(j), s.median, s.q025, s.q975, s.q025 > 1.0});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.median > b.median; });
  return out;
}

std::vector<IccRow> icc_table(const ChainOutput& chain, const Eigen::VectorXd& grid) {
  const ChainBlock& alpha = chain.block("alpha");
  const ChainBlock& beta = chain.block("beta");
  const auto J = static_cast<int>(alpha.width());
  if (J == 0) return {};
  const int m = static_cast<int>(beta.width()) / J + 2;
  const std::size_t S = chain.n_draws();
  const auto G = grid.size();
  std::vector<double> mean(static_cast<std::size_t>(J) * G * m, 0.0);
  std::vector<double> row(m, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (int j = 0; j < J; ++j) {
      for (int l = 2; l < m; ++l) row[l] = beta.at(s, static_cast<std::size_t>(j) * (m - 2) + (l - 2));
      const double a = alpha.at(s, j);
      for (Eigen::Index g = 0; g < G; ++g) {
        const Eigen::VectorXd probs = category_probs(category_logits(grid[g], a, row, 0.0));
        double* dst = &mean[(static_cast<std::size_t>(j) * G + g) * m];
        for (int h = 0; h < m; ++h) dst[h] += probs[h];
      }
    }
  }
  std::vector<IccRow> out;
  out.reserve(mean.size());
  for (Eigen::Index g = 0; g < G; ++g) {
    for (int j = 0; j < J; ++j) {
      for (int h = 0; h < m; ++h) {
        out.push_back({grid[g], j, h, mean[(static_cast<std::size_t>(j) * G + g) * m + h] / static_cast<double>(S)});
      }
    }
  }
  return out;
}

std::vector<TrajectoryPoint> cluster_trajectories(const Dataset& ds, std::span<const int> labels) {
  const Dims& D = ds.dims;
  if (static_cast<int>(labels.size()) != D.N) throw std::invalid_argument("labels do not match the dataset");
  const int K = D.N ? *std::max_element(labels.begin(), labels.end()) + 1 : 0;
  std::vector<TrajectoryPoint> out;
  auto summarize = [&](int k, const std::string& series, double time, std::vector<double> values) {
    TrajectoryPoint pt{k, series, time, std::nan(""), std::nan(""), std::nan(""), static_cast<int>(values.size())};
    if (!values.empty()) {
      pt.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
      std::sort(values.begin(), values.end());
      pt.lo = quantile_type1(values, 0.025);
      pt.hi = quantile_type1(values, 0.975);
    }
    out.push_back(std::move(pt));
  };
  for (int k = 0; k < K; ++k) {
    for (int t = 0; t < D.T_Z; ++t) {
      std::vector<double> values;
      for (int i = 0; i < D.N; ++i) {
        if (labels[i] == k && ds.z_observed(i, t)) values.push_back(ds.Z(i, t));
      }
      summarize(k, "Z", ds.z_times[t], std::move(values));
    }
    for (int p = 0; p < D.n_p; ++p) {
      for (int t = 0; t < D.T_Y; ++t) {
        std::vector<double> values;
        for (int i = 0; i < D.N; ++i) {
          if (labels[i] != k) continue;
          double sum = 0.0;
          int answered = 0;
          for (int j = 0; j < D.J; ++j) {
            if (ds.domain[j] != p || !ds.y_observed(t, i, j)) continue;
            sum += ds.y(t, i, j) + 1;
            ++answered;
          }
          if (answered > 0) values.push_back(sum);
        }
        summarize(k, fmt::format("domain_{}", p + 1), ds.y_times[t], std::move(values));
      }
    }
  }
  return out;
}

void write_summary(const ChainOutput& chain, const Dataset& ds, const fs::path& out_dir, const json& inputs) {
  if (chain.n_draws() == 0) throw std::runtime_error("EmptyChain: no draws to summarize");
  if (static_cast<int>(chain.partitions.front().size()) != ds.dims.N) {
    throw std::runtime_error("chain and dataset disagree on the number of subjects");
  }
  fs::create_directories(out_dir);
  const Dims& D = ds.dims;

  const Eigen::MatrixXd P = coclustering(chain.partitions);
  {
    std::string text = "subject";
    for (int i = 0; i < D.N; ++i) text += "," + ds.subject_ids[i];
    text += '\n';
    for (int i = 0; i < D.N; ++i) {
      text += ds.subject_ids[i];
      for (int k = 0; k < D.N; ++k) text += "," + csv::format(P(i, k));
      text += '\n';
    }
    write_text(out_dir / "coclustering.csv", text);
  }

  const BinderResult binder = binder_estimate(chain.partitions, P);
  {
    std::string text = "subject,cluster\n";
    for (int i = 0; i < D.N; ++i) text += fmt::format("{},{}\n", ds.subject_ids[i], binder.labels[i] + 1);
    write_text(out_dir / "binder_partition.csv", text);
  }

  const auto summaries = summarize_scalars(chain);
  {
    std::string text = "block,name,mean,median,q025,q975,significant\n";
    for (const auto& s : summaries) {
      text += fmt::format("{},{},{},{},{},{},{}\n", s.block, s.name, csv::format(s.mean), csv::format(s.median),
                          csv::format(s.q025), csv::format(s.q975), s.significant ? 1 : 0);
    }
    write_text(out_dir / "summaries.csv", text);
  }

  {
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(81, -4.0, 4.0);
    std::string text = "grid,item,category,probability\n";
    for (const auto& r : icc_table(chain, grid)) {
      text += fmt::format("{},{},{},{}\n", csv::format(r.theta), r.item + 1, r.category + 1, csv::format(r.probability));
    }
    write_text(out_dir / "icc.csv", text);
  }

  {
    std::string text = "cluster,series,time,mean,lo,hi,n\n";
    for (const auto& pt : cluster_trajectories(ds, binder.labels)) {
      text += fmt::format("{},{},{},{},{},{},{}\n", pt.cluster + 1, pt.series, csv::format(pt.time),
                          format_or_na(pt.mean), format_or_na(pt.lo), format_or_na(pt.hi), pt.n);
    }
    write_text(out_dir / "trajectories.csv", text);
  }

  const auto ranking = discrimination_ranking(chain);
  json ranked = json::array();
  for (const auto& e : ranking) {
    ranked.push_back({{"item", e.item + 1},
                      {"median", e.median},
                      {"q025", e.q025},
                      {"q975", e.q975},
                      {"highly_discriminatory", e.highly_discriminatory}});
  }
  auto extract = [&](std::size_t from, std::size_t to) {
    json items = json::array();
    for (std::size_t r = from; r < to; ++r) items.push_back(ranking[r].item + 1);
    return items;
  };
  const std::size_t top = std::min<std::size_t>(5, ranking.size());
  json significant = json::array();
  for (const auto& s : summaries) {
    if ((s.block == "gamma_Z" || s.block == "gamma_Y") && s.significant) significant.push_back(s.name);
  }
  std::map<int, long> k_counts;
  for (const auto& c : chain.partitions) ++k_counts[count_clusters(c)];
  json k_dist = json::object();
  for (const auto& [k, n] : k_counts) k_dist[std::to_string(k)] = static_cast<double>(n) / chain.n_draws();

  const json report{{"draws", chain.n_draws()},
                    {"subjects", D.N},
                    {"posterior_K", k_dist},
                    {"binder", {{"clusters", binder.sizes.size()}, {"sizes", binder.sizes}, {"loss", binder.loss}}},
                    {"discrimination_ranking", ranked},
                    {"top5", extract(0, top)},
                    {"bottom5", extract(ranking.size() - top, ranking.size())},
                    {"significant_covariate_effects", significant},
                    {"outputs",
                     {"coclustering.csv", "binder_partition.csv", "summaries.csv", "icc.csv", "trajectories.csv"}},
                    {"inputs", inputs}};
  write_text(out_dir / "run_report.json", report.dump(1) + "\n");
}

}  // namespace nggirt
