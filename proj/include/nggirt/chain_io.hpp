#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nggirt {

/// Fixed-width table of draws for one parameter block.
struct ChainBlock {
  std::vector<std::string> columns;
  std::vector<double> values;  // row-major, one row per stored draw

  std::size_t width() const { return columns.size(); }
  std::size_t rows() const { return width() ? values.size() / width() : 0; }
  double at(std::size_t row, std::size_t col) const { return values[row * width() + col]; }
  std::vector<double> column(std::size_t col) const;
  void append(std::span<const double> row);
};

/// Thinned post-burn-in draws held in memory. Latent traits and cluster
/// atoms are only persisted to disk (theta.csv, psi_star.csv).
struct ChainOutput {
  std::vector<long> iterations;
  std::vector<std::vector<int>> partitions;  // 0-based labels
  std::map<std::string, ChainBlock> blocks;   // gamma_Z, sigma2_Z, alpha, beta, mu, gamma_Y, u, K

  std::size_t n_draws() const { return iterations.size(); }
  const ChainBlock& block(const std::string& name) const;
};

/// Names of the scalar blocks, in file order.
const std::vector<std::string>& chain_block_names();

/// Appends draws to per-block CSV files in a chain directory. Every file
/// starts with an `iteration` column.
class ChainWriter {
 public:
  ChainWriter() = default;
  /// Opens (creating or appending to) every file; headers are written for
  /// new files only.
  ChainWriter(const std::filesystem::path& dir, const std::map<std::string, std::vector<std::string>>& headers);

  void write(const std::string& file, long iteration, const std::vector<std::string>& cells);
  void flush();
  /// Current byte size of each file, for checkpoint truncation.
  std::map<std::string, std::uintmax_t> sizes();
  bool active() const { return !files_.empty(); }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::unique_ptr<std::ofstream>> files_;
};

/// Truncates each listed file to the recorded size.
void truncate_chain_files(const std::filesystem::path& dir, const std::map<std::string, std::uintmax_t>& sizes);

/// Reads partition.csv and the scalar block files of a chain directory.
/// Throws std::runtime_error("EmptyChain: ...") if no draws are present.
ChainOutput read_chain(const std::filesystem::path& dir);

}  // namespace nggirt
