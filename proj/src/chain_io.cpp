#include "nggirt/chain_io.hpp"

#include <cmath>
#include <stdexcept>

#include "nggirt/csv.hpp"

namespace nggirt {

namespace fs = std::filesystem;

std::vector<double> ChainBlock::column(std::size_t col) const {
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = at(r, col);
  return out;
}

void ChainBlock::append(std::span<const double> row) {
  if (row.size() != width()) throw std::logic_error("chain block row width mismatch");
  values.insert(values.end(), row.begin(), row.end());
}

const ChainBlock& ChainOutput::block(const std::string& name) const {
  auto it = blocks.find(name);
  if (it == blocks.end()) throw std::out_of_range("no chain block named " + name);
  return it->second;
}

const std::vector<std::string>& chain_block_names() {
  static const std::vector<std::string> names{"gamma_Z", "sigma2_Z", "alpha", "beta", "mu", "gamma_Y", "u", "K"};
  return names;
}

ChainWriter::ChainWriter(const fs::path& dir, const std::map<std::string, std::vector<std::string>>& headers)
    : dir_(dir) {
  fs::create_directories(dir);
  for (const auto& [name, header] : headers) {
    const fs::path path = dir / (name + ".csv");
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    auto out = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::app);
    if (!*out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    if (fresh) {
      std::vector<std::string> cells{"iteration"};
      cells.insert(cells.end(), header.begin(), header.end());
      csv::write_row(*out, cells);
    }
    files_.emplace(name, std::move(out));
  }
}

void ChainWriter::write(const std::string& file, long iteration, const std::vector<std::string>& cells) {
  auto& out = *files_.at(file);
  out << iteration;
  for (const auto& c : cells) out << ',' << c;
  out << '\n';
  if (!out) throw std::runtime_error("write failed on " + (dir_ / (file + ".csv")).string());
}

void ChainWriter::flush() {
  for (auto& [name, out] : files_) {
    out->flush();
    if (!*out) throw std::runtime_error("flush failed on " + (dir_ / (name + ".csv")).string());
  }
}

std::map<std::string, std::uintmax_t> ChainWriter::sizes() {
  flush();
  std::map<std::string, std::uintmax_t> out;
  for (const auto& [name, stream] : files_) out[name] = fs::file_size(dir_ / (name + ".csv"));
  return out;
}

void truncate_chain_files(const fs::path& dir, const std::map<std::string, std::uintmax_t>& sizes) {
  for (const auto& [name, size] : sizes) fs::resize_file(dir / (name + ".csv"), size);
}

ChainOutput read_chain(const fs::path& dir) {
  if (!fs::exists(dir / "partition.csv")) throw std::runtime_error("EmptyChain: no partition.csv in " + dir.string());
  ChainOutput out;
  const auto partitions = csv::read(dir / "partition.csv");
  for (const auto& row : partitions.rows) {
    out.iterations.push_back(csv::to_long(row.at(0)).value_or(-1));
    std::vector<int> labels;
    for (std::size_t k = 1; k < row.size(); ++k) {
      const auto v = csv::to_long(row[k]);
      if (!v) throw std::runtime_error("corrupt partition.csv");
      labels.push_back(static_cast<int>(*v) - 1);
    }
    out.partitions.push_back(std::move(labels));
  }
  if (out.iterations.empty()) throw std::runtime_error("EmptyChain: " + dir.string() + " holds no draws");
  for (const auto& name : chain_block_names()) {
    const fs::path path = dir / (name + ".csv");
    if (!fs::exists(path)) continue;
    const auto table = csv::read(path);
    ChainBlock block;
    block.columns.assign(table.header.begin() + 1, table.header.end());
    if (table.rows.size() != out.n_draws()) throw std::runtime_error(name + ".csv row count differs from partition.csv");
    for (const auto& row : table.rows) {
      std::vector<double> values;
      for (std::size_t k = 1; k < row.size(); ++k) {
        const auto v = csv::is_missing(row[k]) ? std::optional<double>(std::nan("")) : csv::to_double(row[k]);
        if (!v) throw std::runtime_error("corrupt " + path.string());
        values.push_back(*v);
      }
      block.append(values);
    }
    out.blocks.emplace(name, std::move(block));
  }
  return out;
}

}  // namespace nggirt
