#include "nggirt/data_model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>
#include <fmt/format.h>

#include "nggirt/csv.hpp"

namespace nggirt {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* to_string(DataErrorCode code) {
  switch (code) {
    case DataErrorCode::kIo: return "IoError";
    case DataErrorCode::kParse: return "ParseError";
    case DataErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case DataErrorCode::kOutOfRangeCategory: return "OutOfRangeCategory";
    case DataErrorCode::kNonIncreasingTimes: return "NonIncreasingTimes";
    case DataErrorCode::kUnknownSubscale: return "UnknownSubscale";
    case DataErrorCode::kUnknownDomain: return "UnknownDomain";
    case DataErrorCode::kInconsistentSubscaleDomain: return "InconsistentSubscaleDomain";
    case DataErrorCode::kMissingCovariate: return "MissingCovariate";
    case DataErrorCode::kFullyMissingSubject: return "FullyMissingSubject";
  }
  return "Unknown";
}

namespace {

std::string with_coords(const std::string& message, const std::vector<int>& where) {
  if (where.empty()) return message;
  std::string out = message + " at (";
  for (std::size_t k = 0; k < where.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(where[k]);
  }
  return out + ")";
}

[[noreturn]] void fail(DataErrorCode code, const std::string& message, std::vector<int> where = {}) {
  throw DataError(code, message, std::move(where));
}

csv::Table read_table(const fs::path& path) {
  try {
    return csv::read(path);
  } catch (const std::runtime_error& e) {
    fail(DataErrorCode::kIo, e.what());
  }
}

json read_meta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(DataErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(DataErrorCode::kParse, path.string() + ": " + e.what());
  }
}

template <typename T>
T meta_field(const json& meta, const std::string& section, const std::string& key) {
  const json* node = &meta;
  if (!section.empty()) {
    if (!meta.contains(section)) fail(DataErrorCode::kParse, "metadata lacks section '" + section + "'");
    node = &meta.at(section);
  }
  if (!node->contains(key)) {
    fail(DataErrorCode::kParse, "metadata lacks field '" + (section.empty() ? key : section + "." + key) + "'");
  }
  try {
    return node->at(key).get<T>();
  } catch (const json::exception& e) {
    fail(DataErrorCode::kParse, "metadata field '" + key + "': " + e.what());
  }
}

void expect_shape(const csv::Table& table, const std::string& name, std::size_t rows, std::size_t cols) {
  if (table.header.size() != cols) {
    fail(DataErrorCode::kDimensionMismatch,
         fmt::format("{}: expected {} columns, header has {}", name, cols, table.header.size()), {1});
  }
  if (table.rows.size() != rows) {
    fail(DataErrorCode::kDimensionMismatch,
         fmt::format("{}: expected {} data rows, found {}", name, rows, table.rows.size()));
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != cols) {
      fail(DataErrorCode::kDimensionMismatch,
           fmt::format("{}: expected {} columns, found {}", name, cols, table.rows[r].size()),
           {static_cast<int>(r) + 1});
    }
  }
}

double numeric_cell(const std::string& cell, const std::string& name, int row, int col) {
  auto v = csv::to_double(cell);
  if (!v || !std::isfinite(*v)) {
    fail(DataErrorCode::kParse, fmt::format("{}: '{}' is not a number", name, cell), {row, col});
  }
  return *v;
}

Eigen::MatrixXd read_covariates(const fs::path& path, const std::string& name, const Dataset& ds,
                                std::size_t q, std::vector<std::string>& names) {
  const auto table = read_table(path);
  expect_shape(table, name, ds.dims.N, q + 1);
  names.assign(table.header.begin() + 1, table.header.end());
  Eigen::MatrixXd X(ds.dims.N, static_cast<Eigen::Index>(q));
  for (int i = 0; i < ds.dims.N; ++i) {
    const auto& row = table.rows[i];
    if (row[0] != ds.subject_ids[i]) {
      fail(DataErrorCode::kDimensionMismatch,
           fmt::format("{}: subject '{}' does not match '{}' in the Z file", name, row[0], ds.subject_ids[i]),
           {i + 1, 1});
    }
    for (std::size_t k = 0; k < q; ++k) {
      if (csv::is_missing(row[k + 1])) {
        fail(DataErrorCode::kMissingCovariate, name + ": covariates must be complete",
             {i + 1, static_cast<int>(k) + 1});
      }
      X(i, static_cast<Eigen::Index>(k)) = numeric_cell(row[k + 1], name, i + 1, static_cast<int>(k) + 1);
    }
  }
  return X;
}

}  // namespace

DataError::DataError(DataErrorCode code, const std::string& message, std::vector<int> where)
    : std::runtime_error(std::string(to_string(code)) + ": " + with_coords(message, where)),
      code_(code),
      where_(std::move(where)) {}

DatasetPaths DatasetPaths::in_dir(const fs::path& dir) {
  return {dir / "z.csv", dir / "y.csv", dir / "xz.csv", dir / "xy.csv", dir / "meta.json"};
}

Dataset load_dataset(const DatasetPaths& paths) {
  return load_dataset(paths.z, paths.y, paths.xz, paths.xy, paths.meta);
}

Dataset load_dataset(const fs::path& z_path, const fs::path& y_path, const fs::path& xz_path,
                     const fs::path& xy_path, const fs::path& meta_path) {
  const json meta = read_meta(meta_path);
  Dataset ds;
  Dims& d = ds.dims;
  d.N = meta_field<int>(meta, "dims", "N");
  d.T_Z = meta_field<int>(meta, "dims", "T_Z");
  d.T_Y = meta_field<int>(meta, "dims", "T_Y");
  d.J = meta_field<int>(meta, "dims", "J");
  d.m = meta_field<int>(meta, "dims", "m");
  d.n_s = meta_field<int>(meta, "dims", "n_s");
  d.n_p = meta_field<int>(meta, "dims", "n_p");
  d.q_Z = meta_field<int>(meta, "dims", "q_Z");
  d.q_Y = meta_field<int>(meta, "dims", "q_Y");
  if (d.N < 1 || d.T_Z < 1 || d.T_Y < 1 || d.J < 1 || d.n_s < 1 || d.n_p < 1 || d.q_Z < 0 || d.q_Y < 0) {
    fail(DataErrorCode::kDimensionMismatch, "metadata dims must be positive");
  }

  const auto z_times = meta_field<std::vector<double>>(meta, "", "z_times");
  if (static_cast<int>(z_times.size()) != d.T_Z) {
    fail(DataErrorCode::kDimensionMismatch,
         fmt::format("z_times has {} entries, T_Z = {}", z_times.size(), d.T_Z));
  }
  ds.z_times = Eigen::Map<const Eigen::VectorXd>(z_times.data(), d.T_Z);
  if (meta.contains("y_times")) {
    ds.y_times = meta_field<std::vector<double>>(meta, "", "y_times");
  } else {
    for (int t = 0; t < d.T_Y; ++t) ds.y_times.push_back(t + 1);
  }

  auto subscale = meta_field<std::vector<int>>(meta, "", "subscale");
  auto domain = meta_field<std::vector<int>>(meta, "", "domain");
  if (static_cast<int>(subscale.size()) != d.J || static_cast<int>(domain.size()) != d.J) {
    fail(DataErrorCode::kDimensionMismatch, "subscale and domain maps must have J entries");
  }
  for (int j = 0; j < d.J; ++j) {
    if (subscale[j] < 1 || subscale[j] > d.n_s) {
      fail(DataErrorCode::kUnknownSubscale, fmt::format("item {} has subscale id {}", j + 1, subscale[j]), {j + 1});
    }
    if (domain[j] < 1 || domain[j] > d.n_p) {
      fail(DataErrorCode::kUnknownDomain, fmt::format("item {} has domain id {}", j + 1, domain[j]), {j + 1});
    }
    ds.subscale.push_back(subscale[j] - 1);
    ds.domain.push_back(domain[j] - 1);
  }

  // Z block
  const auto z_table = read_table(z_path);
  expect_shape(z_table, "Z", d.N, d.T_Z + 1);
  ds.Z.resize(d.N, d.T_Z);
  for (int i = 0; i < d.N; ++i) {
    const auto& row = z_table.rows[i];
    ds.subject_ids.push_back(row[0]);
    for (int t = 0; t < d.T_Z; ++t) {
      const auto& cell = row[t + 1];
      ds.Z(i, t) = csv::is_missing(cell) ? std::numeric_limits<double>::quiet_NaN()
                                         : numeric_cell(cell, "Z", i + 1, t + 1);
    }
  }

  // Y block: rows ordered (wave, subject), columns items.
  const auto y_table = read_table(y_path);
  expect_shape(y_table, "Y", static_cast<std::size_t>(d.T_Y) * d.N, d.J + 2);
  ds.Y.assign(static_cast<std::size_t>(d.T_Y) * d.N * d.J, -1);
  for (int t = 0; t < d.T_Y; ++t) {
    for (int i = 0; i < d.N; ++i) {
      const int r = t * d.N + i;
      const auto& row = y_table.rows[r];
      const auto wave = csv::to_long(row[0]);
      if (!wave || *wave != t + 1 || row[1] != ds.subject_ids[i]) {
        fail(DataErrorCode::kDimensionMismatch,
             fmt::format("Y row must be wave {} subject '{}', found wave '{}' subject '{}'", t + 1,
                         ds.subject_ids[i], row[0], row[1]),
             {r + 1});
      }
      for (int j = 0; j < d.J; ++j) {
        const auto& cell = row[j + 2];
        if (csv::is_missing(cell)) continue;
        const auto v = csv::to_long(cell);
        if (!v) fail(DataErrorCode::kParse, fmt::format("Y: '{}' is not an integer", cell), {t + 1, i + 1, j + 1});
        if (*v < 1 || *v > d.m) {
          fail(DataErrorCode::kOutOfRangeCategory,
               fmt::format("Y: category {} outside 1..{}", *v, d.m), {t + 1, i + 1, j + 1});
        }
        ds.Y[ds.y_index(t, i, j)] = static_cast<int>(*v) - 1;
      }
    }
  }

  ds.X_Z = read_covariates(xz_path, "X_Z", ds, d.q_Z, ds.xz_names);
  ds.X_Y = read_covariates(xy_path, "X_Y", ds, d.q_Y, ds.xy_names);
  for (const auto& [key, names] : {std::pair{"xz_names", &ds.xz_names}, std::pair{"xy_names", &ds.xy_names}}) {
    if (meta.contains(key) && meta_field<std::vector<std::string>>(meta, "", key) != *names) {
      fail(DataErrorCode::kDimensionMismatch, std::string(key) + " in metadata disagree with the covariate header");
    }
  }

  rebuild_mask(ds);
  validate(ds);
  return ds;
}

void rebuild_mask(Dataset& ds) {
  const Dims& d = ds.dims;
  ds.mask.z_missing.assign(static_cast<std::size_t>(d.N) * d.T_Z, 0);
  for (int i = 0; i < d.N; ++i) {
    for (int t = 0; t < d.T_Z; ++t) {
      ds.mask.z_missing[static_cast<std::size_t>(i) * d.T_Z + t] = std::isnan(ds.Z(i, t)) ? 1 : 0;
    }
  }
  ds.mask.y_missing.assign(ds.Y.size(), 0);
  for (std::size_t k = 0; k < ds.Y.size(); ++k) ds.mask.y_missing[k] = ds.Y[k] < 0 ? 1 : 0;
}

void validate(const Dataset& ds) {
  const Dims& d = ds.dims;
  if (d.m < 2 || d.m > kMaxCategories) {
    fail(DataErrorCode::kDimensionMismatch, fmt::format("need 2..{} answer categories", kMaxCategories));
  }
  if (d.T_Z < 4) fail(DataErrorCode::kDimensionMismatch, "a cubic spline needs at least 4 time points");
  if (ds.Z.rows() != d.N || ds.Z.cols() != d.T_Z || ds.z_times.size() != d.T_Z ||
      ds.Y.size() != static_cast<std::size_t>(d.T_Y) * d.N * d.J || ds.X_Z.rows() != d.N ||
      ds.X_Z.cols() != d.q_Z || ds.X_Y.rows() != d.N || ds.X_Y.cols() != d.q_Y ||
      static_cast<int>(ds.subscale.size()) != d.J || static_cast<int>(ds.domain.size()) != d.J ||
      static_cast<int>(ds.y_times.size()) != d.T_Y ||
      ds.mask.z_missing.size() != static_cast<std::size_t>(d.N) * d.T_Z ||
      ds.mask.y_missing.size() != ds.Y.size()) {
    fail(DataErrorCode::kDimensionMismatch, "dataset blocks disagree with declared dims");
  }
  for (int t = 1; t < d.T_Z; ++t) {
    if (!(ds.z_times[t] > ds.z_times[t - 1])) {
      fail(DataErrorCode::kNonIncreasingTimes,
           fmt::format("z_times[{}] = {} does not exceed z_times[{}] = {}", t + 1, ds.z_times[t], t, ds.z_times[t - 1]),
           {t + 1});
    }
  }
  std::map<int, int> subscale_domain;
  for (int j = 0; j < d.J; ++j) {
    if (ds.subscale[j] < 0 || ds.subscale[j] >= d.n_s) {
      fail(DataErrorCode::kUnknownSubscale, "subscale id out of range", {j + 1});
    }
    if (ds.domain[j] < 0 || ds.domain[j] >= d.n_p) {
      fail(DataErrorCode::kUnknownDomain, "domain id out of range", {j + 1});
    }
    auto [it, inserted] = subscale_domain.emplace(ds.subscale[j], ds.domain[j]);
    if (!inserted && it->second != ds.domain[j]) {
      fail(DataErrorCode::kInconsistentSubscaleDomain,
           fmt::format("subscale {} maps to domains {} and {}", ds.subscale[j] + 1, it->second + 1, ds.domain[j] + 1),
           {j + 1});
    }
  }
  for (int i = 0; i < d.N; ++i) {
    for (int k = 0; k < d.q_Z; ++k) {
      if (!std::isfinite(ds.X_Z(i, k))) fail(DataErrorCode::kMissingCovariate, "X_Z must be complete", {i + 1, k + 1});
    }
    for (int k = 0; k < d.q_Y; ++k) {
      if (!std::isfinite(ds.X_Y(i, k))) fail(DataErrorCode::kMissingCovariate, "X_Y must be complete", {i + 1, k + 1});
    }
  }
  for (std::size_t k = 0; k < ds.Y.size(); ++k) {
    const bool missing = ds.Y[k] < 0;
    if (missing != (ds.mask.y_missing[k] != 0)) {
      fail(DataErrorCode::kDimensionMismatch, "Y missing mask disagrees with data");
    }
    if (ds.Y[k] >= d.m) {
      const int j = static_cast<int>(k % d.J);
      const int i = static_cast<int>((k / d.J) % d.N);
      const int t = static_cast<int>(k / (static_cast<std::size_t>(d.J) * d.N));
      fail(DataErrorCode::kOutOfRangeCategory, fmt::format("category {} outside 0..{}", ds.Y[k], d.m - 1),
           {t + 1, i + 1, j + 1});
    }
  }
  for (int i = 0; i < d.N; ++i) {
    bool any_z = false;
    for (int t = 0; t < d.T_Z; ++t) {
      const bool missing = ds.mask.z_missing[static_cast<std::size_t>(i) * d.T_Z + t] != 0;
      if (missing != std::isnan(ds.Z(i, t))) fail(DataErrorCode::kDimensionMismatch, "Z mask disagrees with data", {i + 1, t + 1});
      if (!missing && !std::isfinite(ds.Z(i, t))) fail(DataErrorCode::kParse, "Z must be finite", {i + 1, t + 1});
      any_z = any_z || !missing;
    }
    if (!any_z) fail(DataErrorCode::kFullyMissingSubject, "subject has no observed Z cell", {i + 1});
    bool any_y = false;
    for (int t = 0; t < d.T_Y && !any_y; ++t) {
      for (int j = 0; j < d.J && !any_y; ++j) any_y = ds.y_observed(t, i, j);
    }
    if (!any_y) fail(DataErrorCode::kFullyMissingSubject, "subject has no observed Y cell", {i + 1});
  }
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  validate(ds);
  fs::create_directories(dir);
  const Dims& d = ds.dims;
  const auto paths = DatasetPaths::in_dir(dir);
  auto subject_id = [&](int i) {
    return ds.subject_ids.size() == static_cast<std::size_t>(d.N) ? ds.subject_ids[i] : std::to_string(i + 1);
  };

  {
    std::ofstream out(paths.z);
    std::vector<std::string> header{"subject"};
    for (int t = 0; t < d.T_Z; ++t) header.push_back("t" + std::to_string(t + 1));
    csv::write_row(out, header);
    for (int i = 0; i < d.N; ++i) {
      std::vector<std::string> row{subject_id(i)};
      for (int t = 0; t < d.T_Z; ++t) row.push_back(csv::format(ds.Z(i, t)));
      csv::write_row(out, row);
    }
  }
  {
    std::ofstream out(paths.y);
    std::vector<std::string> header{"wave", "subject"};
    for (int j = 0; j < d.J; ++j) header.push_back("item" + std::to_string(j + 1));
    csv::write_row(out, header);
    for (int t = 0; t < d.T_Y; ++t) {
      for (int i = 0; i < d.N; ++i) {
        std::vector<std::string> row{std::to_string(t + 1), subject_id(i)};
        for (int j = 0; j < d.J; ++j) {
          row.push_back(ds.y_observed(t, i, j) ? std::to_string(ds.y(t, i, j) + 1) : "NA");
        }
        csv::write_row(out, row);
      }
    }
  }
  auto column_names = [](const Eigen::MatrixXd& X, const std::vector<std::string>& names, const char* prefix) {
    std::vector<std::string> out;
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
      out.push_back(static_cast<Eigen::Index>(names.size()) == X.cols() ? names[k] : prefix + std::to_string(k + 1));
    }
    return out;
  };
  const auto xz_names = column_names(ds.X_Z, ds.xz_names, "xz");
  const auto xy_names = column_names(ds.X_Y, ds.xy_names, "xy");
  auto write_covariates = [&](const fs::path& path, const Eigen::MatrixXd& X, const std::vector<std::string>& names) {
    std::ofstream out(path);
    std::vector<std::string> header{"subject"};
    header.insert(header.end(), names.begin(), names.end());
    csv::write_row(out, header);
    for (int i = 0; i < d.N; ++i) {
      std::vector<std::string> row{subject_id(i)};
      for (Eigen::Index k = 0; k < X.cols(); ++k) row.push_back(csv::format(X(i, k)));
      csv::write_row(out, row);
    }
  };
  write_covariates(paths.xz, ds.X_Z, xz_names);
  write_covariates(paths.xy, ds.X_Y, xy_names);

  json meta;
  meta["dims"] = {{"N", d.N}, {"T_Z", d.T_Z}, {"T_Y", d.T_Y}, {"J", d.J}, {"m", d.m},
                  {"n_s", d.n_s}, {"n_p", d.n_p}, {"q_Z", d.q_Z}, {"q_Y", d.q_Y}};
  meta["z_times"] = std::vector<double>(ds.z_times.data(), ds.z_times.data() + ds.z_times.size());
  meta["y_times"] = ds.y_times;
  std::vector<int> subscale, domain;
  for (int j = 0; j < d.J; ++j) {
    subscale.push_back(ds.subscale[j] + 1);
    domain.push_back(ds.domain[j] + 1);
  }
  meta["subscale"] = subscale;
  meta["domain"] = domain;
  meta["xz_names"] = xz_names;
  meta["xy_names"] = xy_names;
  std::ofstream out(paths.meta);
  out << meta.dump(2) << '\n';
}

MissingRates missing_rates(const Dataset& ds) {
  const Dims& d = ds.dims;
  MissingRates rates;
  std::size_t z_missing = 0;
  for (auto flag : ds.mask.z_missing) z_missing += flag;
  rates.z_rate = ds.mask.z_missing.empty() ? 0.0
                                           : static_cast<double>(z_missing) / static_cast<double>(ds.mask.z_missing.size());
  const std::size_t per_wave = static_cast<std::size_t>(d.N) * d.J;
  for (int t = 0; t < d.T_Y; ++t) {
    std::size_t count = 0;
    for (std::size_t k = 0; k < per_wave; ++k) count += ds.mask.y_missing[t * per_wave + k];
    rates.y_rates.push_back(static_cast<double>(count) / static_cast<double>(per_wave));
  }
  return rates;
}

}  // namespace nggirt
