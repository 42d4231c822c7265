#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nggirt {

/// Upper bound on answer categories; lets the likelihood kernel use stack storage.
inline constexpr int kMaxCategories = 64;

enum class DataErrorCode {
  kIo,
  kParse,
  kDimensionMismatch,
  kOutOfRangeCategory,
  kNonIncreasingTimes,
  kUnknownSubscale,
  kUnknownDomain,
  kInconsistentSubscaleDomain,
  kMissingCovariate,
  kFullyMissingSubject,
};

const char* to_string(DataErrorCode code);

/// Structured ingestion/validation failure. `where` carries the 1-based
/// coordinates of the offending cell (empty when not cell-specific).
class DataError : public std::runtime_error {
 public:
  DataError(DataErrorCode code, const std::string& message, std::vector<int> where = {});

  DataErrorCode code() const { return code_; }
  const std::vector<int>& where() const { return where_; }

 private:
  DataErrorCode code_;
  std::vector<int> where_;
};

struct Dims {
  int N = 0;    // subjects
  int T_Z = 0;  // longitudinal time points
  int T_Y = 0;  // questionnaire waves
  int J = 0;    // items
  int m = 0;    // answer categories
  int n_s = 0;  // subscales
  int n_p = 0;  // domains (one latent trait each)
  int q_Z = 0;
  int q_Y = 0;

  bool operator==(const Dims&) const = default;
};

/// Missingness flags; both stored row-major in the same order as the data.
struct MissingMask {
  std::vector<std::uint8_t> z_missing;  // N x T_Z
  std::vector<std::uint8_t> y_missing;  // T_Y x N x J

  bool operator==(const MissingMask&) const = default;
};

/// Observed data. Categories are 0-based internally (files carry 1..m);
/// subscale and domain ids are 0-based internally (files carry 1-based ids).
struct Dataset {
  Dims dims;
  Eigen::MatrixXd Z;              // N x T_Z, NaN where missing
  Eigen::VectorXd z_times;        // strictly increasing, length T_Z
  std::vector<double> y_times;    // wave labels, length T_Y
  std::vector<int> Y;             // T_Y x N x J, -1 where missing
  Eigen::MatrixXd X_Z;            // N x q_Z
  Eigen::MatrixXd X_Y;            // N x q_Y
  std::vector<int> subscale;      // length J, in [0, n_s)
  std::vector<int> domain;        // length J, in [0, n_p)
  std::vector<std::string> subject_ids;
  std::vector<std::string> xz_names;
  std::vector<std::string> xy_names;
  MissingMask mask;

  std::size_t y_index(int t, int i, int j) const {
    return (static_cast<std::size_t>(t) * dims.N + i) * dims.J + j;
  }
  int y(int t, int i, int j) const { return Y[y_index(t, i, j)]; }
  bool y_observed(int t, int i, int j) const { return mask.y_missing[y_index(t, i, j)] == 0; }
  bool z_observed(int i, int t) const {
    return mask.z_missing[static_cast<std::size_t>(i) * dims.T_Z + t] == 0;
  }
};

/// File locations of one dataset. The directory layout written by
/// save_dataset uses the default names.
struct DatasetPaths {
  std::filesystem::path z;
  std::filesystem::path y;
  std::filesystem::path xz;
  std::filesystem::path xy;
  std::filesystem::path meta;

  static DatasetPaths in_dir(const std::filesystem::path& dir);
};

Dataset load_dataset(const std::filesystem::path& z_path, const std::filesystem::path& y_path,
                     const std::filesystem::path& xz_path, const std::filesystem::path& xy_path,
                     const std::filesystem::path& meta_path);
Dataset load_dataset(const DatasetPaths& paths);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Checks every structural invariant; throws DataError on the first violation.
/// The mask must already agree with the NaN / -1 sentinels in Z and Y.
void validate(const Dataset& ds);

/// Fills mask from the NaN / -1 sentinels in Z and Y.
void rebuild_mask(Dataset& ds);

struct MissingRates {
  double z_rate = 0.0;
  std::vector<double> y_rates;  // one per wave
};

MissingRates missing_rates(const Dataset& ds);

}  // namespace nggirt
