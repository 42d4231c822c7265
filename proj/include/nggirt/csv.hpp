#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace nggirt::csv {

/// A comma-separated table with one header row. Cells are kept as text;
/// numeric conversion happens at the call site so errors can carry
/// coordinates.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Throws std::runtime_error if the file cannot be opened.
Table read(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view line);

/// Empty cells and the literal NA are missing.
bool is_missing(std::string_view cell);

std::optional<double> to_double(std::string_view cell);
std::optional<long> to_long(std::string_view cell);

/// Shortest round-trip text for a double; "NA" for NaN.
std::string format(double x);

void write_row(std::ostream& out, const std::vector<std::string>& cells);

}  // namespace nggirt::csv
