#pragma once

#include "cellguard/data_matrix.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cellguard {

enum class HeaderMode {
  kAuto,     ///< header iff the first line has a field that is neither numeric nor NA
  kPresent,
  kAbsent,
};

struct CsvOptions {
  std::string na_token = "NA";
  HeaderMode header = HeaderMode::kAuto;
};

struct CsvTable {
  DataMatrix data;
  std::vector<std::string> column_names;  ///< empty when the input had no header
};

/// Parses comma-separated numeric text. LF and CRLF line endings are
/// accepted; fields are trimmed before the NA comparison. Throws ParseError
/// naming the offending row (the 1-based line number) and column.
CsvTable parse_csv(std::string_view text, const CsvOptions& options = {});

CsvTable load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

/// Writes `data` so that parse_csv reproduces its values and mask. Numbers
/// use 17 significant digits.
void write_csv(std::ostream& out, const DataMatrix& data, std::string_view na_token = "NA",
               const std::vector<std::string>& column_names = {});

void save_csv(const std::filesystem::path& path, const DataMatrix& data,
              std::string_view na_token = "NA",
              const std::vector<std::string>& column_names = {});

}  // namespace cellguard
