#include "cellguard/csv.hpp"

#include "cellguard/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace cellguard {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

std::optional<double> parse_number(std::string_view field) {
  if (field.empty()) return std::nullopt;
  if (field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

struct Line {
  std::size_t number;  // 1-based line number in the input
  std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t start = 0;
  std::size_t number = 1;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back({number, line});
    ++number;
    start = nl + 1;
  }
  // Trailing blank lines (a final newline, editor padding) carry no data.
  while (!lines.empty() && trim(lines.back().text).empty()) lines.pop_back();
  return lines;
}

}  // namespace

CsvTable parse_csv(std::string_view text, const CsvOptions& options) {
  const std::vector<Line> lines = split_lines(text);
  if (lines.empty()) throw ParseError("CSV input is empty");

  std::size_t first_data = 0;
  std::vector<std::string> names;
  const auto first_fields = split_fields(lines.front().text);
  bool has_header = options.header == HeaderMode::kPresent;
  if (options.header == HeaderMode::kAuto) {
    for (const auto f : first_fields) {
      if (f != options.na_token && !parse_number(f)) {
        has_header = true;
        break;
      }
    }
  }
  if (has_header) {
    for (const auto f : first_fields) names.emplace_back(f);
    first_data = 1;
  }

  const std::size_t p = first_fields.size();
  const std::size_t n = lines.size() - first_data;
  if (n < 2) {
    throw ParseError("CSV input has " + std::to_string(n) + " data rows; at least 2 are required");
  }

  Eigen::MatrixXd values(static_cast<Index>(n), static_cast<Index>(p));
  DataMatrix::Mask mask(static_cast<Index>(n), static_cast<Index>(p));
  for (std::size_t r = 0; r < n; ++r) {
    const Line& line = lines[first_data + r];
    const auto fields = split_fields(line.text);
    if (fields.size() != p) {
      throw ParseError("ragged row at row " + std::to_string(line.number) + ": expected " +
                       std::to_string(p) + " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < p; ++c) {
      const auto i = static_cast<Index>(r);
      const auto j = static_cast<Index>(c);
      if (fields[c] == options.na_token) {
        mask(i, j) = false;
        values(i, j) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const auto v = parse_number(fields[c]);
      if (!v) {
        throw ParseError("cannot parse '" + std::string(fields[c]) + "' at row " +
                         std::to_string(line.number) + ", column " + std::to_string(c + 1));
      }
      mask(i, j) = true;
      values(i, j) = *v;
    }
  }
  return CsvTable{DataMatrix(std::move(values), std::move(mask)), std::move(names)};
}

CsvTable load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), options);
}

void write_csv(std::ostream& out, const DataMatrix& data, std::string_view na_token,
               const std::vector<std::string>& column_names) {
  if (!column_names.empty()) {
    for (std::size_t j = 0; j < column_names.size(); ++j) {
      if (j) out << ',';
      out << column_names[j];
    }
    out << '\n';
  }
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < data.rows(); ++i) {
    for (Index j = 0; j < data.cols(); ++j) {
      if (j) out << ',';
      if (data.observed(i, j)) {
        out << data(i, j);
      } else {
        out << na_token;
      }
    }
    out << '\n';
  }
  out.precision(old_precision);
}

void save_csv(const std::filesystem::path& path, const DataMatrix& data, std::string_view na_token,
              const std::vector<std::string>& column_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  write_csv(out, data, na_token, column_names);
}

}  // namespace cellguard
