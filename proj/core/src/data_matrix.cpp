#include "cellguard/data_matrix.hpp"

#include "cellguard/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cellguard {

namespace {

void validate(const Eigen::MatrixXd& values, const DataMatrix::Mask& mask) {
  if (values.rows() != mask.rows() || values.cols() != mask.cols()) {
    throw std::invalid_argument("DataMatrix: values and mask dimensions differ");
  }
  if (values.cols() < 1) {
    throw std::invalid_argument("DataMatrix: need at least one column");
  }
  if (values.rows() < 2) {
    throw std::invalid_argument("DataMatrix: need at least two rows");
  }
  for (Index j = 0; j < values.cols(); ++j) {
    for (Index i = 0; i < values.rows(); ++i) {
      if (mask(i, j) && !std::isfinite(values(i, j))) {
        throw std::invalid_argument("DataMatrix: non-finite observed value at row " +
                                    std::to_string(i) + ", column " + std::to_string(j));
      }
    }
  }
}

}  // namespace

DataMatrix::DataMatrix(Eigen::MatrixXd values)
    : DataMatrix(std::move(values), Mask()) {}

DataMatrix::DataMatrix(Eigen::MatrixXd values, Mask mask)
    : values_(std::move(values)), mask_(std::move(mask)) {
  if (mask_.size() == 0) {
    mask_ = Mask::Constant(values_.rows(), values_.cols(), true);
  }
  validate(values_, mask_);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  values_ = mask_.select(values_, nan);
}

Index DataMatrix::observed_in_row(Index i) const { return mask_.row(i).count(); }

Index DataMatrix::observed_in_column(Index j) const { return mask_.col(j).count(); }

bool DataMatrix::complete() const { return mask_.all(); }

std::vector<double> DataMatrix::observed_column(Index j) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows()));
  for (Index i = 0; i < rows(); ++i) {
    if (mask_(i, j)) out.push_back(values_(i, j));
  }
  return out;
}

DataMatrix DataMatrix::with_mask(const Mask& mask) const {
  return DataMatrix(values_, mask);
}

DataMatrix DataMatrix::select_rows(std::span<const Index> rows) const {
  Eigen::MatrixXd v(static_cast<Index>(rows.size()), cols());
  Mask m(static_cast<Index>(rows.size()), cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Index src = rows[r];
    if (src < 0 || src >= this->rows()) {
      throw std::out_of_range("DataMatrix::select_rows: row index out of range");
    }
    v.row(static_cast<Index>(r)) = values_.row(src);
    m.row(static_cast<Index>(r)) = mask_.row(src);
  }
  return DataMatrix(std::move(v), std::move(m));
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sequence");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower =
      *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return lower + 0.5 * (upper - lower);
}

double mad(std::span<const double> values, double center) {
  std::vector<double> dev(values.size());
  std::transform(values.begin(), values.end(), dev.begin(),
                 [center](double v) { return std::abs(v - center); });
  return median(std::move(dev));
}

std::vector<ColumnSummary> column_summaries(const DataMatrix& x) {
  std::vector<ColumnSummary> out(static_cast<std::size_t>(x.cols()));
  for (Index j = 0; j < x.cols(); ++j) {
    const std::vector<double> col = x.observed_column(j);
    if (col.size() < 2) {
      throw DegenerateColumnError(j, "column " + std::to_string(j) +
                                         " has fewer than two observed cells");
    }
    ColumnSummary s;
    s.center = median(col);
    s.scale = kMadConsistency * mad(col, s.center);
    if (!(s.scale > 0.0)) {
      throw DegenerateColumnError(
          j, "column " + std::to_string(j) + " is degenerate (zero median absolute deviation)");
    }
    out[static_cast<std::size_t>(j)] = s;
  }
  return out;
}

}  // namespace cellguard
