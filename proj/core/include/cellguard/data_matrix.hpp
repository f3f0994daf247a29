#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace cellguard {

using Index = Eigen::Index;

/// n x p table of measurements with an aligned observation mask.
///
/// Cells whose mask entry is false hold NaN, so a computation that reads an
/// unobserved cell by accident poisons its result instead of silently using a
/// stale value. Instances are immutable; the "modifying" members return new
/// matrices.
class DataMatrix {
 public:
  using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

  /// All cells observed. Throws std::invalid_argument on n < 2, p < 1 or
  /// non-finite values.
  explicit DataMatrix(Eigen::MatrixXd values);

  /// Values at masked cells are ignored. Observed cells must be finite.
  DataMatrix(Eigen::MatrixXd values, Mask mask);

  Index rows() const noexcept { return values_.rows(); }
  Index cols() const noexcept { return values_.cols(); }

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const Mask& mask() const noexcept { return mask_; }

  bool observed(Index i, Index j) const { return mask_(i, j); }
  double operator()(Index i, Index j) const { return values_(i, j); }

  /// Number of observed cells in row i (the row's p_i).
  Index observed_in_row(Index i) const;
  Index observed_in_column(Index j) const;
  bool complete() const;

  /// Observed values of column j in row order.
  std::vector<double> observed_column(Index j) const;

  /// Same values, new mask. Cells hidden by `mask` become NaN; cells it
  /// exposes must already hold finite values.
  DataMatrix with_mask(const Mask& mask) const;

  /// Rows `rows` in the given order.
  DataMatrix select_rows(std::span<const Index> rows) const;

 private:
  Eigen::MatrixXd values_;
  Mask mask_;
};

/// Robust per-column location and dispersion.
struct ColumnSummary {
  double center = 0.0;
  double scale = 0.0;
};

/// Normal-consistency factor applied to the median absolute deviation.
inline constexpr double kMadConsistency = 1.4826;

/// Median; an even count gives the midpoint of the two central values.
/// Takes its argument by value because it reorders it.
double median(std::vector<double> values);

/// Median absolute deviation about `center`, without the consistency factor.
double mad(std::span<const double> values, double center);

/// Coordinate-wise median and 1.4826 * MAD over the observed cells.
/// Throws DegenerateColumnError for a column with fewer than two observed
/// cells or zero MAD.
std::vector<ColumnSummary> column_summaries(const DataMatrix& x);

}  // namespace cellguard
