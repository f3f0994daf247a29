#pragma once

// Adaptive univariate cellwise filter.
//
// Each column is standardized by its median and MAD. The flag proportion d
// is the largest positive gap between the reference tail 2*Phi(t) - 1 and the
// empirical CDF of |Z| beyond the alpha-quantile eta of |Z|; the
// floor(n * d) most extreme cells are flagged and become missing. For data
// whose tails are no heavier than the normal's, the flagged fraction tends to
// zero as n grows.

#include "cellguard/data_matrix.hpp"

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace cellguard {

struct FilterConfig {
  double alpha = 0.95;  ///< eta = quantile of |Z| at this probability
};

/// Quantile eta of |Z| for Z standard normal: Phi^-1((1 + alpha) / 2).
double reference_threshold(const FilterConfig& cfg);

/// Flag proportion for one column of standardized values (observed cells
/// only). Returns 0 when no |Z| reaches eta. Throws std::invalid_argument on
/// non-finite input or alpha outside (0, 1).
double flag_proportion(std::span<const double> z, const FilterConfig& cfg = {});

struct CutoffResult {
  double cutoff;                   ///< |Z|_(n - m); +inf when m = 0
  std::vector<std::size_t> flagged;  ///< positions into z, ascending
};

/// Number of cells flagged for proportion d over n values: floor(n * d),
/// guarded against the representation error in d = m / n.
std::size_t flag_count(std::size_t n, double d);

/// Flags exactly flag_count(z.size(), d) entries with the largest |Z|. Among
/// tied |Z| at the boundary the later position is flagged first. The
/// reported cutoff is the largest unflagged |Z|, so in the tie-free case
/// the flagged set is {|Z| > cutoff}.
CutoffResult adaptive_cutoff(std::span<const double> z, double d);

struct FilterResult {
  std::vector<ColumnSummary> summaries;
  std::vector<double> d;
  std::vector<double> cutoff;
  std::vector<std::size_t> flag_counts;                   ///< newly flagged per column
  std::vector<std::pair<Index, Index>> flagged;           ///< (row, col), row-major order
  DataMatrix::Mask mask_out;                              ///< input mask minus flagged cells
  std::vector<Index> dropped_rows;                        ///< rows left with no observed cell
  std::vector<Index> kept_rows;                           ///< rows of the filtered matrix, in order
  double q_n = 1.0;                                       ///< fully observed rows of mask_out over all input rows
};

/// Filters every column and returns the filtered data (flagged cells
/// missing, emptied rows dropped) together with the audit trail. Throws
/// DegenerateColumnError for a column with zero MAD.
std::pair<DataMatrix, FilterResult> apply_filter(const DataMatrix& x, const FilterConfig& cfg = {});

}  // namespace cellguard
