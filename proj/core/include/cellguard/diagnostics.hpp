#pragma once

// Cellwise, pairwise and casewise outlier flags from a location/scatter
// estimate, with chi-square cutoffs adjusted for the number of comparisons.

#include "cellguard/data_matrix.hpp"
#include "cellguard/estimators.hpp"

#include <array>
#include <utility>
#include <vector>

namespace cellguard {

struct DiagThresholds {
  double cell = 0.0;  ///< chi2_1 quantile at conf^(1 / (n p))
  double pair = 0.0;  ///< chi2_2 quantile at conf^(2 / (n p (p - 1)))
  double case_ = 0.0; ///< chi2_p quantile at conf^(1 / n)
};

/// Thresholds for an n x p table. The quantiles are taken in the upper
/// tail, 1 - conf^(1/N) = -expm1(log(conf) / N), which keeps full precision
/// when N is large.
DiagThresholds diagnostic_thresholds(Index n, Index p, double conf);

struct DiagReport {
  double conf = 0.99;
  DiagThresholds thresholds;
  double cell_prop = 0.0;
  double pair_prop = 0.0;  ///< 0 when p = 1
  double case_prop = 0.0;
  std::vector<std::pair<Index, Index>> cells;         ///< (row, col), row-major
  std::vector<std::array<Index, 3>> pairs;             ///< (row, j, k), j < k
  std::vector<Index> cases;
};

/// Requires complete data. Throws std::invalid_argument when a cell is
/// missing or dimensions disagree, and SingularMatrixError naming (j, k)
/// when a 2 x 2 block of Sigma is not positive definite.
DiagReport diagnose(const DataMatrix& x, const Estimate& est, double conf = 0.99, int threads = 1);

}  // namespace cellguard
