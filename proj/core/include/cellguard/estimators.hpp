#pragma once

// Location/scatter estimators for incomplete data: Gaussian EM maximum
// likelihood, the EMVE subsampling initializer, the generalized S-estimator
// (GSE) and the two-step filter + GSE composition.

#include "cellguard/data_matrix.hpp"
#include "cellguard/filter.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cellguard {

enum class Method { kMle, kEmve, kGse, kTsgs };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct Estimate {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  /// mle: log-likelihood per row; emve: volume score of the winning
  /// candidate; gse/tsgs: s_GS(mu, Sigma, Omega) at the solution.
  double scale = 0.0;
  int iterations = 0;
  bool converged = false;
  Method method = Method::kMle;
  /// gse/tsgs: s_GS after every accepted iteration (index 0 = start).
  std::vector<double> scale_trace;
};

struct EmConfig {
  int max_iter = 500;
  double tol = 1e-8;  ///< change of the observed-data log-likelihood per observed cell
};

struct GseConfig {
  int max_iter = 150;
  double tol = 1e-6;  ///< relative decrease of s_GS that ends the iteration
  int emve_subsamples = 500;
  int emve_subsample_size = 0;  ///< 0 selects 2 (p + 1)
  int concentration_steps = 2;
  int emve_refined = 50;        ///< best raw candidates that receive concentration steps
  EmConfig emve_em{10, 1e-3};   ///< EM controls for subsample and concentration fits
  std::uint64_t seed = 0;
  int threads = 1;              ///< workers for EMVE candidates; results do not depend on it
};

/// Gaussian maximum likelihood by EM over the observed cells. Complete data
/// take a single step: sample mean and covariance with divisor n. Throws
/// SingularMatrixError when an update is not positive definite and
/// std::invalid_argument when n <= p or a column is fully missing. Rows with
/// no observed cell are ignored.
/// Non-convergence is reported through Estimate::converged.
Estimate em_mle(const DataMatrix& x, const EmConfig& cfg = {});

/// Extended minimum volume ellipsoid. Random subsamples are fitted by EM and
/// scored by the weighted median of d_i |Sigma^(u_i)|^{1/p_i} / c_{p_i},
/// taken as the smallest value covering more than half the weight, so each
/// row is judged against its own observed-block volume. The best candidates
/// are refined by concentration steps on the floor(n/2) + 1 rows with
/// smallest chi-square standardized distance. The winner's Sigma is rescaled so its own
/// hard-rejection scale equals 1.
Estimate emve_init(const DataMatrix& x, const GseConfig& cfg = {});

/// Generalized S-estimator starting from (and normalizing with) `omega`.
Estimate gse_fit(const DataMatrix& x, const Estimate& omega, const GseConfig& cfg = {});

struct TsgsResult {
  Estimate estimate;
  FilterResult filter;
  DataMatrix filtered;  ///< data the GSE step saw, rows in canonical order
};

/// Two-step estimator: cellwise filter, then EMVE + GSE on the filtered data.
/// Rows are put in a canonical order first, so the result does not depend on
/// the input row order.
TsgsResult tsgs(const DataMatrix& x, const FilterConfig& filter_cfg = {},
                const GseConfig& gse_cfg = {});

/// |s_GS(mu, Sigma, Sigma) - 1| for a fitted estimate on data `x`.
double constraint_residual(const DataMatrix& x, const Estimate& est);

/// Row order that sorts rows by (mask, values) lexicographically.
std::vector<Index> canonical_row_order(const DataMatrix& x);

}  // namespace cellguard
