#pragma once

// Bisquare loss, consistency constants, partial Mahalanobis distances and
// the generalized M-scale of incomplete data.

#include "cellguard/data_matrix.hpp"

#include <Eigen/Core>

#include <memory>
#include <span>
#include <vector>

namespace cellguard {

enum class RhoFamily {
  kBisquare,       ///< rho(u) = min(1, 1 - (1 - u)^3)
  kHardRejection,  ///< rho(u) = 1{u > 1}
};

struct RhoConfig {
  RhoFamily family = RhoFamily::kBisquare;
  double b = 0.5;
};

/// Bisquare rho(u) = min(1, 1 - (1 - u)^3). Throws std::domain_error for u < 0.
double rho(double u);
/// Derivative 3 (1 - u)^2 on [0, 1], zero beyond.
double rho_derivative(double u);
double rho(double u, RhoFamily family);

/// E[rho(Q / c)] for Q ~ chi-square(k), bisquare loss. Uses the truncated
/// chi-square moments E[Q^m; Q <= c] = k (k + 2) ... (k + 2m - 2) F_{k+2m}(c).
double bisquare_expectation(double c, int k);

/// c_k solving E[rho(Q / c_k)] = b with Q ~ chi-square(k), to |E - b| <= 1e-12.
double tuning_constant(int k, double b = 0.5);

/// Consistency constants c_1 .. c_{p_max} for one loss and target b.
class TuningTable {
 public:
  static TuningTable compute(int p_max, RhoConfig config = {});

  /// Shared process-wide table covering at least p_max entries. Built once per
  /// (family, b); later calls return the same values bit for bit.
  static std::shared_ptr<const TuningTable> cached(int p_max, RhoConfig config = {});

  /// c_k for 1 <= k <= max_dim().
  double operator[](int k) const;
  int max_dim() const noexcept { return static_cast<int>(c_.size()); }
  const RhoConfig& config() const noexcept { return config_; }
  double b() const noexcept { return config_.b; }

  TuningTable(RhoConfig config, std::vector<double> c);

 private:
  RhoConfig config_;
  std::vector<double> c_;
};

struct PartialDistance {
  double d = 0.0;       ///< (x - mu)' [Sigma^(u)]^-1 (x - mu) on observed entries
  double d_star = 0.0;  ///< same with Sigma^(u) scaled to unit determinant
  int p_i = 0;          ///< number of observed entries
};

/// Partial Mahalanobis distance of one row. Throws SingularMatrixError when
/// the observed block of Sigma is not positive definite.
PartialDistance partial_mahalanobis(std::span<const double> x, std::span<const bool> observed,
                                    const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);

/// Rows grouped by identical observation pattern, so every block of a
/// scatter matrix is factored once per pattern.
class MaskPatterns {
 public:
  struct Pattern {
    std::vector<Index> observed;  ///< observed columns, ascending
    std::vector<Index> missing;   ///< missing columns, ascending
    std::vector<Index> rows;      ///< rows with this pattern, ascending
  };

  explicit MaskPatterns(const DataMatrix::Mask& mask);

  const std::vector<Pattern>& patterns() const noexcept { return patterns_; }
  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  /// p_i for every row.
  const std::vector<int>& row_dims() const noexcept { return row_dims_; }

 private:
  std::vector<Pattern> patterns_;
  std::vector<int> row_dims_;
  Index rows_ = 0;
  Index cols_ = 0;
};

/// Per-row partial distances d_i and observed-block log-determinants.
struct RowDistances {
  Eigen::VectorXd d;
  Eigen::VectorXd log_det;
};

RowDistances row_distances(const DataMatrix& x, const MaskPatterns& patterns,
                           const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);

/// log |A^(u_i)| for every row.
Eigen::VectorXd pattern_log_dets(const MaskPatterns& patterns, const Eigen::MatrixXd& a);

/// Solves sum_i w_i rho(t_i / s) = b sum_i w_i for s > 0. For the bisquare
/// the root is bracketed geometrically from the weighted median of t and
/// refined by Brent's method to 1e-12 relative; for hard rejection it is the
/// weighted median. Throws NumericalError when the scale is undefined
/// (too many zero t_i) or cannot be bracketed.
double solve_mscale(std::span<const double> t, std::span<const double> w, RhoConfig config);

/// Left side minus right side of the scale equation at s, divided by
/// b sum_i w_i. Non-increasing in s.
double mscale_residual(std::span<const double> t, std::span<const double> w, RhoConfig config,
                       double s);

struct ScaleProblem {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd omega;
  const DataMatrix* data = nullptr;
};

/// Standardized distances t_i = d*_i / (c_{p_i} |Omega^(u_i)|^{1/p_i}) and
/// their weights c_{p_i}.
struct ScaledDistances {
  std::vector<double> t;
  std::vector<double> w;
};

ScaledDistances scaled_distances(const DataMatrix& x, const MaskPatterns& patterns,
                                 const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                 const Eigen::VectorXd& omega_log_det, const TuningTable& tuning);

/// Generalized M-scale s_GS(mu, Sigma, Omega) of the data in `problem`.
double generalized_mscale(const ScaleProblem& problem, const TuningTable& tuning);

}  // namespace cellguard
