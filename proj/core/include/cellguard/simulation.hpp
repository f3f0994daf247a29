#pragma once

// Monte Carlo harness: random correlation models with a fixed condition
// number, cellwise (ICM) and casewise (THCM) contamination, and the LRT
// divergence between scatter matrices.

#include "cellguard/data_matrix.hpp"
#include "cellguard/estimators.hpp"
#include "cellguard/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cellguard {

struct TrueModel {
  Eigen::VectorXd mu0;
  Eigen::MatrixXd r0;       ///< correlation matrix, used as the true scatter
  double cn = 1.0;          ///< requested condition number
  int iterations = 0;       ///< rescaling rounds until the condition number settled
  Eigen::VectorXd thcm_v;   ///< smallest-eigenvalue direction with v' R0^-1 v = 1
  bool repeated_min_eigenvalue = false;
};

/// Random correlation matrix whose condition number is within 1% of `cn`.
/// Throws NumericalError if 100 rounds do not reach the tolerance.
TrueModel random_correlation(int p, double cn, Rng& rng);

/// Sets exactly floor(eps n p) cells, drawn without replacement, to k.
DataMatrix contaminate_icm(const DataMatrix& x, double eps, double k, Rng& rng);

/// Sets exactly floor(eps n) rows, drawn without replacement, to k v.
DataMatrix contaminate_thcm(const DataMatrix& x, const TrueModel& model, double eps, double k,
                            Rng& rng);

/// trace(S S0^-1) - log|S S0^-1| - p. Throws SingularMatrixError for
/// non-positive-definite input and std::invalid_argument on a size mismatch.
double lrt_distance(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& sigma0);

/// n x p sample from N(mu0, R0) using the Cholesky factor of R0.
DataMatrix sample_model(const TrueModel& model, Index n, Rng& rng);

enum class Contamination { kNone, kIcm, kThcm };
std::string_view contamination_name(Contamination c);
Contamination parse_contamination(std::string_view name);

struct SimConfig {
  int p = 10;
  int n = 100;
  int replicates = 100;
  double cn = 100.0;
  std::vector<Contamination> models{Contamination::kIcm};
  std::vector<double> eps{0.1};
  std::vector<double> k_grid;
  std::vector<Method> estimators{Method::kTsgs, Method::kMle};
  std::uint64_t seed = 1;
  int threads = 1;
  bool time = false;
  FilterConfig filter;
  GseConfig gse;
};

/// 1, 5, 10, ..., 100.
std::vector<double> default_k_grid();

struct SimCell {
  Method estimator = Method::kMle;
  Contamination model = Contamination::kNone;
  double eps = 0.0;
  double k = 0.0;
  double mean_lrt = 0.0;  ///< over successful replicates
  int successes = 0;
  int failures = 0;
};

struct EstimatorSummary {
  Method estimator = Method::kMle;
  double clean_mean_lrt = 0.0;
  std::optional<double> efficiency;  ///< needs mle among the estimators
  int fits = 0;
  int failures = 0;
  int converged = 0;
  /// Largest |s_GS(mu, Sigma, Sigma) - 1| over converged robust fits.
  double max_constraint_residual = 0.0;
  std::optional<double> seconds_per_fit;
};

struct SimReport {
  SimConfig config;
  std::vector<SimCell> cells;  ///< estimator-major, then the clean setting, models, eps, k
  std::vector<EstimatorSummary> summaries;
  std::vector<std::string> warnings;
};

/// Runs the full experiment. Replicate r draws its model from stream
/// (seed, r, 0), its clean sample from (seed, r, 1), contamination positions
/// from (seed, r, 2, setting) and fit seeds from (seed, r, 3, setting, k).
/// Results do not depend on `threads`.
SimReport run_simulation(const SimConfig& cfg);

}  // namespace cellguard
