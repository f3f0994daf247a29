#include "cellguard/estimators.hpp"
#include "cellguard/errors.hpp"
#include "completion.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace cellguard {

namespace {

void require_positive_definite(const Eigen::MatrixXd& sigma, const char* where) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success || !sigma.allFinite()) {
    throw SingularMatrixError(std::string(where) + ": scatter update is not positive definite");
  }
}

Estimate complete_data_mle(const DataMatrix& x) {
  Estimate est;
  est.method = Method::kMle;
  const auto n = static_cast<double>(x.rows());
  est.mu = x.values().colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.values().rowwise() - est.mu.transpose();
  est.sigma = (centered.transpose() * centered) / n;
  require_positive_definite(est.sigma, "em_mle");
  Eigen::LLT<Eigen::MatrixXd> llt(est.sigma);
  double log_det = 0.0;
  for (Index a = 0; a < est.sigma.rows(); ++a) log_det += std::log(llt.matrixLLT()(a, a));
  const auto p = static_cast<double>(x.cols());
  // At the MLE the summed distances equal n p.
  est.scale = -0.5 * (p * std::log(2.0 * std::numbers::pi) + 2.0 * log_det + p);
  est.iterations = 1;
  est.converged = true;
  return est;
}

}  // namespace

Estimate em_mle(const DataMatrix& x, const EmConfig& cfg) {
  // Rows without an observed cell add nothing to the likelihood.
  std::vector<Index> kept;
  for (Index i = 0; i < x.rows(); ++i) {
    if (x.observed_in_row(i) > 0) kept.push_back(i);
  }
  if (static_cast<Index>(kept.size()) < x.rows()) {
    if (static_cast<Index>(kept.size()) <= x.cols()) {
      throw std::invalid_argument("em_mle: need more rows than columns");
    }
    return em_mle(x.select_rows(kept), cfg);
  }
  const Index n = x.rows();
  const Index p = x.cols();
  if (n <= p) throw std::invalid_argument("em_mle: need more rows than columns");
  for (Index j = 0; j < p; ++j) {
    if (x.observed_in_column(j) == 0) {
      throw std::invalid_argument("em_mle: column " + std::to_string(j) + " is entirely missing");
    }
  }
  if (x.complete()) return complete_data_mle(x);

  const MaskPatterns patterns(x.mask());
  double cells = 0.0;
  for (const int k : patterns.row_dims()) cells += k;
  Eigen::VectorXd mu(p);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
  for (Index j = 0; j < p; ++j) {
    const auto col = x.observed_column(j);
    double mean = 0.0;
    for (const double v : col) mean += v;
    mean /= static_cast<double>(col.size());
    double var = 0.0;
    for (const double v : col) var += (v - mean) * (v - mean);
    mu(j) = mean;
    sigma(j, j) = var / static_cast<double>(col.size());
  }
  require_positive_definite(sigma, "em_mle");

  Estimate est;
  est.method = Method::kMle;
  double ll_old = -std::numeric_limits<double>::infinity();
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  for (int it = 1; it <= cfg.max_iter; ++it) {
    const detail::Completion comp = detail::complete_rows(x, patterns, mu, sigma);
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) {
      const auto dim = static_cast<double>(patterns.row_dims()[static_cast<std::size_t>(i)]);
      ll -= 0.5 * (dim * log_2pi + comp.log_det(i) + comp.d(i));
    }
    // Per observed cell rather than relative to |ll|: ll shifts by a
    // constant under rescaling, its increments do not.
    const bool done = std::abs(ll - ll_old) <= cfg.tol * cells;
    ll_old = ll;

    const Eigen::MatrixXd centered = comp.x_hat.rowwise() - mu.transpose();
    const Eigen::VectorXd shift = centered.colwise().mean().transpose();
    Eigen::MatrixXd next = centered.transpose() * centered / static_cast<double>(n);
    for (std::size_t g = 0; g < patterns.patterns().size(); ++g) {
      const auto& pat = patterns.patterns()[g];
      if (pat.missing.empty()) continue;
      detail::add_missing_block(next, pat, comp.missing_cov[g],
                                static_cast<double>(pat.rows.size()) / static_cast<double>(n));
    }
    next -= shift * shift.transpose();
    next = 0.5 * (next + next.transpose());
    mu += shift;
    require_positive_definite(next, "em_mle");
    sigma = std::move(next);
    est.iterations = it;
    if (done) {
      est.converged = true;
      break;
    }
  }
  est.mu = std::move(mu);
  est.sigma = std::move(sigma);
  est.scale = ll_old / static_cast<double>(n);
  return est;
}

}  // namespace cellguard
