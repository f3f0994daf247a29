#include "cellguard/diagnostics.hpp"
#include "cellguard/distributions.hpp"
#include "cellguard/errors.hpp"
#include "cellguard/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cellguard {

DiagThresholds diagnostic_thresholds(Index n, Index p, double conf) {
  if (!(conf > 0.0 && conf < 1.0)) throw std::invalid_argument("diagnose: conf must be in (0, 1)");
  if (n < 1 || p < 1) throw std::invalid_argument("diagnose: empty table");
  const double log_conf = std::log(conf);
  const auto nd = static_cast<double>(n);
  const auto pd = static_cast<double>(p);
  auto upper = [&](double count, double dof) { return chi2_quantile_upper(-std::expm1(log_conf / count), dof); };
  DiagThresholds t;
  t.cell = upper(nd * pd, 1.0);
  t.pair = p > 1 ? upper(nd * pd * (pd - 1.0) / 2.0, 2.0) : 0.0;
  t.case_ = upper(nd, pd);
  return t;
}

DiagReport diagnose(const DataMatrix& x, const Estimate& est, double conf, int threads) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (!x.complete()) {
    throw std::invalid_argument("diagnose: data contain missing cells; impute them or select complete rows first");
  }
  if (est.mu.size() != p || est.sigma.rows() != p || est.sigma.cols() != p) {
    throw std::invalid_argument("diagnose: estimate dimension does not match the data");
  }
  for (Index j = 0; j < p; ++j) {
    if (!(est.sigma(j, j) > 0.0)) {
      throw SingularMatrixError("diagnose: scatter diagonal entry " + std::to_string(j) + " is not positive");
    }
  }
  for (Index j = 0; j < p; ++j) {
    for (Index k = j + 1; k < p; ++k) {
      if (!(est.sigma(j, j) * est.sigma(k, k) - est.sigma(j, k) * est.sigma(j, k) > 0.0)) {
        throw SingularMatrixError("diagnose: 2 x 2 scatter block (" + std::to_string(j) + ", " +
                                  std::to_string(k) + ") is singular");
      }
    }
  }
  Eigen::LLT<Eigen::MatrixXd> full(est.sigma);
  if (full.info() != Eigen::Success) throw SingularMatrixError("diagnose: scatter matrix is not positive definite");

  DiagReport rep;
  rep.conf = conf;
  rep.thresholds = diagnostic_thresholds(n, p, conf);
  const Eigen::MatrixXd r = x.values().rowwise() - est.mu.transpose();

  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) {
      if (r(i, j) * r(i, j) / est.sigma(j, j) > rep.thresholds.cell) rep.cells.emplace_back(i, j);
    }
  }

  std::vector<std::pair<Index, Index>> pair_index;
  for (Index j = 0; j < p; ++j) {
    for (Index k = j + 1; k < p; ++k) pair_index.emplace_back(j, k);
  }
  std::vector<std::vector<Index>> pair_rows(pair_index.size());
  parallel_for(pair_index.size(), threads, [&](std::size_t q) {
    const auto [j, k] = pair_index[q];
    const double a = est.sigma(j, j);
    const double b = est.sigma(j, k);
    const double c = est.sigma(k, k);
    const double det = a * c - b * b;
    for (Index i = 0; i < n; ++i) {
      const double u = r(i, j);
      const double v = r(i, k);
      const double dist = (c * u * u - 2.0 * b * u * v + a * v * v) / det;
      if (dist > rep.thresholds.pair) pair_rows[q].push_back(i);
    }
  });
  for (std::size_t q = 0; q < pair_index.size(); ++q) {
    for (const Index i : pair_rows[q]) rep.pairs.push_back({i, pair_index[q].first, pair_index[q].second});
  }
  std::sort(rep.pairs.begin(), rep.pairs.end());

  const Eigen::MatrixXd z = full.matrixL().solve(r.transpose());
  for (Index i = 0; i < n; ++i) {
    if (z.col(i).squaredNorm() > rep.thresholds.case_) rep.cases.push_back(i);
  }

  const auto nd = static_cast<double>(n);
  const auto pd = static_cast<double>(p);
  rep.cell_prop = static_cast<double>(rep.cells.size()) / (nd * pd);
  rep.pair_prop = p > 1 ? static_cast<double>(rep.pairs.size()) / (nd * pd * (pd - 1.0) / 2.0) : 0.0;
  rep.case_prop = static_cast<double>(rep.cases.size()) / nd;
  return rep;
}

}  // namespace cellguard
