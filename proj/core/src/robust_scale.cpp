#include "cellguard/robust_scale.hpp"

#include "cellguard/distributions.hpp"
#include "cellguard/errors.hpp"
#include "completion.hpp"
#include "root_finding.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cellguard {

double rho(double u) {
  if (!(u >= 0.0)) throw std::domain_error("rho: argument must be non-negative");
  if (u >= 1.0) return 1.0;
  const double v = 1.0 - u;
  return 1.0 - v * v * v;
}

double rho_derivative(double u) {
  if (!(u >= 0.0)) throw std::domain_error("rho_derivative: argument must be non-negative");
  if (u >= 1.0) return 0.0;
  const double v = 1.0 - u;
  return 3.0 * v * v;
}

double rho(double u, RhoFamily family) {
  if (family == RhoFamily::kHardRejection) {
    if (!(u >= 0.0)) throw std::domain_error("rho: argument must be non-negative");
    return u > 1.0 ? 1.0 : 0.0;
  }
  return rho(u);
}

double bisquare_expectation(double c, int k) {
  if (!(c > 0.0) || k < 1) throw std::domain_error("bisquare_expectation: need c > 0, k >= 1");
  // rho(q / c) = 3 q / c - 3 q^2 / c^2 + q^3 / c^3 on q <= c, 1 beyond.
  const double kd = k;
  const double m1 = kd * chi2_cdf(c, kd + 2.0);
  const double m2 = kd * (kd + 2.0) * chi2_cdf(c, kd + 4.0);
  const double m3 = kd * (kd + 2.0) * (kd + 4.0) * chi2_cdf(c, kd + 6.0);
  return 3.0 * m1 / c - 3.0 * m2 / (c * c) + m3 / (c * c * c) + chi2_sf(c, kd);
}

double tuning_constant(int k, double b) {
  if (k < 1) throw std::domain_error("tuning_constant: dimension must be positive");
  if (!(b > 0.0 && b < 1.0)) throw std::domain_error("tuning_constant: b must lie in (0, 1)");
  // rho(u) >= 1{u >= 1} puts the root at or above the chi-square (1 - b) quantile.
  double lo = chi2_quantile(1.0 - b, k);
  double hi = 2.0 * lo;
  const auto f = [&](double c) { return bisquare_expectation(c, k) - b; };
  for (int i = 0; f(hi) > 0.0; ++i) {
    lo = hi;
    hi *= 2.0;
    if (i > 200) throw NumericalError("tuning_constant: failed to bracket the root");
  }
  return detail::brent_root(f, lo, hi, 1e-15, 1e-13);
}

TuningTable::TuningTable(RhoConfig config, std::vector<double> c)
    : config_(config), c_(std::move(c)) {}

TuningTable TuningTable::compute(int p_max, RhoConfig config) {
  if (p_max < 1) throw std::invalid_argument("TuningTable: p_max must be positive");
  if (!(config.b > 0.0 && config.b < 1.0)) {
    throw std::invalid_argument("TuningTable: b must lie in (0, 1)");
  }
  std::vector<double> c(static_cast<std::size_t>(p_max));
  for (int k = 1; k <= p_max; ++k) {
    c[static_cast<std::size_t>(k - 1)] = config.family == RhoFamily::kBisquare
                                             ? tuning_constant(k, config.b)
                                             : chi2_quantile(1.0 - config.b, k);
  }
  return TuningTable(config, std::move(c));
}

std::shared_ptr<const TuningTable> TuningTable::cached(int p_max, RhoConfig config) {
  static std::mutex mutex;
  static std::map<std::pair<int, double>, std::shared_ptr<const TuningTable>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{static_cast<int>(config.family), config.b}];
  if (!slot || slot->max_dim() < p_max) {
    // Entries are computed independently per k, so a larger table agrees
    // with a smaller one on their common range.
    const int size = std::max(p_max, slot ? slot->max_dim() * 2 : 32);
    slot = std::make_shared<const TuningTable>(compute(size, config));
  }
  return slot;
}

double TuningTable::operator[](int k) const {
  if (k < 1 || k > max_dim()) throw std::out_of_range("TuningTable: dimension out of range");
  return c_[static_cast<std::size_t>(k - 1)];
}

PartialDistance partial_mahalanobis(std::span<const double> x, std::span<const bool> observed,
                                    const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  const auto p = static_cast<Index>(x.size());
  if (static_cast<Index>(observed.size()) != p || mu.size() != p || sigma.rows() != p ||
      sigma.cols() != p) {
    throw std::invalid_argument("partial_mahalanobis: dimension mismatch");
  }
  std::vector<Index> obs;
  for (Index j = 0; j < p; ++j) {
    if (observed[static_cast<std::size_t>(j)]) obs.push_back(j);
  }
  if (obs.empty()) throw std::invalid_argument("partial_mahalanobis: row has no observed cell");
  const auto k = static_cast<Index>(obs.size());
  Eigen::VectorXd r(k);
  for (Index a = 0; a < k; ++a) r(a) = x[static_cast<std::size_t>(obs[a])] - mu(obs[a]);
  const Eigen::MatrixXd block = sigma(obs, obs);
  Eigen::LLT<Eigen::MatrixXd> llt(block);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrixError("partial_mahalanobis: observed block is not positive definite");
  }
  const Eigen::VectorXd y = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  PartialDistance out;
  out.d = y.squaredNorm();
  out.d_star = out.d * std::exp(log_det / static_cast<double>(k));
  out.p_i = static_cast<int>(k);
  return out;
}

MaskPatterns::MaskPatterns(const DataMatrix::Mask& mask) : rows_(mask.rows()), cols_(mask.cols()) {
  std::map<std::vector<bool>, std::size_t> index;
  row_dims_.resize(static_cast<std::size_t>(rows_));
  for (Index i = 0; i < rows_; ++i) {
    std::vector<bool> key(static_cast<std::size_t>(cols_));
    for (Index j = 0; j < cols_; ++j) key[static_cast<std::size_t>(j)] = mask(i, j);
    auto [it, inserted] = index.try_emplace(key, patterns_.size());
    if (inserted) {
      Pattern pat;
      for (Index j = 0; j < cols_; ++j) (mask(i, j) ? pat.observed : pat.missing).push_back(j);
      patterns_.push_back(std::move(pat));
    }
    patterns_[it->second].rows.push_back(i);
    row_dims_[static_cast<std::size_t>(i)] = static_cast<int>(mask.row(i).count());
  }
}

RowDistances row_distances(const DataMatrix& x, const MaskPatterns& patterns,
                           const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  detail::Completion comp = detail::complete_rows(x, patterns, mu, sigma);
  return {std::move(comp.d), std::move(comp.log_det)};
}

Eigen::VectorXd pattern_log_dets(const MaskPatterns& patterns, const Eigen::MatrixXd& a) {
  return detail::observed_log_dets(patterns, a);
}

namespace {

double weighted_total(std::span<const double> w) {
  double total = 0.0;
  for (const double v : w) total += v;
  return total;
}

// Smallest s with sum_{t_i > s} w_i <= b * sum_i w_i.
double weighted_upper_median(std::span<const double> t, std::span<const double> w, double b) {
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t c) { return t[a] < t[c] || (t[a] == t[c] && a < c); });
  const double total = weighted_total(w);
  double above = total;
  for (std::size_t k = 0; k < order.size(); ++k) {
    above -= w[order[k]];
    // Ties: s must clear every copy of the value.
    if (k + 1 < order.size() && t[order[k + 1]] == t[order[k]]) continue;
    if (above <= b * total * (1.0 + 1e-14)) return t[order[k]];
  }
  return t[order.back()];
}

}  // namespace

double mscale_residual(std::span<const double> t, std::span<const double> w, RhoConfig config,
                       double s) {
  double lhs = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) lhs += w[i] * rho(t[i] / s, config.family);
  const double rhs = config.b * weighted_total(w);
  return (lhs - rhs) / rhs;
}

double solve_mscale(std::span<const double> t, std::span<const double> w, RhoConfig config) {
  if (t.size() != w.size() || t.empty()) {
    throw std::invalid_argument("solve_mscale: need equally sized, non-empty inputs");
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] >= 0.0) || !std::isfinite(t[i]) || !(w[i] > 0.0)) {
      throw std::invalid_argument("solve_mscale: distances must be finite and non-negative, "
                                  "weights positive");
    }
  }
  const double s0 = weighted_upper_median(t, w, config.b);
  if (!(s0 > 0.0)) {
    throw NumericalError("generalized M-scale is undefined: too many zero distances");
  }
  if (config.family == RhoFamily::kHardRejection) return s0;

  const auto f = [&](double s) { return mscale_residual(t, w, config, s); };
  double lo = s0;
  double hi = s0;
  int expansions = 0;
  if (f(s0) > 0.0) {
    while (f(hi) > 0.0) {
      lo = hi;
      hi *= 4.0;
      if (++expansions > 200) throw NumericalError("generalized M-scale: no sign change");
    }
  } else {
    while (f(lo) <= 0.0) {
      if (f(lo) == 0.0) return lo;
      hi = lo;
      lo /= 4.0;
      if (++expansions > 200) throw NumericalError("generalized M-scale: no sign change");
    }
  }
  return detail::brent_root(f, lo, hi, 0.0, 1e-12);
}

ScaledDistances scaled_distances(const DataMatrix& x, const MaskPatterns& patterns,
                                 const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                 const Eigen::VectorXd& omega_log_det, const TuningTable& tuning) {
  const RowDistances rd = row_distances(x, patterns, mu, sigma);
  ScaledDistances out;
  out.t.resize(static_cast<std::size_t>(x.rows()));
  out.w.resize(static_cast<std::size_t>(x.rows()));
  const auto& dims = patterns.row_dims();
  for (Index i = 0; i < x.rows(); ++i) {
    const int k = dims[static_cast<std::size_t>(i)];
    const double c = tuning[k];
    out.t[static_cast<std::size_t>(i)] =
        rd.d(i) * std::exp((rd.log_det(i) - omega_log_det(i)) / k) / c;
    out.w[static_cast<std::size_t>(i)] = c;
  }
  return out;
}

double generalized_mscale(const ScaleProblem& problem, const TuningTable& tuning) {
  if (problem.data == nullptr) throw std::invalid_argument("generalized_mscale: no data");
  const DataMatrix& x = *problem.data;
  const Index p = x.cols();
  if (problem.mu.size() != p || problem.sigma.rows() != p || problem.omega.rows() != p) {
    throw std::invalid_argument("generalized_mscale: dimension mismatch");
  }
  const MaskPatterns patterns(x.mask());
  const Eigen::VectorXd omega_ld = pattern_log_dets(patterns, problem.omega);
  const ScaledDistances sd =
      scaled_distances(x, patterns, problem.mu, problem.sigma, omega_ld, tuning);
  return solve_mscale(sd.t, sd.w, tuning.config());
}

}  // namespace cellguard
