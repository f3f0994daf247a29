#include "completion.hpp"
#include "cellguard/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <string>

namespace cellguard::detail {

namespace {

double log_det_of(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const auto& lower = llt.matrixLLT();
  double s = 0.0;
  for (Index a = 0; a < lower.rows(); ++a) s += std::log(lower(a, a));
  return 2.0 * s;
}

[[noreturn]] void throw_block(const MaskPatterns::Pattern& pat) {
  throw SingularMatrixError("observed block of the scatter matrix is not positive definite "
                            "(first row " + std::to_string(pat.rows.front()) + ")");
}

// Fallback when Sigma itself is not positive definite but some observed
// blocks may be: factor each observed block directly.
void complete_direct(const DataMatrix& x, const MaskPatterns::Pattern& pat, const Eigen::VectorXd& mu,
                     const Eigen::MatrixXd& sigma, Completion& out, std::size_t g) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma(pat.observed, pat.observed));
  if (llt.info() != Eigen::Success) throw_block(pat);
  const double log_det = log_det_of(llt);
  Eigen::MatrixXd regression;
  if (!pat.missing.empty()) {
    const Eigen::MatrixXd sigma_om = sigma(pat.observed, pat.missing);
    regression = llt.solve(sigma_om).transpose();
    out.missing_cov[g] = sigma(pat.missing, pat.missing) - regression * sigma_om;
  }
  Eigen::VectorXd r(static_cast<Index>(pat.observed.size()));
  for (const Index i : pat.rows) {
    for (std::size_t a = 0; a < pat.observed.size(); ++a) {
      r(static_cast<Index>(a)) = x(i, pat.observed[a]) - mu(pat.observed[a]);
    }
    if (!pat.missing.empty()) {
      const Eigen::VectorXd fill = regression * r;
      for (std::size_t a = 0; a < pat.missing.size(); ++a) {
        out.x_hat(i, pat.missing[a]) = mu(pat.missing[a]) + fill(static_cast<Index>(a));
      }
    }
    llt.matrixL().solveInPlace(r);
    out.d(i) = r.squaredNorm();
    out.log_det(i) = log_det;
  }
}

}  // namespace

// With K = Sigma^-1, the conditional law of the missing block given the
// observed one has covariance K_mm^-1 and mean mu_m - K_mm^-1 K_mo r_o, and
// log|Sigma_oo| = log|Sigma| + log|K_mm|. Only the small missing block is
// factored per pattern. The distance equals z' Sigma^-1 z for the
// completed residual z, which is evaluated with the full Cholesky factor.
Completion complete_rows(const DataMatrix& x, const MaskPatterns& patterns,
                         const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  const Index n = x.rows();
  const Index p = x.cols();
  Completion out;
  out.x_hat = x.values();
  out.d.resize(n);
  out.log_det.resize(n);
  out.missing_cov.resize(patterns.patterns().size());

  const Eigen::LLT<Eigen::MatrixXd> full(sigma);
  const bool full_ok = full.info() == Eigen::Success;
  double full_log_det = 0.0;
  Eigen::MatrixXd precision;
  if (full_ok) {
    full_log_det = log_det_of(full);
    precision = full.solve(Eigen::MatrixXd::Identity(p, p));
  }

  Eigen::VectorXd z(p);
  Eigen::VectorXd v;
  for (std::size_t g = 0; g < patterns.patterns().size(); ++g) {
    const auto& pat = patterns.patterns()[g];
    if (pat.observed.empty()) throw std::invalid_argument("row with no observed cell");
    if (!full_ok) {
      complete_direct(x, pat, mu, sigma, out, g);
      continue;
    }
    const auto nm = static_cast<Index>(pat.missing.size());
    double log_det = full_log_det;
    Eigen::MatrixXd regression;  // Sigma_mo Sigma_oo^-1 = -K_mm^-1 K_mo
    if (nm == 1) {
      const Index m = pat.missing.front();
      const double kmm = precision(m, m);
      if (!(kmm > 0.0)) throw_block(pat);
      log_det += std::log(kmm);
      out.missing_cov[g] = Eigen::MatrixXd::Constant(1, 1, 1.0 / kmm);
      regression.resize(1, static_cast<Index>(pat.observed.size()));
      for (std::size_t a = 0; a < pat.observed.size(); ++a) {
        regression(0, static_cast<Index>(a)) = -precision(m, pat.observed[a]) / kmm;
      }
      v.resize(static_cast<Index>(pat.observed.size()));
    } else if (nm > 1) {
      const Eigen::LLT<Eigen::MatrixXd> kmm(precision(pat.missing, pat.missing));
      if (kmm.info() != Eigen::Success) throw_block(pat);
      log_det += log_det_of(kmm);
      out.missing_cov[g] = kmm.solve(Eigen::MatrixXd::Identity(nm, nm));
      regression = -kmm.solve(Eigen::MatrixXd(precision(pat.missing, pat.observed)));
      v.resize(static_cast<Index>(pat.observed.size()));
    }
    for (const Index i : pat.rows) {
      for (Index j = 0; j < p; ++j) z(j) = 0.0;
      for (std::size_t a = 0; a < pat.observed.size(); ++a) {
        const Index j = pat.observed[a];
        z(j) = x(i, j) - mu(j);
      }
      if (nm > 0) {
        for (std::size_t a = 0; a < pat.observed.size(); ++a) v(static_cast<Index>(a)) = z(pat.observed[a]);
        for (Index a = 0; a < nm; ++a) {
          const Index j = pat.missing[static_cast<std::size_t>(a)];
          z(j) = regression.row(a).dot(v);
          out.x_hat(i, j) = mu(j) + z(j);
        }
      }
      full.matrixL().solveInPlace(z);
      out.d(i) = z.squaredNorm();
      out.log_det(i) = log_det;
    }
  }
  return out;
}

Eigen::VectorXd observed_log_dets(const MaskPatterns& patterns, const Eigen::MatrixXd& a) {
  Eigen::VectorXd out(patterns.rows());
  const Eigen::LLT<Eigen::MatrixXd> full(a);
  const bool full_ok = full.info() == Eigen::Success;
  Eigen::MatrixXd precision;
  double full_log_det = 0.0;
  if (full_ok) {
    full_log_det = log_det_of(full);
    precision = full.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  }
  for (const auto& pat : patterns.patterns()) {
    double ld = 0.0;
    if (full_ok) {
      ld = full_log_det;
      if (!pat.missing.empty()) {
        const Eigen::LLT<Eigen::MatrixXd> kmm(precision(pat.missing, pat.missing));
        if (kmm.info() != Eigen::Success) throw_block(pat);
        ld += log_det_of(kmm);
      }
    } else {
      const Eigen::LLT<Eigen::MatrixXd> llt(a(pat.observed, pat.observed));
      if (llt.info() != Eigen::Success) throw_block(pat);
      ld = log_det_of(llt);
    }
    for (const Index i : pat.rows) out(i) = ld;
  }
  return out;
}

void add_missing_block(Eigen::MatrixXd& target, const MaskPatterns::Pattern& pat,
                       const Eigen::MatrixXd& c, double scale) {
  for (std::size_t a = 0; a < pat.missing.size(); ++a) {
    for (std::size_t b = 0; b < pat.missing.size(); ++b) {
      target(pat.missing[a], pat.missing[b]) +=
          scale * c(static_cast<Index>(a), static_cast<Index>(b));
    }
  }
}

}  // namespace cellguard::detail
