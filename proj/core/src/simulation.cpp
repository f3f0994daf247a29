#include "cellguard/simulation.hpp"
#include "cellguard/errors.hpp"
#include "cellguard/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cellguard {

namespace {

constexpr double kCnTolerance = 0.01;
constexpr int kCnMaxRounds = 100;

Eigen::MatrixXd to_correlation(const Eigen::MatrixXd& s) {
  const Eigen::VectorXd inv_sd = s.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd r = inv_sd.asDiagonal() * s * inv_sd.asDiagonal();
  r = 0.5 * (r + r.transpose());
  r.diagonal().setOnes();
  return r;
}

}  // namespace

TrueModel random_correlation(int p, double cn, Rng& rng) {
  if (p < 2) throw std::invalid_argument("random_correlation: p must be at least 2");
  if (!(cn >= 1.0)) throw std::invalid_argument("random_correlation: condition number must be >= 1");

  std::uniform_real_distribution<double> unif(1.0, cn);
  std::vector<double> lambda(static_cast<std::size_t>(p));
  lambda.front() = 1.0;
  lambda.back() = cn;
  for (int j = 1; j + 1 < p; ++j) lambda[static_cast<std::size_t>(j)] = cn > 1.0 ? unif(rng) : 1.0;
  std::sort(lambda.begin() + 1, lambda.end() - 1);

  const Eigen::MatrixXd y = standard_normal_matrix(p, p, rng);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> yty(y.transpose() * y);
  const Eigen::MatrixXd& u = yty.eigenvectors();
  Eigen::MatrixXd sigma =
      u * Eigen::Map<const Eigen::VectorXd>(lambda.data(), p).asDiagonal() * u.transpose();

  TrueModel model;
  model.cn = cn;
  model.mu0 = Eigen::VectorXd::Zero(p);
  for (int round = 1;; ++round) {
    Eigen::MatrixXd r = to_correlation(sigma);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
    Eigen::VectorXd ev = es.eigenvalues();
    const double cond = ev(p - 1) / ev(0);
    if (std::abs(cond - cn) / cn <= kCnTolerance) {
      model.r0 = std::move(r);
      model.iterations = round;
      break;
    }
    if (round == kCnMaxRounds) {
      throw NumericalError("random_correlation: condition number did not settle within 100 rounds");
    }
    ev(p - 1) = cn * ev(0);
    sigma = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.r0);
  const double lmin = es.eigenvalues()(0);
  model.repeated_min_eigenvalue = es.eigenvalues()(1) - lmin <= 1e-10 * lmin;
  Eigen::VectorXd v = es.eigenvectors().col(0);
  for (Index j = 0; j < v.size(); ++j) {
    if (v(j) != 0.0) {
      if (v(j) < 0.0) v = -v;
      break;
    }
  }
  model.thcm_v = std::sqrt(lmin) * v.normalized();
  return model;
}

DataMatrix contaminate_icm(const DataMatrix& x, double eps, double k, Rng& rng) {
  if (!(eps >= 0.0 && eps < 1.0)) throw std::invalid_argument("contaminate_icm: eps must be in [0, 1)");
  const Index n = x.rows();
  const Index p = x.cols();
  const auto count = static_cast<Index>(std::floor(eps * static_cast<double>(n * p) + 1e-9));
  Eigen::MatrixXd values = x.values();
  DataMatrix::Mask mask = x.mask();
  for (const Index cell : sample_without_replacement(n * p, count, rng)) {
    values(cell / p, cell % p) = k;
    mask(cell / p, cell % p) = true;
  }
  return DataMatrix(std::move(values), std::move(mask));
}

DataMatrix contaminate_thcm(const DataMatrix& x, const TrueModel& model, double eps, double k,
                            Rng& rng) {
  if (!(eps >= 0.0 && eps < 1.0)) throw std::invalid_argument("contaminate_thcm: eps must be in [0, 1)");
  if (model.thcm_v.size() != x.cols()) throw std::invalid_argument("contaminate_thcm: dimension mismatch");
  const Index n = x.rows();
  const auto count = static_cast<Index>(std::floor(eps * static_cast<double>(n) + 1e-9));
  Eigen::MatrixXd values = x.values();
  DataMatrix::Mask mask = x.mask();
  for (const Index i : sample_without_replacement(n, count, rng)) {
    values.row(i) = k * model.thcm_v.transpose();
    mask.row(i).setConstant(true);
  }
  return DataMatrix(std::move(values), std::move(mask));
}

double lrt_distance(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& sigma0) {
  if (sigma.rows() != sigma0.rows() || sigma.cols() != sigma0.cols() || sigma.rows() != sigma.cols()) {
    throw std::invalid_argument("lrt_distance: dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> l0(sigma0);
  Eigen::LLT<Eigen::MatrixXd> l1(sigma);
  if (l0.info() != Eigen::Success || l1.info() != Eigen::Success || !sigma.allFinite()) {
    throw SingularMatrixError("lrt_distance: input is not positive definite");
  }
  // With S0 = L L', tr(S S0^-1) = ||L^-1 S^{1/2}||_F^2 via the factor of S.
  const Eigen::MatrixXd a = l0.matrixL().solve(Eigen::MatrixXd(l1.matrixL()));
  double log_det = 0.0;
  for (Index j = 0; j < sigma.rows(); ++j) {
    log_det += 2.0 * (std::log(l1.matrixLLT()(j, j)) - std::log(l0.matrixLLT()(j, j)));
  }
  return std::max(0.0, a.squaredNorm() - log_det - static_cast<double>(sigma.rows()));
}

DataMatrix sample_model(const TrueModel& model, Index n, Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(model.r0);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("sample_model: R0 is not positive definite");
  Eigen::MatrixXd z = standard_normal_matrix(n, model.r0.rows(), rng);
  Eigen::MatrixXd x = z * llt.matrixL().transpose();
  x.rowwise() += model.mu0.transpose();
  return DataMatrix(std::move(x));
}

std::string_view contamination_name(Contamination c) {
  switch (c) {
    case Contamination::kNone: return "none";
    case Contamination::kIcm: return "icm";
    case Contamination::kThcm: return "thcm";
  }
  return "unknown";
}

Contamination parse_contamination(std::string_view name) {
  if (name == "none" || name == "clean") return Contamination::kNone;
  if (name == "icm") return Contamination::kIcm;
  if (name == "thcm") return Contamination::kThcm;
  throw std::invalid_argument("unknown contamination model '" + std::string(name) + "'");
}

std::vector<double> default_k_grid() {
  std::vector<double> k{1.0};
  for (int v = 5; v <= 100; v += 5) k.push_back(v);
  return k;
}

namespace {

struct Setting {
  Contamination model;
  double eps;
};

struct FitOutcome {
  double lrt = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  double residual = 0.0;
  double seconds = 0.0;
};

FitOutcome fit_one(Method method, const DataMatrix& x, const TrueModel& model, const SimConfig& cfg,
                   std::uint64_t fit_seed) {
  FitOutcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (method == Method::kMle) {
      const Estimate est = em_mle(x);
      out.lrt = lrt_distance(est.sigma, model.r0);
      out.converged = est.converged;
    } else {
      GseConfig gse = cfg.gse;
      gse.seed = fit_seed;
      gse.threads = 1;
      if (method == Method::kTsgs) {
        const TsgsResult res = tsgs(x, cfg.filter, gse);
        out.lrt = lrt_distance(res.estimate.sigma, model.r0);
        out.converged = res.estimate.converged;
        out.residual = constraint_residual(res.filtered, res.estimate);
      } else {
        const Estimate init = emve_init(x, gse);
        const Estimate est = method == Method::kEmve ? init : gse_fit(x, init, gse);
        out.lrt = lrt_distance(est.sigma, model.r0);
        out.converged = est.converged;
        if (method == Method::kGse) out.residual = constraint_residual(x, est);
      }
    }
    if (!std::isfinite(out.lrt)) out.lrt = std::numeric_limits<double>::quiet_NaN();
  } catch (const std::exception&) {
    out.lrt = std::numeric_limits<double>::quiet_NaN();
    out.converged = false;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace

SimReport run_simulation(const SimConfig& cfg) {
  if (cfg.p < 2) throw std::invalid_argument("simulate: p must be at least 2");
  if (cfg.n <= cfg.p) throw std::invalid_argument("simulate: n must exceed p");
  if (cfg.replicates < 1) throw std::invalid_argument("simulate: need at least one replicate");
  if (cfg.estimators.empty()) throw std::invalid_argument("simulate: no estimators selected");
  for (const double e : cfg.eps) {
    if (!(e >= 0.0 && e < 0.5)) throw std::invalid_argument("simulate: eps must be in [0, 0.5)");
  }

  SimReport report;
  report.config = cfg;
  if (cfg.n < 2 * cfg.p) report.warnings.push_back("n < 2p: robust fits may be unstable");

  std::vector<Setting> settings{{Contamination::kNone, 0.0}};
  for (const Contamination m : cfg.models) {
    if (m == Contamination::kNone) continue;
    for (const double e : cfg.eps) settings.push_back({m, e});
  }
  const std::vector<double> clean_k{0.0};
  auto ks_of = [&](std::size_t s) -> const std::vector<double>& {
    return s == 0 ? clean_k : cfg.k_grid;
  };
  std::size_t cells_per_est = 0;
  for (std::size_t s = 0; s < settings.size(); ++s) cells_per_est += ks_of(s).size();
  const std::size_t n_est = cfg.estimators.size();

  const auto reps = static_cast<std::size_t>(cfg.replicates);
  std::vector<std::vector<FitOutcome>> outcomes(reps);
  std::vector<int> repeated_eigen(reps, 0);
  parallel_for(reps, resolve_threads(cfg.threads), [&](std::size_t r) {
    const auto ru = static_cast<std::uint64_t>(r);
    Rng model_rng = make_stream(cfg.seed, {ru, 0});
    const TrueModel model = random_correlation(cfg.p, cfg.cn, model_rng);
    repeated_eigen[r] = model.repeated_min_eigenvalue ? 1 : 0;
    Rng sample_rng = make_stream(cfg.seed, {ru, 1});
    const DataMatrix clean = sample_model(model, cfg.n, sample_rng);

    auto& row = outcomes[r];
    row.resize(n_est * cells_per_est);
    std::size_t cell = 0;
    for (std::size_t s = 0; s < settings.size(); ++s) {
      const auto& ks = ks_of(s);
      for (std::size_t ki = 0; ki < ks.size(); ++ki, ++cell) {
        // Same stream for every k: contamination positions are shared across the grid.
        Rng cont_rng = make_stream(cfg.seed, {ru, 2, static_cast<std::uint64_t>(s)});
        const DataMatrix x = settings[s].model == Contamination::kIcm
                                 ? contaminate_icm(clean, settings[s].eps, ks[ki], cont_rng)
                             : settings[s].model == Contamination::kThcm
                                 ? contaminate_thcm(clean, model, settings[s].eps, ks[ki], cont_rng)
                                 : clean;
        const std::uint64_t fit_seed =
            stream_seed(cfg.seed, {ru, 3, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(ki)});
        for (std::size_t e = 0; e < n_est; ++e) {
          row[e * cells_per_est + cell] = fit_one(cfg.estimators[e], x, model, cfg, fit_seed);
        }
      }
    }
  });

  for (std::size_t e = 0; e < n_est; ++e) {
    EstimatorSummary sum;
    sum.estimator = cfg.estimators[e];
    double seconds = 0.0;
    std::size_t cell = 0;
    for (std::size_t s = 0; s < settings.size(); ++s) {
      const auto& ks = ks_of(s);
      for (std::size_t ki = 0; ki < ks.size(); ++ki, ++cell) {
        SimCell c;
        c.estimator = cfg.estimators[e];
        c.model = settings[s].model;
        c.eps = settings[s].eps;
        c.k = ks[ki];
        double total = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
          const FitOutcome& o = outcomes[r][e * cells_per_est + cell];
          ++sum.fits;
          seconds += o.seconds;
          if (std::isnan(o.lrt)) {
            ++c.failures;
            continue;
          }
          ++c.successes;
          total += o.lrt;
          if (o.converged) {
            ++sum.converged;
            if (sum.estimator != Method::kMle && sum.estimator != Method::kEmve) {
              sum.max_constraint_residual = std::max(sum.max_constraint_residual, o.residual);
            }
          }
        }
        sum.failures += c.failures;
        c.mean_lrt = c.successes > 0 ? total / c.successes : std::numeric_limits<double>::quiet_NaN();
        report.cells.push_back(c);
      }
    }
    sum.clean_mean_lrt = report.cells[e * cells_per_est].mean_lrt;
    if (cfg.time) sum.seconds_per_fit = seconds / static_cast<double>(sum.fits);
    report.summaries.push_back(sum);
  }

  const auto mle = std::find(cfg.estimators.begin(), cfg.estimators.end(), Method::kMle);
  if (mle != cfg.estimators.end()) {
    const double ref = report.summaries[static_cast<std::size_t>(mle - cfg.estimators.begin())].clean_mean_lrt;
    for (auto& sum : report.summaries) {
      if (std::isfinite(ref) && std::isfinite(sum.clean_mean_lrt) && sum.clean_mean_lrt > 0.0) {
        sum.efficiency = ref / sum.clean_mean_lrt;
      }
    }
  }
  int repeated = 0;
  for (const int v : repeated_eigen) repeated += v;
  if (repeated > 0) {
    report.warnings.push_back(std::to_string(repeated) +
                              " replicate(s) had a repeated smallest eigenvalue; THCM used the first eigenvector");
  }
  for (const auto& sum : report.summaries) {
    if (sum.failures > 0) {
      report.warnings.push_back(std::string(method_name(sum.estimator)) + ": " +
                                std::to_string(sum.failures) + " failed fit(s) excluded from the means");
    }
  }
  return report;
}

}  // namespace cellguard
