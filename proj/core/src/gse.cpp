#include "cellguard/estimators.hpp"
#include "cellguard/errors.hpp"
#include "cellguard/parallel.hpp"
#include "cellguard/rng.hpp"
#include "cellguard/robust_scale.hpp"
#include "completion.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace cellguard {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kMle: return "mle";
    case Method::kEmve: return "emve";
    case Method::kGse: return "gse";
    case Method::kTsgs: return "tsgs";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "mle") return Method::kMle;
  if (name == "emve") return Method::kEmve;
  if (name == "gse") return Method::kGse;
  if (name == "tsgs") return Method::kTsgs;
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

namespace {

constexpr RhoConfig kBisquare{RhoFamily::kBisquare, 0.5};
constexpr RhoConfig kHard{RhoFamily::kHardRejection, 0.5};
constexpr int kMaxHalvings = 10;
// Near the minimum s_GS is flat to rounding while the parameters still
// move, so a step may leave s unchanged within this relative slack.
constexpr double kDescentSlack = 1e-12;
constexpr double kParameterTol = 1e-10;

double log_det_spd(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("scatter matrix is not positive definite");
  double s = 0.0;
  for (Index k = 0; k < a.rows(); ++k) s += std::log(llt.matrixLLT()(k, k));
  return 2.0 * s;
}

Eigen::MatrixXd unit_determinant(const Eigen::MatrixXd& a) {
  return a * std::exp(-log_det_spd(a) / static_cast<double>(a.rows()));
}

// Hard-rejection scale s(mu, Sigma, Sigma): weighted median of d_i / c_{p_i}.
double hard_scale(const DataMatrix& x, const MaskPatterns& patterns, const Eigen::VectorXd& mu,
                  const Eigen::MatrixXd& sigma, const TuningTable& hard) {
  const RowDistances rd = row_distances(x, patterns, mu, sigma);
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<double> t(n);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = hard[patterns.row_dims()[i]];
    t[i] = rd.d(static_cast<Index>(i)) / c;
    w[i] = c;
  }
  return solve_mscale(t, w, kHard);
}

struct Candidate {
  double score = std::numeric_limits<double>::infinity();
  std::size_t id = 0;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  bool valid = false;

  bool better_than(const Candidate& o) const {
    if (!valid) return false;
    if (!o.valid) return true;
    return score < o.score || (score == o.score && id < o.id);
  }
};

std::optional<Estimate> try_em(const DataMatrix& x, std::span<const Index> rows, const EmConfig& cfg) {
  const DataMatrix sub = x.select_rows(rows);
  for (Index j = 0; j < sub.cols(); ++j) {
    if (sub.observed_in_column(j) == 0) return std::nullopt;
  }
  try {
    return em_mle(sub, cfg);
  } catch (const SingularMatrixError&) {
    return std::nullopt;
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

// Smallest t_(k) whose covered weight sum_{t_i <= t_(k)} w_i exceeds half
// the total. With an even count this is the upper of the two middle values,
// so an ellipsoid has to cover more than half the rows.
double covering_median(const std::vector<double>& t, const std::vector<double>& w) {
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return t[a] < t[b] || (t[a] == t[b] && a < b); });
  double total = 0.0;
  for (const double v : w) total += v;
  double covered = 0.0;
  for (const std::size_t k : order) {
    covered += w[k];
    if (covered > 0.5 * total * (1.0 + 1e-14)) return t[k];
  }
  return t[order.back()];
}

// Per-row log volume of the diagonal of squared column MADs over the
// observed cells. Dividing each block volume by it keeps the score ranking
// unchanged when columns are rescaled.
Eigen::VectorXd reference_log_dets(const DataMatrix& x, const MaskPatterns& patterns) {
  Eigen::VectorXd col(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    std::vector<double> v;
    for (Index i = 0; i < x.rows(); ++i) {
      if (x.observed(i, j)) v.push_back(x(i, j));
    }
    const double scale = v.empty() ? 0.0 : mad(v, median(v));
    col(j) = scale > 0.0 ? 2.0 * std::log(scale) : 0.0;
  }
  Eigen::VectorXd out(x.rows());
  for (const auto& pat : patterns.patterns()) {
    double ld = 0.0;
    for (const Index j : pat.observed) ld += col(j);
    for (const Index i : pat.rows) out(i) = ld;
  }
  return out;
}

// Volume score: covering median of d_i (|Sigma^(u_i)| / |D^(u_i)|)^{1/p_i} / c_{p_i}
// with D the squared column MADs. Each row is measured against its own
// observed block, so a fit that is nearly singular in a direction most rows
// do not fully observe still pays for it.
void score_candidate(const DataMatrix& x, const MaskPatterns& patterns, const Eigen::VectorXd& ref,
                     const TuningTable& hard, Candidate& cand) {
  try {
    const RowDistances rd = row_distances(x, patterns, cand.mu, cand.sigma);
    const auto n = static_cast<std::size_t>(x.rows());
    std::vector<double> t(n);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int k = patterns.row_dims()[i];
      const auto ii = static_cast<Index>(i);
      w[i] = hard[k];
      t[i] = rd.d(ii) * std::exp((rd.log_det(ii) - ref(ii)) / k) / w[i];
    }
    cand.score = covering_median(t, w);
    cand.valid = std::isfinite(cand.score) && cand.score > 0.0;
  } catch (const Error&) {
    cand.valid = false;
  }
}

// Concentration: refit on the floor(n/2) + 1 rows with smallest
// d_i / c_{p_i}, the fewest rows the covering median can rest on.
void concentrate(const DataMatrix& x, const MaskPatterns& patterns, const Eigen::VectorXd& ref,
                 const TuningTable& hard, const GseConfig& cfg, Candidate& best) {
  const Index n = x.rows();
  const Index h = n / 2 + 1;
  Candidate cur = best;
  for (int step = 0; step < cfg.concentration_steps; ++step) {
    RowDistances rd;
    try {
      rd = row_distances(x, patterns, cur.mu, cur.sigma);
    } catch (const Error&) {
      return;
    }
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::vector<double> t(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      t[static_cast<std::size_t>(i)] = rd.d(i) / hard[patterns.row_dims()[static_cast<std::size_t>(i)]];
    }
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return t[static_cast<std::size_t>(a)] < t[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(h));
    std::sort(order.begin(), order.end());
    const auto fit = try_em(x, order, cfg.emve_em);
    if (!fit) return;
    cur.mu = fit->mu;
    cur.sigma = fit->sigma;
    score_candidate(x, patterns, ref, hard, cur);
    if (!cur.valid) return;
    if (cur.score < best.score) best = cur;
  }
}

// Per-row quantities of one GSE state.
struct GseState {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  detail::Completion comp;
  std::vector<double> t;  ///< t_i without the scale
  double s = 0.0;
};

// Largest step in mu and Sigma, each entry scaled by the current
// dispersions, so the measure is unchanged by rescaling coordinates.
double parameter_change(const GseState& a, const GseState& b) {
  const Index p = a.mu.size();
  double m = 0.0;
  for (Index j = 0; j < p; ++j) {
    const double sj = std::sqrt(a.sigma(j, j));
    m = std::max(m, std::abs(b.mu(j) - a.mu(j)) / sj);
    for (Index k = 0; k <= j; ++k) {
      m = std::max(m, std::abs(b.sigma(j, k) - a.sigma(j, k)) / (sj * std::sqrt(a.sigma(k, k))));
    }
  }
  return m;
}

GseState evaluate(const DataMatrix& x, const MaskPatterns& patterns, const Eigen::VectorXd& omega_ld,
                  const std::vector<double>& weights, const TuningTable& tuning, Eigen::VectorXd mu,
                  Eigen::MatrixXd sigma) {
  GseState st;
  st.comp = detail::complete_rows(x, patterns, mu, sigma);
  st.mu = std::move(mu);
  st.sigma = std::move(sigma);
  const auto n = static_cast<std::size_t>(x.rows());
  st.t.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Index>(i);
    const int k = patterns.row_dims()[i];
    st.t[i] = st.comp.d(ii) * std::exp((st.comp.log_det(ii) - omega_ld(ii)) / k) / tuning[k];
  }
  st.s = solve_mscale(st.t, weights, tuning.config());
  return st;
}

// Weighted completed-data update of (mu, Sigma) from state `st`.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> gse_update(const MaskPatterns& patterns,
                                                       const Eigen::VectorXd& omega_ld,
                                                       const GseState& st) {
  const Index n = st.comp.x_hat.rows();
  Eigen::VectorXd omega(n);
  Eigen::VectorXd kappa(n);
  for (Index i = 0; i < n; ++i) {
    const int k = patterns.row_dims()[static_cast<std::size_t>(i)];
    const double u = st.t[static_cast<std::size_t>(i)] / st.s;
    omega(i) = rho_derivative(u) * std::exp((st.comp.log_det(i) - omega_ld(i)) / k);
    kappa(i) = st.comp.d(i) / k;
  }
  const double total = omega.sum();
  if (!(total > 0.0)) throw NumericalError("gse_fit: all weights vanished");
  const Eigen::VectorXd mu = (st.comp.x_hat.transpose() * omega) / total;
  const Eigen::MatrixXd centered = st.comp.x_hat.rowwise() - mu.transpose();
  Eigen::MatrixXd sigma = centered.transpose() * omega.asDiagonal() * centered;
  for (std::size_t g = 0; g < patterns.patterns().size(); ++g) {
    const auto& pat = patterns.patterns()[g];
    if (pat.missing.empty()) continue;
    double wsum = 0.0;
    for (const Index i : pat.rows) wsum += omega(i) * kappa(i);
    if (wsum != 0.0) detail::add_missing_block(sigma, pat, st.comp.missing_cov[g], wsum);
  }
  sigma = 0.5 * (sigma + sigma.transpose());
  return {mu, unit_determinant(sigma)};
}

}  // namespace

Estimate emve_init(const DataMatrix& x, const GseConfig& cfg) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (cfg.emve_subsamples < 1) throw std::invalid_argument("emve_init: need at least one subsample");
  const Index m = std::min<Index>(n, cfg.emve_subsample_size > 0 ? cfg.emve_subsample_size : 2 * (p + 1));
  if (m <= p) throw std::invalid_argument("emve_init: subsample size must exceed p");
  const auto hard = TuningTable::cached(static_cast<int>(p), kHard);
  const MaskPatterns patterns(x.mask());
  const Eigen::VectorXd ref = reference_log_dets(x, patterns);

  const auto count = static_cast<std::size_t>(cfg.emve_subsamples);
  std::vector<Candidate> cands(count);
  parallel_for(count, resolve_threads(cfg.threads), [&](std::size_t j) {
    Rng rng = make_stream(cfg.seed, {static_cast<std::uint64_t>(j)});
    std::vector<Index> rows = sample_without_replacement(n, m, rng);
    std::sort(rows.begin(), rows.end());
    Candidate& c = cands[j];
    c.id = j;
    const auto fit = try_em(x, rows, cfg.emve_em);
    if (!fit) return;
    c.mu = fit->mu;
    c.sigma = fit->sigma;
    score_candidate(x, patterns, ref, *hard, c);
  });

  std::vector<std::size_t> ranked;
  for (std::size_t j = 0; j < count; ++j) {
    if (cands[j].valid) ranked.push_back(j);
  }
  if (ranked.empty()) throw NumericalError("emve_init: every subsample was singular");
  std::sort(ranked.begin(), ranked.end(),
            [&](std::size_t a, std::size_t b) { return cands[a].better_than(cands[b]); });
  ranked.resize(std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(std::max(1, cfg.emve_refined))));

  parallel_for(ranked.size(), resolve_threads(cfg.threads),
               [&](std::size_t r) { concentrate(x, patterns, ref, *hard, cfg, cands[ranked[r]]); });

  const Candidate* best = &cands[ranked.front()];
  for (const std::size_t j : ranked) {
    if (cands[j].better_than(*best)) best = &cands[j];
  }

  Estimate est;
  est.method = Method::kEmve;
  est.mu = best->mu;
  est.sigma = best->sigma * hard_scale(x, patterns, best->mu, best->sigma, *hard);
  est.scale = best->score;
  est.iterations = cfg.concentration_steps;
  est.converged = true;
  return est;
}

Estimate gse_fit(const DataMatrix& x, const Estimate& omega, const GseConfig& cfg) {
  const Index p = x.cols();
  if (omega.mu.size() != p || omega.sigma.rows() != p || omega.sigma.cols() != p) {
    throw std::invalid_argument("gse_fit: initial estimate has the wrong dimension");
  }
  const auto tuning = TuningTable::cached(static_cast<int>(p), kBisquare);
  const MaskPatterns patterns(x.mask());
  const Eigen::VectorXd omega_ld = pattern_log_dets(patterns, omega.sigma);
  std::vector<double> weights(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = (*tuning)[patterns.row_dims()[i]];

  GseState st = evaluate(x, patterns, omega_ld, weights, *tuning, omega.mu, unit_determinant(omega.sigma));
  Estimate est;
  est.method = Method::kGse;
  est.scale_trace.push_back(st.s);
  for (int it = 1; it <= cfg.max_iter; ++it) {
    auto [mu_new, sigma_new] = gse_update(patterns, omega_ld, st);
    std::optional<GseState> next;
    double step = 1.0;
    for (int h = 0; h <= kMaxHalvings; ++h, step *= 0.5) {
      Eigen::VectorXd mu_try = h == 0 ? mu_new : Eigen::VectorXd(st.mu + step * (mu_new - st.mu));
      Eigen::MatrixXd sigma_try =
          h == 0 ? sigma_new : unit_determinant((1.0 - step) * st.sigma + step * sigma_new);
      try {
        GseState trial = evaluate(x, patterns, omega_ld, weights, *tuning, std::move(mu_try),
                                  std::move(sigma_try));
        if (trial.s <= st.s * (1.0 + kDescentSlack)) {
          next = std::move(trial);
          break;
        }
      } catch (const Error&) {
        // A singular or unscalable trial point counts as no descent.
      }
    }
    est.iterations = it;
    if (!next) {
      // No descent along the update direction: stationary to working precision.
      est.converged = true;
      break;
    }
    const double decrease = (st.s - next->s) / st.s;
    const double change = parameter_change(st, *next);
    st = std::move(*next);
    est.scale_trace.push_back(st.s);
    if (decrease <= cfg.tol && change <= kParameterTol) {
      est.converged = true;
      break;
    }
  }

  const RowDistances rd = row_distances(x, patterns, st.mu, st.sigma);
  std::vector<double> t(weights.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rd.d(static_cast<Index>(i)) / weights[i];
  const double self_scale = solve_mscale(t, weights, kBisquare);
  est.mu = st.mu;
  est.sigma = st.sigma * self_scale;
  est.scale = st.s;
  return est;
}

std::vector<Index> canonical_row_order(const DataMatrix& x) {
  std::vector<Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  const Index p = x.cols();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    for (Index j = 0; j < p; ++j) {
      const bool oa = x.observed(a, j);
      const bool ob = x.observed(b, j);
      if (oa != ob) return oa && !ob;
    }
    for (Index j = 0; j < p; ++j) {
      if (!x.observed(a, j)) continue;
      if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
    }
    return false;
  });
  return order;
}

TsgsResult tsgs(const DataMatrix& x, const FilterConfig& filter_cfg, const GseConfig& gse_cfg) {
  const std::vector<Index> order = canonical_row_order(x);
  const DataMatrix sorted = x.select_rows(order);
  auto [filtered, fr] = apply_filter(sorted, filter_cfg);

  // Report the filter in the caller's row numbering.
  for (auto& r : fr.kept_rows) r = order[static_cast<std::size_t>(r)];
  for (auto& r : fr.dropped_rows) r = order[static_cast<std::size_t>(r)];
  std::sort(fr.dropped_rows.begin(), fr.dropped_rows.end());
  for (auto& cell : fr.flagged) cell.first = order[static_cast<std::size_t>(cell.first)];
  std::sort(fr.flagged.begin(), fr.flagged.end());
  DataMatrix::Mask mask(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) mask.row(order[static_cast<std::size_t>(i)]) = fr.mask_out.row(i);
  fr.mask_out = std::move(mask);

  for (Index j = 0; j < filtered.cols(); ++j) {
    if (filtered.observed_in_column(j) == 0) {
      throw DegenerateColumnError(static_cast<long>(j),
                                  "column " + std::to_string(j) + " is entirely missing after filtering");
    }
  }
  const Estimate init = emve_init(filtered, gse_cfg);
  TsgsResult out{gse_fit(filtered, init, gse_cfg), std::move(fr), filtered};
  out.estimate.method = Method::kTsgs;
  return out;
}

double constraint_residual(const DataMatrix& x, const Estimate& est) {
  const auto tuning = TuningTable::cached(static_cast<int>(x.cols()), kBisquare);
  const ScaleProblem problem{est.mu, est.sigma, est.sigma, &x};
  return std::abs(generalized_mscale(problem, *tuning) - 1.0);
}

}  // namespace cellguard
