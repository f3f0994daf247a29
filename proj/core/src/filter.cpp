#include "cellguard/filter.hpp"

#include "cellguard/distributions.hpp"
#include "cellguard/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cellguard {

namespace {

void check_config(const FilterConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw std::invalid_argument("filter alpha must lie in (0, 1)");
  }
}

// F+(t) = P(|Z| <= t) for Z ~ N(0, 1).
double abs_normal_cdf(double t) { return std::erf(t / std::sqrt(2.0)); }

// max over order statistics beyond eta of n * F+(|Z|_(i)) - (i - 1), i.e.
// n * d. Working on the n-scaled quantity keeps floor(n * d) exact when
// F+ rounds to 1.
double scaled_excess(std::vector<double> abs_sorted, double eta) {
  const auto n = static_cast<double>(abs_sorted.size());
  const auto first_above =
      std::lower_bound(abs_sorted.begin(), abs_sorted.end(), eta) - abs_sorted.begin();
  double best = 0.0;
  for (auto i = static_cast<std::size_t>(first_above); i < abs_sorted.size(); ++i) {
    // 0-based position i is the (i + 1)-th order statistic.
    best = std::max(best, n * abs_normal_cdf(abs_sorted[i]) - static_cast<double>(i));
  }
  return best;
}

std::vector<double> sorted_abs(std::span<const double> z) {
  std::vector<double> a(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) throw std::invalid_argument("flag_proportion: non-finite value");
    a[i] = std::abs(z[i]);
  }
  std::sort(a.begin(), a.end());
  return a;
}

}  // namespace

double reference_threshold(const FilterConfig& cfg) {
  check_config(cfg);
  return normal_quantile(0.5 * (1.0 + cfg.alpha));
}

double flag_proportion(std::span<const double> z, const FilterConfig& cfg) {
  const double eta = reference_threshold(cfg);
  if (z.empty()) return 0.0;
  return scaled_excess(sorted_abs(z), eta) / static_cast<double>(z.size());
}

std::size_t flag_count(std::size_t n, double d) {
  if (!(d >= 0.0 && d <= 1.0)) throw std::invalid_argument("flag proportion must lie in [0, 1]");
  const double m = std::floor(static_cast<double>(n) * d + 1e-9);
  return std::min(n, static_cast<std::size_t>(m));
}

CutoffResult adaptive_cutoff(std::span<const double> z, double d) {
  const std::size_t n = z.size();
  const std::size_t m = flag_count(n, d);
  CutoffResult out{std::numeric_limits<double>::infinity(), {}};
  if (m == 0) return out;

  // Order by (|Z|, position); the last m entries are flagged, so the later
  // position wins a tie at the boundary.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double za = std::abs(z[a]);
    const double zb = std::abs(z[b]);
    return za < zb || (za == zb && a < b);
  });
  out.cutoff = m < n ? std::abs(z[order[n - m - 1]]) : 0.0;
  out.flagged.assign(order.end() - static_cast<std::ptrdiff_t>(m), order.end());
  std::sort(out.flagged.begin(), out.flagged.end());
  return out;
}

std::pair<DataMatrix, FilterResult> apply_filter(const DataMatrix& x, const FilterConfig& cfg) {
  check_config(cfg);
  FilterResult result;
  result.summaries = column_summaries(x);
  const auto p = static_cast<std::size_t>(x.cols());
  result.d.resize(p);
  result.cutoff.resize(p);
  result.flag_counts.resize(p);
  result.mask_out = x.mask();

  for (Index j = 0; j < x.cols(); ++j) {
    const ColumnSummary& s = result.summaries[static_cast<std::size_t>(j)];
    std::vector<Index> rows;
    std::vector<double> z;
    for (Index i = 0; i < x.rows(); ++i) {
      if (!x.observed(i, j)) continue;
      rows.push_back(i);
      z.push_back((x(i, j) - s.center) / s.scale);
    }
    const double d = flag_proportion(z, cfg);
    const CutoffResult cut = adaptive_cutoff(z, d);
    result.d[static_cast<std::size_t>(j)] = d;
    result.cutoff[static_cast<std::size_t>(j)] = cut.cutoff;
    result.flag_counts[static_cast<std::size_t>(j)] = cut.flagged.size();
    for (const std::size_t pos : cut.flagged) result.mask_out(rows[pos], j) = false;
  }

  Index complete_rows = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      if (x.observed(i, j) && !result.mask_out(i, j)) result.flagged.emplace_back(i, j);
    }
    const Index observed = result.mask_out.row(i).count();
    if (observed == x.cols()) ++complete_rows;
    if (observed == 0) {
      result.dropped_rows.push_back(i);
    } else {
      result.kept_rows.push_back(i);
    }
  }
  result.q_n = static_cast<double>(complete_rows) / static_cast<double>(x.rows());

  if (result.kept_rows.size() < 2) {
    throw NumericalError("filtering left fewer than two rows with observed cells");
  }
  DataMatrix filtered = x.with_mask(result.mask_out);
  if (!result.dropped_rows.empty()) filtered = filtered.select_rows(result.kept_rows);
  return {std::move(filtered), std::move(result)};
}

}  // namespace cellguard
