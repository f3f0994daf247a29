#pragma once

// Normal and chi-square distribution functions.
//
// CDFs are accurate to about 1e-15 absolute; quantiles are polished by
// safeguarded Newton steps until they invert the corresponding CDF (or its
// complement in the upper tail) to about 1e-14 relative. All functions throw
// std::domain_error outside their domain.

namespace cellguard {

double normal_cdf(double x);
double normal_sf(double x);  ///< 1 - normal_cdf(x) without cancellation
double normal_pdf(double x);
double normal_quantile(double q);

/// Regularized lower incomplete gamma P(a, x) and its complement Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

double chi2_pdf(double x, double k);
double chi2_cdf(double x, double k);
double chi2_sf(double x, double k);
double chi2_quantile(double q, double k);
/// Quantile for upper-tail probability `tail`, i.e. chi2_sf(x, k) == tail.
/// Prefer this when `tail` is tiny; 1 - q loses digits.
double chi2_quantile_upper(double tail, double k);

}  // namespace cellguard
