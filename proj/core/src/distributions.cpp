#include "cellguard/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace cellguard {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = std::numeric_limits<double>::min() / kEps;

void require(bool ok, const char* what) {
  if (!ok) throw std::domain_error(what);
}

// Wichura's AS 241 (PPND16), about 1e-16 relative accuracy.
double ppnd16(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
              6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
            1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
          1.3314166789178437745e+2) * r + 3.3871328727963666080e0);
    const double den =
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
              3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
            5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
    value = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    value = num / den;
  }
  return q < 0.0 ? -value : value;
}

// log(x^a e^-x / Gamma(a)), the common prefactor of P and Q.
double gamma_log_prefactor(double a, double x) {
  return a * std::log(x) - x - std::lgamma(a);
}

double gamma_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double term = sum;
  for (int n = 0; n < 10000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(gamma_log_prefactor(a, x));
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
double gamma_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return std::exp(gamma_log_prefactor(a, x)) * h;
}

// Solves F(x) = target for a continuous increasing F on (0, inf) given its
// derivative, by Newton steps confined to a shrinking bracket.
template <class F, class Fprime>
double invert_increasing(F f, Fprime fprime, double x0) {
  double lo = 0.0;
  double hi = std::max(x0, 1.0);
  while (f(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw std::domain_error("quantile bracket overflow");
  }
  double x = (x0 > lo && x0 < hi) ? x0 : 0.5 * (lo + hi);
  for (int it = 0; it < 300; ++it) {
    const double fx = f(x);
    if (fx == 0.0) return x;
    if (fx < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double slope = fprime(x);
    double next = (slope > 0.0 && std::isfinite(slope)) ? x - fx / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 4.0 * kEps * std::abs(x) || hi - lo <= 4.0 * kEps * hi) {
      return next;
    }
    x = next;
  }
  return x;
}

}  // namespace

double normal_cdf(double x) {
  require(!std::isnan(x), "normal_cdf: NaN argument");
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_sf(double x) {
  require(!std::isnan(x), "normal_sf: NaN argument");
  return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_quantile(double q) {
  require(q > 0.0 && q < 1.0, "normal_quantile: probability must lie in (0, 1)");
  double x = ppnd16(q);
  // One Newton polish against the erfc-based CDF, on the tail that keeps digits.
  for (int i = 0; i < 2; ++i) {
    const double pdf = normal_pdf(x);
    if (!(pdf > 0.0)) break;
    const double err = x > 0.0 ? (1.0 - q) - normal_sf(x) : normal_cdf(x) - q;
    x -= err / pdf;
  }
  return x;
}

double gamma_p(double a, double x) {
  require(a > 0.0, "gamma_p: shape must be positive");
  require(x >= 0.0, "gamma_p: argument must be non-negative");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double gamma_q(double a, double x) {
  require(a > 0.0, "gamma_q: shape must be positive");
  require(x >= 0.0, "gamma_q: argument must be non-negative");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_series(a, x);
  return gamma_continued_fraction(a, x);
}

double chi2_pdf(double x, double k) {
  require(k > 0.0, "chi2_pdf: degrees of freedom must be positive");
  require(x >= 0.0, "chi2_pdf: argument must be non-negative");
  if (x == 0.0) {
    if (k < 2.0) return std::numeric_limits<double>::infinity();
    return k == 2.0 ? 0.5 : 0.0;
  }
  const double h = 0.5 * k;
  return std::exp((h - 1.0) * std::log(x) - 0.5 * x - h * std::numbers::ln2 - std::lgamma(h));
}

double chi2_cdf(double x, double k) {
  require(k > 0.0, "chi2_cdf: degrees of freedom must be positive");
  require(!std::isnan(x), "chi2_cdf: NaN argument");
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * k, 0.5 * x);
}

double chi2_sf(double x, double k) {
  require(k > 0.0, "chi2_sf: degrees of freedom must be positive");
  require(!std::isnan(x), "chi2_sf: NaN argument");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * k, 0.5 * x);
}

namespace {

// Starting point from the Wilson-Hilferty cube-root approximation; `z` is the
// standard normal quantile of the target lower-tail probability.
double wilson_hilferty(double z, double k) {
  const double c = 2.0 / (9.0 * k);
  const double t = 1.0 - c + z * std::sqrt(c);
  const double guess = k * t * t * t;
  return guess > 0.0 ? guess : 1e-3 * k;
}

}  // namespace

double chi2_quantile(double q, double k) {
  require(q > 0.0 && q < 1.0, "chi2_quantile: probability must lie in (0, 1)");
  require(k > 0.0, "chi2_quantile: degrees of freedom must be positive");
  // For q > 1/2 the complement 1 - q is exact, and the upper tail keeps digits.
  if (q > 0.5) return chi2_quantile_upper(1.0 - q, k);
  return invert_increasing([&](double x) { return chi2_cdf(x, k) - q; },
                           [&](double x) { return chi2_pdf(x, k); },
                           wilson_hilferty(normal_quantile(q), k));
}

double chi2_quantile_upper(double tail, double k) {
  require(tail > 0.0 && tail < 1.0, "chi2_quantile_upper: probability must lie in (0, 1)");
  require(k > 0.0, "chi2_quantile_upper: degrees of freedom must be positive");
  const double guess = wilson_hilferty(-normal_quantile(std::max(tail, 1e-300)), k);
  return invert_increasing([&](double x) { return tail - chi2_sf(x, k); },
                           [&](double x) { return chi2_pdf(x, k); }, guess);
}

}  // namespace cellguard
