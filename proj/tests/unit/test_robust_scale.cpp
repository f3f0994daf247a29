#include "cellguard/errors.hpp"
#include "cellguard/rng.hpp"
#include "cellguard/robust_scale.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

using namespace cellguard;

namespace {

// E[rho(Q / c)] by adaptive Gauss-Kronrod against the chi-square density.
double quadrature_expectation(double c, int k) {
  const boost::math::chi_squared_distribution<double> cd(k);
  auto f = [&](double q) { return rho(q / c) * boost::math::pdf(cd, q); };
  double inner = 0.0;
  if (k == 1) {
    // integrable singularity at 0: substitute q = u^2
    auto g = [&](double u) { return 2.0 * u * f(u * u); };
    inner = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, 0.0, std::sqrt(c), 15, 1e-14);
  } else {
    inner = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, c, 15, 1e-14);
  }
  return inner + boost::math::cdf(boost::math::complement(cd, c));
}

}  // namespace

TEST(Rho, PointValues) {
  EXPECT_EQ(rho(0.0), 0.0);
  EXPECT_DOUBLE_EQ(rho(0.5), 0.875);
  EXPECT_EQ(rho(2.0), 1.0);
  EXPECT_EQ(rho(1.0), 1.0);
  EXPECT_THROW(rho(-0.1), std::domain_error);
  EXPECT_EQ(rho(0.7, RhoFamily::kHardRejection), 0.0);
  EXPECT_EQ(rho(1.2, RhoFamily::kHardRejection), 1.0);
}

TEST(Rho, BoundedMonotoneAndIncreasingAtZero) {
  double prev = rho(0.0);
  for (double u = 1e-6; u < 3.0; u += 1e-3) {
    const double r = rho(u);
    EXPECT_GE(r, prev);
    EXPECT_LE(r, 1.0);
    if (u < 1.0) EXPECT_GT(r, prev);
    prev = r;
  }
  EXPECT_GT(rho(1e-9), 0.0);
  EXPECT_NEAR(rho_derivative(0.25), 3.0 * 0.75 * 0.75, 1e-15);
  EXPECT_EQ(rho_derivative(1.5), 0.0);
}

TEST(Rho, NumericDerivative) {
  for (double u = 0.01; u < 0.99; u += 0.07) {
    const double h = 1e-6;
    EXPECT_NEAR(rho_derivative(u), (rho(u + h) - rho(u - h)) / (2 * h), 1e-7);
  }
}

TEST(TuningConstant, AgreesWithQuadrature) {
  for (const int k : {1, 2, 3, 5, 10, 20, 50}) {
    const double c = tuning_constant(k);
    EXPECT_NEAR(quadrature_expectation(c, k), 0.5, 1e-10) << k;
    EXPECT_NEAR(bisquare_expectation(c, k), quadrature_expectation(c, k), 1e-12) << k;
  }
  for (const double b : {0.2, 0.4, 0.7}) {
    const double c = tuning_constant(4, b);
    EXPECT_NEAR(quadrature_expectation(c, 4), b, 1e-10) << b;
  }
}

TEST(TuningConstant, AtLeastChiSquareMedian) {
  for (int k = 1; k <= 30; ++k) {
    const boost::math::chi_squared_distribution<double> cd(k);
    EXPECT_GE(tuning_constant(k), boost::math::quantile(cd, 0.5)) << k;
  }
  EXPECT_GE(tuning_constant(1), 0.4549);
  EXPECT_GT(tuning_constant(20), tuning_constant(10));
}

TEST(TuningConstant, MonteCarloMeanIsHalf) {
  Rng rng(2024);
  for (const int k : {1, 10}) {
    std::chi_squared_distribution<double> q(k);
    const double c = tuning_constant(k);
    double sum = 0.0;
    const int draws = 200000;
    for (int i = 0; i < draws; ++i) sum += rho(q(rng) / c);
    EXPECT_NEAR(sum / draws, 0.5, 0.005) << k;
  }
}

TEST(TuningTable, CachedIsBitIdentical) {
  const auto a = TuningTable::cached(12);
  const auto b = TuningTable::cached(8);
  const TuningTable fresh = TuningTable::compute(12);
  for (int k = 1; k <= 8; ++k) {
    EXPECT_EQ((*a)[k], (*b)[k]);
    EXPECT_EQ((*a)[k], fresh[k]);
  }
  EXPECT_THROW((*a)[0], std::out_of_range);
  RhoConfig hard{RhoFamily::kHardRejection, 0.5};
  const auto h = TuningTable::cached(5, hard);
  const boost::math::chi_squared_distribution<double> cd(5);
  EXPECT_NEAR((*h)[5], boost::math::quantile(cd, 0.5), 1e-12);
}

TEST(PartialMahalanobis, HandExamples) {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd sigma(2, 2);
  sigma << 4, 0, 0, 1;
  const double x[2] = {2.0, 0.0};
  const bool both[2] = {true, true};
  auto r = partial_mahalanobis(x, both, mu, sigma);
  EXPECT_NEAR(r.d, 1.0, 1e-15);
  EXPECT_NEAR(r.d_star, 2.0, 1e-15);
  EXPECT_EQ(r.p_i, 2);

  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  const double y[2] = {std::nan(""), 3.0};
  const bool second[2] = {false, true};
  r = partial_mahalanobis(y, second, mu, id);
  EXPECT_NEAR(r.d, 9.0, 1e-15);
  EXPECT_NEAR(r.d_star, 9.0, 1e-15);
  EXPECT_EQ(r.p_i, 1);

  const double z[2] = {0.0, 0.0};
  r = partial_mahalanobis(z, both, mu, sigma);
  EXPECT_EQ(r.d, 0.0);
  EXPECT_EQ(r.d_star, 0.0);
}

TEST(PartialMahalanobis, SingularBlock) {
  Eigen::MatrixXd s(2, 2);
  s << 1, 1, 1, 1;
  const double x[2] = {1.0, 2.0};
  const bool both[2] = {true, true};
  EXPECT_THROW(partial_mahalanobis(x, both, Eigen::VectorXd::Zero(2), s), SingularMatrixError);
}

TEST(RowDistances, AgreeWithPerRowComputation) {
  Rng rng(4);
  const Index n = 40;
  const Index p = 5;
  Eigen::MatrixXd m = standard_normal_matrix(n, p, rng);
  DataMatrix::Mask mask = DataMatrix::Mask::Constant(n, p, true);
  std::bernoulli_distribution miss(0.3);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 1; j < p; ++j) mask(i, j) = !miss(rng);
  }
  const DataMatrix x(m, mask);
  const Eigen::MatrixXd a = standard_normal_matrix(p, p, rng);
  const Eigen::MatrixXd sigma = a * a.transpose() + Eigen::MatrixXd::Identity(p, p);
  const Eigen::VectorXd mu = standard_normal_matrix(p, 1, rng);
  const MaskPatterns patterns(mask);
  const auto rd = row_distances(x, patterns, mu, sigma);
  for (Index i = 0; i < n; ++i) {
    std::vector<double> row(static_cast<std::size_t>(p));
    std::vector<char> obs(static_cast<std::size_t>(p));
    std::vector<Index> idx;
    for (Index j = 0; j < p; ++j) {
      row[static_cast<std::size_t>(j)] = x(i, j);
      if (mask(i, j)) idx.push_back(j);
    }
    const Eigen::MatrixXd block = sigma(idx, idx);
    Eigen::VectorXd r(static_cast<Index>(idx.size()));
    for (std::size_t a2 = 0; a2 < idx.size(); ++a2) r(static_cast<Index>(a2)) = x(i, idx[a2]) - mu(idx[a2]);
    const double d = r.dot(block.ldlt().solve(r));
    EXPECT_NEAR(rd.d(i), d, 1e-10 * (1.0 + d));
    EXPECT_NEAR(rd.log_det(i), std::log(block.determinant()), 1e-10);
  }
  const auto ld = pattern_log_dets(patterns, sigma);
  EXPECT_LT((ld - rd.log_det).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MScale, AnalyticEqualDistances) {
  const int p = 3;
  const auto table = TuningTable::cached(p);
  const double cp = (*table)[p];
  const Index n = 10;
  // rows (a, 0, 0) under Sigma = I give d* = a^2
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, p);
  for (Index i = 0; i < n; ++i) m(i, 0) = (i % 2 ? 1.5 : -1.5);
  const DataMatrix x(m);
  ScaleProblem prob{Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Identity(p, p), Eigen::MatrixXd::Identity(p, p), &x};
  const double expected = 2.25 / (cp * (1.0 - std::pow(2.0, -1.0 / 3.0)));
  EXPECT_NEAR(generalized_mscale(prob, *table), expected, 1e-9 * expected);
  EXPECT_NEAR(1.0 - std::pow(2.0, -1.0 / 3.0), 0.20630, 1e-5);
}

TEST(MScale, ScaleInvarianceAndHomogeneity) {
  Rng rng(9);
  const Index p = 4;
  Eigen::MatrixXd m = standard_normal_matrix(30, p, rng);
  DataMatrix::Mask mask = DataMatrix::Mask::Constant(30, p, true);
  for (Index i = 0; i < 30; i += 3) mask(i, i % p) = false;
  const DataMatrix x(m, mask);
  const auto table = TuningTable::cached(p);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(p, p);
  sigma(0, 1) = sigma(1, 0) = 0.4;
  ScaleProblem prob{Eigen::VectorXd::Zero(p), sigma, sigma, &x};
  const double s0 = generalized_mscale(prob, *table);
  ScaleProblem scaled = prob;
  scaled.sigma = 7.5 * sigma;
  EXPECT_NEAR(generalized_mscale(scaled, *table), s0, 1e-9 * s0);

  // doubling every d* on complete data doubles s
  const DataMatrix c(m);
  ScaleProblem full{Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Identity(p, p), Eigen::MatrixXd::Identity(p, p), &c};
  const DataMatrix c2(std::sqrt(2.0) * m);
  ScaleProblem full2 = full;
  full2.data = &c2;
  const double a = generalized_mscale(full, *table);
  EXPECT_NEAR(generalized_mscale(full2, *table), 2.0 * a, 1e-9 * a);
}

TEST(MScale, SolvesEquationAndResidualIsMonotone) {
  std::mt19937_64 rng(31);
  std::exponential_distribution<double> e(1.0);
  std::uniform_real_distribution<double> w(0.3, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> t(25);
    std::vector<double> ww(25);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = e(rng);
      ww[i] = w(rng);
    }
    const RhoConfig cfg{};
    const double s = solve_mscale(t, ww, cfg);
    EXPECT_LE(std::abs(mscale_residual(t, ww, cfg, s)), 1e-8);
    double prev = mscale_residual(t, ww, cfg, s / 16.0);
    for (double f = s / 16.0; f < 16.0 * s; f *= 1.1) {
      const double r = mscale_residual(t, ww, cfg, f);
      EXPECT_LE(r, prev + 1e-15);
      prev = r;
    }
  }
}

TEST(MScale, HardRejectionIsWeightedMedian) {
  const std::vector<double> t{5, 1, 3, 2, 4};
  const std::vector<double> w{1, 1, 1, 1, 1};
  const double s = solve_mscale(t, w, {RhoFamily::kHardRejection, 0.5});
  EXPECT_LE(std::abs(mscale_residual(t, w, {RhoFamily::kHardRejection, 0.5}, s)), 0.21);
  EXPECT_NEAR(s, 3.0, 1e-12);
}

TEST(MScale, DegenerateDistances) {
  const std::vector<double> t(10, 0.0);
  const std::vector<double> w(10, 1.0);
  EXPECT_THROW(solve_mscale(t, w, {}), NumericalError);
}

TEST(MScale, OneDimensionalGridOracle) {
  // s solving mean rho(x_i^2 / (c_1 s)) = 1/2, found by a fine scan.
  Rng rng(77);
  const Eigen::MatrixXd m = standard_normal_matrix(15, 1, rng);
  const DataMatrix x(m);
  const auto table = TuningTable::cached(1);
  const double c1 = (*table)[1];
  ScaleProblem prob{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1), &x};
  const double s = generalized_mscale(prob, *table);
  double lo = 1e-3;
  double hi = 1e3;
  auto f = [&](double v) {
    double acc = 0.0;
    for (Index i = 0; i < 15; ++i) acc += rho(m(i, 0) * m(i, 0) / (c1 * v));
    return acc / 15.0 - 0.5;
  };
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    (f(mid) > 0 ? lo : hi) = mid;
  }
  EXPECT_NEAR(s, lo, 1e-4 * lo);
}
