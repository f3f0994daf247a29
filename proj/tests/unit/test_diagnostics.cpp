#include "cellguard/diagnostics.hpp"
#include "cellguard/errors.hpp"
#include "cellguard/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace cellguard;

namespace {

double oracle(double n_tests, double dof, double conf) {
  const boost::math::chi_squared_distribution<double> cd(dof);
  return boost::math::quantile(cd, std::pow(conf, 1.0 / n_tests));
}

Estimate identity_estimate(Index p) {
  Estimate e;
  e.mu = Eigen::VectorXd::Zero(p);
  e.sigma = Eigen::MatrixXd::Identity(p, p);
  return e;
}

}  // namespace

TEST(Thresholds, MatchIndependentQuantiles) {
  for (const auto& [n, p, conf] : {std::tuple{53, 20, 0.99}, std::tuple{100, 5, 0.95}, std::tuple{10, 2, 0.9}}) {
    const DiagThresholds t = diagnostic_thresholds(n, p, conf);
    const double np = static_cast<double>(n) * p;
    EXPECT_NEAR(t.cell, oracle(np, 1, conf), 1e-8 * t.cell);
    EXPECT_NEAR(t.pair, oracle(np * (p - 1) / 2.0, 2, conf), 1e-8 * t.pair);
    EXPECT_NEAR(t.case_, oracle(n, p, conf), 1e-8 * t.case_);
  }
  EXPECT_THROW(diagnostic_thresholds(10, 2, 1.0), std::invalid_argument);
}

TEST(Diagnose, SingleLargeCell) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(53, 20);
  m(7, 3) = 10.0;
  const DiagReport r = diagnose(DataMatrix(m), identity_estimate(20));
  EXPECT_LT(r.thresholds.cell, 100.0);
  EXPECT_GT(r.thresholds.cell, 15.0);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.cells[0], (std::pair<Index, Index>{7, 3}));
  EXPECT_EQ(r.pairs.size(), 19u);
  for (const auto& t : r.pairs) {
    EXPECT_EQ(t[0], 7);
    EXPECT_TRUE(t[1] == 3 || t[2] == 3);
    EXPECT_LT(t[1], t[2]);
  }
  EXPECT_EQ(r.cases, std::vector<Index>{7});
  EXPECT_NEAR(r.cell_prop, 1.0 / 1060.0, 1e-15);
  EXPECT_NEAR(r.case_prop, 1.0 / 53.0, 1e-15);
}

TEST(Diagnose, MissingCellsRejected) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(5, 2);
  DataMatrix::Mask mask = DataMatrix::Mask::Constant(5, 2, true);
  mask(1, 1) = false;
  EXPECT_THROW(diagnose(DataMatrix(m, mask), identity_estimate(2)), std::invalid_argument);
  EXPECT_THROW(diagnose(DataMatrix(m), identity_estimate(3)), std::invalid_argument);
}

TEST(Diagnose, SingularPairBlockNamed) {
  Estimate e = identity_estimate(3);
  e.sigma(1, 2) = e.sigma(2, 1) = 1.0;
  try {
    diagnose(DataMatrix(Eigen::MatrixXd::Zero(5, 3)), e);
    FAIL() << "expected SingularMatrixError";
  } catch (const SingularMatrixError& err) {
    EXPECT_NE(std::string(err.what()).find("(1, 2)"), std::string::npos) << err.what();
  }
}

TEST(Diagnose, CleanDataWithTrueParameters) {
  Rng rng(8);
  const DataMatrix x(standard_normal_matrix(200, 6, rng));
  const DiagReport r = diagnose(x, identity_estimate(6));
  EXPECT_LE(r.cell_prop, 0.005);
  EXPECT_LE(r.pair_prop, 0.005);
  EXPECT_LE(r.case_prop, 0.01);
}

TEST(Diagnose, AffineInvariance) {
  Rng rng(13);
  Eigen::MatrixXd m = standard_normal_matrix(80, 4, rng);
  m(5, 2) = 9.0;
  m(6, 0) = -7.0;
  m.row(9) << 3.0, -3.0, 3.0, -3.0;
  Eigen::MatrixXd a = standard_normal_matrix(4, 4, rng);
  Estimate e;
  e.mu = Eigen::VectorXd::Constant(4, 0.1);
  e.sigma = a * a.transpose() / 4.0 + Eigen::MatrixXd::Identity(4, 4);
  const DiagReport r0 = diagnose(DataMatrix(m), e, 0.99, 1);
  Eigen::Vector4d d(2.0, 0.5, 4.0, 1.0);
  Eigen::Vector4d b(1.0, -3.0, 2.0, 0.25);
  const Eigen::MatrixXd t = (m * d.asDiagonal()).rowwise() + b.transpose();
  Estimate et;
  et.mu = d.asDiagonal() * e.mu + b;
  et.sigma = d.asDiagonal() * e.sigma * d.asDiagonal();
  const DiagReport r1 = diagnose(DataMatrix(t), et, 0.99, 3);
  EXPECT_EQ(r0.cells, r1.cells);
  EXPECT_EQ(r0.pairs, r1.pairs);
  EXPECT_EQ(r0.cases, r1.cases);
  EXPECT_FALSE(r0.cells.empty());
}
