#include "cellguard/errors.hpp"
#include "cellguard/filter.hpp"
#include "cellguard/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <vector>

using namespace cellguard;

namespace {

Eigen::MatrixXd normal_table(Index n, Index p, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal_matrix(n, p, rng);
}

// Flag proportion straight from the order-statistic formula with a
// brute-force scan over every position.
double brute_force_proportion(std::vector<double> z, double alpha) {
  for (double& v : z) v = std::abs(v);
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  double best = 0.0;
  const double eta_ref = reference_threshold({alpha});
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] < eta_ref) continue;
    const double f = std::erf(z[i] / std::sqrt(2.0));
    best = std::max(best, f - static_cast<double>(i) / n);
  }
  return best;
}

}  // namespace

TEST(FlagProportion, SingleGrossValue) {
  const std::vector<double> z{0.1, -0.15, 0.2, -0.3, 10.0};
  EXPECT_NEAR(reference_threshold({}), 1.959963984540054, 1e-12);
  EXPECT_NEAR(flag_proportion(z), 0.2, 1e-12);
}

TEST(FlagProportion, NothingBeyondThresholdGivesZero) {
  EXPECT_EQ(flag_proportion(std::vector<double>{0.0, 0.1, -0.1}), 0.0);
}

TEST(FlagProportion, RejectsBadInput) {
  EXPECT_THROW(flag_proportion(std::vector<double>{0.0, std::nan("")}), std::invalid_argument);
  EXPECT_THROW(flag_proportion(std::vector<double>{0.0, 1.0}, {1.5}), std::invalid_argument);
}

TEST(FlagProportion, MatchesBruteForceScan) {
  std::mt19937_64 rng(17);
  std::student_t_distribution<double> t(2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(20 + trial);
    for (double& v : z) v = t(rng);
    EXPECT_NEAR(flag_proportion(z), brute_force_proportion(z, 0.95), 1e-14);
  }
}

TEST(FlagProportion, PermutationInvariant) {
  std::mt19937_64 rng(5);
  std::cauchy_distribution<double> c;
  std::vector<double> z(200);
  for (double& v : z) v = c(rng);
  const double d0 = flag_proportion(z);
  for (int r = 0; r < 10; ++r) {
    std::shuffle(z.begin(), z.end(), rng);
    EXPECT_EQ(flag_proportion(z), d0);
  }
}

// An independent re-implementation of the rule puts the 95th percentile of
// d at about 0.014 for n = 1000 and its mean near 0.005.
TEST(FlagProportion, LargeCleanSamplesRarelyFlag) {
  int small = 0;
  double sum = 0.0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(stream_seed(99, {static_cast<std::uint64_t>(s)}));
    const Eigen::MatrixXd z = standard_normal_matrix(1000, 1, rng);
    const std::vector<double> v(z.data(), z.data() + z.size());
    const double d = flag_proportion(v);
    sum += d;
    if (d <= 0.02) ++small;
  }
  EXPECT_GE(small, static_cast<int>(0.95 * seeds));
  EXPECT_LE(sum / seeds, 0.01);
}

TEST(AdaptiveCutoff, SingleGrossValue) {
  const std::vector<double> z{0.1, -0.15, 0.2, -0.3, 10.0};
  const auto r = adaptive_cutoff(z, flag_proportion(z));
  ASSERT_EQ(r.flagged.size(), 1u);
  EXPECT_EQ(r.flagged[0], 4u);
  EXPECT_EQ(r.cutoff, 0.3);
}

TEST(AdaptiveCutoff, ZeroProportion) {
  const auto r = adaptive_cutoff(std::vector<double>{1.0, 2.0}, 0.0);
  EXPECT_TRUE(r.flagged.empty());
  EXPECT_EQ(r.cutoff, std::numeric_limits<double>::infinity());
}

TEST(AdaptiveCutoff, TiesBrokenByLaterPosition) {
  const std::vector<double> z{1, 2, 2, 2, 9};
  auto r = adaptive_cutoff(z, 0.2);
  ASSERT_EQ(r.flagged.size(), 1u);
  EXPECT_EQ(r.flagged[0], 4u);

  r = adaptive_cutoff(z, 0.4);
  EXPECT_EQ(r.flagged, (std::vector<std::size_t>{3, 4}));
  EXPECT_EQ(r.cutoff, 2.0);

  r = adaptive_cutoff(z, 0.6);
  EXPECT_EQ(r.flagged, (std::vector<std::size_t>{2, 3, 4}));
}

TEST(AdaptiveCutoff, CountLawHoldsWithHeavyTies) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> pick(0, 4);
  for (std::size_t n = 1; n <= 40; ++n) {
    std::vector<double> z(n);
    for (double& v : z) v = static_cast<double>(pick(rng)) * (pick(rng) % 2 ? 1.0 : -1.0);
    for (std::size_t m = 0; m <= n; ++m) {
      const double d = static_cast<double>(m) / static_cast<double>(n);
      EXPECT_EQ(flag_count(n, d), m);
      const auto r = adaptive_cutoff(z, d);
      ASSERT_EQ(r.flagged.size(), m);
      // every flagged |Z| is at least every unflagged |Z|
      std::set<std::size_t> f(r.flagged.begin(), r.flagged.end());
      double min_flag = std::numeric_limits<double>::infinity();
      double max_rest = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (f.count(i)) {
          min_flag = std::min(min_flag, std::abs(z[i]));
        } else {
          max_rest = std::max(max_rest, std::abs(z[i]));
        }
      }
      if (m > 0 && m < n) EXPECT_GE(min_flag, max_rest);
    }
  }
}

TEST(ApplyFilter, CleanInputUnchanged) {
  Eigen::MatrixXd m(6, 2);
  m << 0.1, 1, -0.2, 2, 0.3, 3, -0.1, 4, 0.2, 5, 0.0, 6;
  const DataMatrix x(m);
  const auto [y, fr] = apply_filter(x);
  EXPECT_EQ(y.values(), x.values());
  EXPECT_TRUE(y.complete());
  EXPECT_EQ(fr.q_n, 1.0);
  EXPECT_TRUE(fr.flagged.empty());
  EXPECT_TRUE(fr.dropped_rows.empty());
}

TEST(ApplyFilter, KeepsExistingMissingAndDropsEmptiedRows) {
  Eigen::MatrixXd m = normal_table(30, 2, 44);
  m(29, 0) = 100.0;
  DataMatrix::Mask mask = DataMatrix::Mask::Constant(30, 2, true);
  mask(29, 1) = false;
  mask(0, 1) = false;
  const auto [y, fr] = apply_filter(DataMatrix(m, mask));
  ASSERT_FALSE(fr.dropped_rows.empty());
  EXPECT_EQ(fr.dropped_rows.back(), 29);
  EXPECT_FALSE(fr.mask_out(29, 0));
  EXPECT_FALSE(fr.mask_out(0, 1));
  EXPECT_GE(fr.flag_counts[0], 1u);
  const auto kept = static_cast<Index>(30 - fr.dropped_rows.size());
  EXPECT_EQ(y.rows(), kept);
  ASSERT_EQ(static_cast<Index>(fr.kept_rows.size()), kept);
  for (Index i = 0; i < kept; ++i) {
    EXPECT_GT(y.observed_in_row(i), 0);
    for (Index j = 0; j < 2; ++j) EXPECT_EQ(y.observed(i, j), fr.mask_out(fr.kept_rows[static_cast<std::size_t>(i)], j));
  }
  EXPECT_FALSE(y.observed(0, 1));
  Index complete = 0;
  for (Index i = 0; i < y.rows(); ++i) complete += y.observed_in_row(i) == 2;
  EXPECT_NEAR(fr.q_n, static_cast<double>(complete) / 30.0, 1e-15);  // over all input rows
  std::size_t total = 0;
  for (const auto c : fr.flag_counts) total += c;
  EXPECT_EQ(total, fr.flagged.size());
}

TEST(ApplyFilter, DegenerateColumn) {
  Eigen::MatrixXd m(4, 2);
  m << 1, 2, 2, 2, 3, 2, 4, 2;
  EXPECT_THROW(apply_filter(DataMatrix(m)), DegenerateColumnError);
}

// Same oracle at n = 100, p = 10: mean flagged fraction about 0.0185, 90th
// percentile about 0.03.
TEST(ApplyFilter, CleanDataFlagRate) {
  int ok = 0;
  double sum = 0.0;
  const int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    const auto [y, fr] = apply_filter(DataMatrix(normal_table(100, 10, 1000 + s)));
    const double frac = static_cast<double>(fr.flagged.size()) / 1000.0;
    sum += frac;
    if (frac <= 0.035) ++ok;
  }
  EXPECT_GE(ok, static_cast<int>(0.9 * seeds));
  EXPECT_GT(sum / seeds, 0.012);
  EXPECT_LT(sum / seeds, 0.025);
}

TEST(ApplyFilter, GrossCellwiseOutliersAreFlagged) {
  std::size_t total = 0;
  std::size_t caught = 0;
  for (int s = 0; s < 20; ++s) {
    Eigen::MatrixXd m = normal_table(100, 10, 500 + s);
    Rng rng(static_cast<std::uint64_t>(s));
    const auto cells = sample_without_replacement(1000, 100, rng);
    for (const Index c : cells) m(c / 10, c % 10) = 100.0;
    const auto [y, fr] = apply_filter(DataMatrix(m));
    std::set<std::pair<Index, Index>> flagged(fr.flagged.begin(), fr.flagged.end());
    for (const Index c : cells) {
      ++total;
      if (flagged.count({c / 10, c % 10})) ++caught;
    }
  }
  EXPECT_GE(static_cast<double>(caught), 0.99 * static_cast<double>(total));
}

TEST(ApplyFilter, CoordinatewiseAffineInvariance) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> scale(0.2, 5.0);
  std::normal_distribution<double> shift(0.0, 10.0);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::MatrixXd m = normal_table(60, 4, 300 + trial);
    for (Index j = 0; j < 4; ++j) m(trial % 60, j) += 8.0 * static_cast<double>(j);
    Eigen::MatrixXd t = m;
    for (Index j = 0; j < 4; ++j) t.col(j) = (scale(rng) * m.col(j).array() + shift(rng)).matrix();
    const auto [y0, f0] = apply_filter(DataMatrix(m));
    const auto [y1, f1] = apply_filter(DataMatrix(t));
    EXPECT_EQ(f0.flagged, f1.flagged);
  }
}

TEST(ApplyFilter, MeanFlagFractionShrinksWithN) {
  auto mean_fraction = [](Index n) {
    double sum = 0.0;
    for (int s = 0; s < 200; ++s) {
      const auto [y, fr] = apply_filter(DataMatrix(normal_table(n, 1, 7000 + s)));
      sum += static_cast<double>(fr.flagged.size()) / static_cast<double>(n);
    }
    return sum / 200.0;
  };
  EXPECT_LT(mean_fraction(2000), mean_fraction(100));
}
