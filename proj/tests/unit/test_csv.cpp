#include "cellguard/csv.hpp"
#include "cellguard/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>

using namespace cellguard;

TEST(Csv, NaTokenBecomesMaskedCell) {
  const CsvTable t = parse_csv("1,2\n3,NA\n");
  EXPECT_EQ(t.data.rows(), 2);
  EXPECT_EQ(t.data.cols(), 2);
  EXPECT_TRUE(t.data.observed(0, 0));
  EXPECT_TRUE(t.data.observed(0, 1));
  EXPECT_TRUE(t.data.observed(1, 0));
  EXPECT_FALSE(t.data.observed(1, 1));
  EXPECT_TRUE(std::isnan(t.data(1, 1)));
  EXPECT_TRUE(t.column_names.empty());
}

TEST(Csv, RaggedRowNamesLine) {
  try {
    parse_csv("1,2\n3\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(Csv, BadNumberNamesLineAndColumn) {
  try {
    parse_csv("1,2\n3,4\n5,abc\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
  }
}

TEST(Csv, CrLfAndTrimmedFields) {
  const CsvTable t = parse_csv("1, 2\r\n 3 , NA \r\n");
  EXPECT_EQ(t.data(0, 1), 2.0);
  EXPECT_EQ(t.data(1, 0), 3.0);
  EXPECT_FALSE(t.data.observed(1, 1));
}

TEST(Csv, HeaderAutoDetect) {
  const CsvTable t = parse_csv("a,b\n1,2\n3,4\n");
  ASSERT_EQ(t.column_names.size(), 2u);
  EXPECT_EQ(t.column_names[0], "a");
  EXPECT_EQ(t.data.rows(), 2);

  const CsvTable u = parse_csv("NA,2\n1,2\n3,4\n");
  EXPECT_TRUE(u.column_names.empty());
  EXPECT_EQ(u.data.rows(), 3);
}

TEST(Csv, HeaderModesForced) {
  CsvOptions opt;
  opt.header = HeaderMode::kPresent;
  const CsvTable t = parse_csv("1,2\n3,4\n5,6\n", opt);
  EXPECT_EQ(t.data.rows(), 2);
  EXPECT_EQ(t.column_names[1], "2");
  opt.header = HeaderMode::kAbsent;
  EXPECT_THROW(parse_csv("a,b\n1,2\n3,4\n", opt), ParseError);
}

TEST(Csv, CustomNaToken) {
  CsvOptions opt;
  opt.na_token = ".";
  const CsvTable t = parse_csv("1,.\n3,4\n", opt);
  EXPECT_FALSE(t.data.observed(0, 1));
}

TEST(Csv, TooFewRowsIsParseError) {
  EXPECT_THROW(parse_csv("1,2\n"), ParseError);
  EXPECT_THROW(parse_csv(""), ParseError);
}

TEST(Csv, RoundTripIsExact) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::bernoulli_distribution miss(0.2);
  Eigen::MatrixXd m(20, 5);
  DataMatrix::Mask mask(20, 5);
  for (Index i = 0; i < 20; ++i) {
    for (Index j = 0; j < 5; ++j) {
      m(i, j) = z(rng) * std::pow(10.0, static_cast<double>(j * 3 - 6));
      mask(i, j) = !miss(rng) || j == 0;
    }
  }
  const DataMatrix x(m, mask);
  std::ostringstream out;
  write_csv(out, x, "NA", {"a", "b", "c", "d", "e"});
  const CsvTable t = parse_csv(out.str());
  ASSERT_EQ(t.column_names.size(), 5u);
  ASSERT_EQ(t.data.rows(), 20);
  for (Index i = 0; i < 20; ++i) {
    for (Index j = 0; j < 5; ++j) {
      ASSERT_EQ(t.data.observed(i, j), mask(i, j));
      if (mask(i, j)) ASSERT_EQ(t.data(i, j), m(i, j));
    }
  }
}

TEST(Csv, LoadAndSaveFile) {
  const auto path = std::filesystem::temp_directory_path() / "cellguard_test_csv_roundtrip.csv";
  Eigen::MatrixXd m(3, 2);
  m << 1.5, -2, 3, 4.25, 1e-300, 7;
  save_csv(path, DataMatrix(m));
  const CsvTable t = load_csv(path);
  std::filesystem::remove(path);
  EXPECT_EQ(t.data.values(), m);
  EXPECT_THROW(load_csv(path), Error);
}
