#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "vfl/datasets.h"
#include "vfl/error.h"

using namespace vfl;

namespace {

DatasetSpec binary_spec(DatasetKind kind, std::size_t n) {
  DatasetSpec s;
  s.kind = kind;
  s.n_train = n;
  s.n_test = n / 2;
  s.dims_a = 6;
  s.dims_b = 4;
  s.seed = 11;
  return s;
}

std::vector<double> column_mean_by_class(const Tensor2& x, const std::vector<int>& y, int cls) {
  std::vector<double> m(x.cols(), 0.0);
  std::size_t n = 0;
  for (std::size_t r = 0; r < x.rows(); ++r)
    if (y[r] == cls) {
      ++n;
      for (std::size_t c = 0; c < x.cols(); ++c) m[c] += x(r, c);
    }
  for (double& v : m) v /= static_cast<double>(n);
  return m;
}

}  // namespace

TEST(Synthetic, ImbalancedRatioIsOneToNine) {
  const auto d = generate_synthetic(binary_spec(DatasetKind::kBinaryImbalanced, 1000));
  const auto counts = d.train.class_counts();
  EXPECT_EQ(counts[1], 100u);
  EXPECT_EQ(counts[0], 900u);
  EXPECT_EQ(d.test.class_counts()[1], 50u);
}

TEST(Synthetic, BalancedRatioIsOneToTwo) {
  const auto d = generate_synthetic(binary_spec(DatasetKind::kBinaryBalanced, 900));
  EXPECT_EQ(d.train.class_counts()[1], 300u);
  EXPECT_EQ(d.train.class_counts()[0], 600u);
}

TEST(Synthetic, ExplicitRatioAndShapes) {
  auto s = binary_spec(DatasetKind::kBinaryBalanced, 400);
  s.positive_ratio = 0.25;
  const auto d = generate_synthetic(s);
  EXPECT_EQ(d.train.class_counts()[1], 100u);
  EXPECT_EQ(d.train.features_a.rows(), 400u);
  EXPECT_EQ(d.train.features_a.cols(), 6u);
  EXPECT_EQ(d.train.features_b.cols(), 4u);
  EXPECT_EQ(d.test.size(), 200u);
  EXPECT_EQ(d.train.split, SplitTag::kTrain);
  EXPECT_EQ(d.test.split, SplitTag::kTest);
}

TEST(Synthetic, SeparationControlsClassMeanGap) {
  auto s = binary_spec(DatasetKind::kBinaryBalanced, 20000);
  s.separation_a = 3.0;
  s.separation_b = 0.0;
  const auto d = generate_synthetic(s);
  auto gap = [&](const Tensor2& x) {
    const auto m0 = column_mean_by_class(x, d.train.labels, 0);
    const auto m1 = column_mean_by_class(x, d.train.labels, 1);
    double g = 0;
    for (std::size_t c = 0; c < m0.size(); ++c) g += (m1[c] - m0[c]) * (m1[c] - m0[c]);
    return std::sqrt(g);
  };
  EXPECT_NEAR(gap(d.train.features_a), 3.0, 0.1);
  EXPECT_LT(gap(d.train.features_b), 0.1);
}

TEST(Synthetic, MulticlassCountsAreEven) {
  DatasetSpec s;
  s.kind = DatasetKind::kMulticlass;
  s.num_classes = 10;
  s.n_train = 1000;
  s.n_test = 200;
  const auto d = generate_synthetic(s);
  for (auto c : d.train.class_counts()) EXPECT_EQ(c, 100u);
  EXPECT_EQ(d.train.num_classes, 10u);
}

TEST(Synthetic, DeterministicInSeed) {
  const auto s = binary_spec(DatasetKind::kBinaryImbalanced, 300);
  const auto a = generate_synthetic(s), b = generate_synthetic(s);
  EXPECT_EQ(a.train.features_a, b.train.features_a);
  EXPECT_EQ(a.test.features_b, b.test.features_b);
  EXPECT_EQ(a.train.labels, b.train.labels);
  auto s2 = s;
  s2.seed = 12;
  EXPECT_NE(generate_synthetic(s2).train.features_a, a.train.features_a);
}

TEST(Synthetic, InvalidSpecsRejected) {
  auto s = binary_spec(DatasetKind::kBinaryBalanced, 100);
  s.positive_ratio = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
  s = binary_spec(DatasetKind::kBinaryBalanced, 0);
  EXPECT_THROW(s.validate(), ConfigError);
  s = binary_spec(DatasetKind::kBinaryBalanced, 10);
  s.dims_a = s.dims_b = 0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(ImagePatterns, SplitIntoTopAndBottomHalves) {
  DatasetSpec s;
  s.kind = DatasetKind::kImagePattern;
  s.image_size = 16;
  s.n_train = 200;
  s.n_test = 50;
  const auto d = make_dataset(s);
  EXPECT_EQ(d.train.features_a.cols(), 8u * 16);
  EXPECT_EQ(d.train.features_b.cols(), 8u * 16);
  EXPECT_EQ(d.train.image_rows_b, 8u);
  EXPECT_EQ(d.train.image_cols_b, 16u);
  for (double v : d.train.features_b.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  for (auto c : d.train.class_counts()) EXPECT_EQ(c, 20u);
}

TEST(ImagePatterns, ClassesAreDistinguishable) {
  // Class-mean images differ: the pattern carries label information.
  DatasetSpec s;
  s.kind = DatasetKind::kImagePattern;
  s.n_train = 500;
  s.n_test = 10;
  const auto d = make_dataset(s);
  const auto m0 = column_mean_by_class(d.train.features_b, d.train.labels, 0);
  const auto m1 = column_mean_by_class(d.train.features_b, d.train.labels, 1);
  double diff = 0;
  for (std::size_t i = 0; i < m0.size(); ++i) diff += std::abs(m0[i] - m1[i]);
  EXPECT_GT(diff / static_cast<double>(m0.size()), 0.05);
}

TEST(Csv, HandNormalizedExample) {
  const std::string text =
      "\xEF\xBB\xBF" "a1,b1,b2,y\n"
      "1,10,0,0\n"
      "3,20,0,1\n"
      "5,30,0,1\n"
      "7,0,5,0\n";
  CsvOptions o;
  o.label_column = "y";
  o.party_a_columns = {"a1"};
  o.party_b_columns = {"b1", "b2"};
  o.test_fraction = 0.25;
  const auto d = load_csv_text(text, o);
  ASSERT_EQ(d.train.size(), 3u);
  ASSERT_EQ(d.test.size(), 1u);
  // a1 train column {1,3,5}: mean 3, population sd sqrt(8/3).
  const double sd = std::sqrt(8.0 / 3.0);
  EXPECT_NEAR(d.train.features_a(0, 0), -2.0 / sd, 1e-12);
  EXPECT_NEAR(d.train.features_a(2, 0), 2.0 / sd, 1e-12);
  EXPECT_NEAR(d.test.features_a(0, 0), 4.0 / sd, 1e-12);
  // b2 is constant on train: sd treated as 1.
  EXPECT_NEAR(d.train.features_b(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(d.test.features_b(0, 1), 5.0, 1e-12);
  EXPECT_EQ(d.train.labels, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(d.train.num_classes, 2u);
}

TEST(Csv, Errors) {
  CsvOptions o;
  o.label_column = "y";
  o.party_a_columns = {"a"};
  o.party_b_columns = {"b"};
  EXPECT_THROW(load_csv_text("a,b,y\n1,2,0\n1,x,1\n", o), ParseError);
  EXPECT_THROW(load_csv_text("a,b,y\n1,2\n", o), ParseError);
  EXPECT_THROW(load_csv_text("a,c,y\n1,2,0\n", o), ConfigError);
  EXPECT_THROW(load_csv_text("", o), ParseError);
  o.party_b_columns = {"a"};
  EXPECT_THROW(load_csv_text("a,b,y\n1,2,0\n3,4,1\n", o), ConfigError);
  try {
    o.party_b_columns = {"b"};
    load_csv_text("a,b,y\n1,2,0\n1,oops,1\n", o);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
}

TEST(Auxiliary, StratifiedSortedAndExcluding) {
  DatasetSpec s;
  s.kind = DatasetKind::kMulticlass;
  s.num_classes = 4;
  s.n_train = 400;
  s.n_test = 10;
  const auto d = make_dataset(s);
  const std::vector<std::size_t> excluded{0, 1, 2, 3, 4, 5};
  const auto aux = draw_auxiliary(d.train, 42, 9, excluded);
  ASSERT_EQ(aux.indices.size(), 42u);
  EXPECT_TRUE(std::is_sorted(aux.indices.begin(), aux.indices.end()));
  EXPECT_EQ(std::set<std::size_t>(aux.indices.begin(), aux.indices.end()).size(), 42u);
  std::vector<int> per(4, 0);
  for (auto i : aux.indices) {
    EXPECT_GE(i, 6u);
    ++per[static_cast<std::size_t>(d.train.labels[i])];
  }
  EXPECT_EQ(per, (std::vector<int>{11, 11, 10, 10}));
  EXPECT_EQ(draw_auxiliary(d.train, 42, 9, excluded).indices, aux.indices);
  EXPECT_THROW(draw_auxiliary(d.train, 1000, 9), ConfigError);
}

TEST(VerticalDataset, SubsetAndValidate) {
  const auto d = generate_synthetic(binary_spec(DatasetKind::kBinaryBalanced, 30));
  const std::vector<std::size_t> idx{4, 2};
  const auto sub = d.train.subset(idx);
  EXPECT_EQ(sub.size(), 2u);
  EXPECT_EQ(sub.labels[0], d.train.labels[4]);
  EXPECT_EQ(sub.features_b.row(1)[0], d.train.features_b.row(2)[0]);
  auto bad = d.train;
  bad.labels[0] = 7;
  EXPECT_THROW(bad.validate(), ConfigError);
}
