#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gansfer/evaluation.hpp"
#include "gansfer/rng.hpp"

using namespace gansfer;
using namespace gansfer::eval;

namespace {

Mask mask_from(int w, int h, const std::vector<int>& on) {
  Mask m(w, h, 0);
  for (int i : on) m[i] = 1;
  return m;
}

// Brute-force DSC from explicit index sets.
double set_dsc(const Mask& a, const Mask& b) {
  std::set<std::size_t> A, B, I;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) A.insert(i);
    if (b[i]) B.insert(i);
    if (a[i] && b[i]) I.insert(i);
  }
  if (A.empty() && B.empty()) return 1.0;
  return 2.0 * I.size() / (A.size() + B.size());
}

}  // namespace

TEST(Dsc, Examples) {
  const auto a = mask_from(4, 4, {0, 1, 2, 3});
  const auto b = mask_from(4, 4, {1, 2, 3, 4, 5, 6});
  EXPECT_DOUBLE_EQ(dsc(a, b), 0.6);
  EXPECT_DOUBLE_EQ(dsc(a, a), 1.0);
  EXPECT_DOUBLE_EQ(dsc(a, mask_from(4, 4, {8, 9})), 0.0);
  EXPECT_DOUBLE_EQ(dsc(Mask(4, 4, 0), Mask(4, 4, 0)), 1.0);
  EXPECT_THROW(dsc(a, Mask(3, 3, 0)), ShapeMismatch);
}

TEST(Dsc, SymmetricAndMatchesSetOracle) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    Mask a(8, 8), b(8, 8);
    for (auto& v : a.values()) v = rng.uniform() < 0.3;
    for (auto& v : b.values()) v = rng.uniform() < 0.3;
    EXPECT_EQ(dsc(a, b), dsc(b, a));
    EXPECT_EQ(dsc(a, b), set_dsc(a, b));
  }
}

TEST(DscReport, IdentityBackgroundAndTwoClassCase) {
  Rng rng(2);
  Mask ref(8, 8);
  for (auto& v : ref.values()) v = static_cast<std::uint8_t>(rng.below(8));
  const auto same = dsc_report(ref, ref);
  EXPECT_EQ(same.overall, 1.0);
  EXPECT_EQ(same.mean, 1.0);
  for (double v : same.per_structure) EXPECT_EQ(v, 1.0);

  const auto bg = dsc_report(Mask(8, 8, 0), ref);
  EXPECT_EQ(bg.overall, 0.0);

  // Two classes: class 1 on {0,1,2}, class 2 on {3,4} vs class 1 on {1,2},
  // class 2 on {2..5}. Overall merges both into one foreground.
  Mask p(8, 8, 0), q(8, 8, 0);
  p[0] = p[1] = p[2] = 1;
  p[3] = p[4] = 2;
  q[1] = 1;
  q[2] = q[3] = q[4] = q[5] = 2;
  const auto r = dsc_report(p, q);
  EXPECT_DOUBLE_EQ(r.per_structure[0], 2.0 * 1 / (3 + 1));
  EXPECT_DOUBLE_EQ(r.per_structure[1], 2.0 * 2 / (2 + 4));
  for (int s = 2; s < 7; ++s) EXPECT_EQ(r.per_structure[s], 1.0);
  EXPECT_DOUBLE_EQ(r.overall, 2.0 * 4 / (5 + 5));
  EXPECT_NE(r.overall, r.mean);
}

TEST(Folds, EachIdTestedOnce) {
  std::vector<std::string> ids;
  for (int i = 0; i < 30; ++i) ids.push_back("S" + std::to_string(i));
  const auto folds = make_folds(ids, 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  std::multiset<std::string> tested;
  for (const auto& f : folds) {
    EXPECT_EQ(f.train_ids.size(), 24u);
    EXPECT_EQ(f.test_ids.size(), 6u);
    for (const auto& id : f.test_ids) {
      tested.insert(id);
      EXPECT_EQ(std::count(f.train_ids.begin(), f.train_ids.end(), id), 0);
    }
  }
  EXPECT_EQ(tested, std::multiset<std::string>(ids.begin(), ids.end()));
  const auto again = make_folds(ids, 5, 3);
  for (int f = 0; f < 5; ++f) EXPECT_EQ(again[f].test_ids, folds[f].test_ids);
  EXPECT_THROW(make_folds({"a", "a", "b", "c", "d"}, 2, 0), BadCount);
  EXPECT_THROW(make_folds({"a"}, 5, 0), BadCount);
}

TEST(Volumes, CountsAndFlipInvariance) {
  MaskVolume m(4, 4, 2, 0);
  EXPECT_EQ(volumes_from_seg(m, {1, 1, 1}), Features{});
  for (int i = 0; i < 10; ++i) m[i] = 3;
  const auto v = volumes_from_seg(m, {1, 1, 1});
  EXPECT_EQ(v[2], 10.0);
  EXPECT_EQ(volumes_from_seg(flip_lr(m), {1, 1, 1}), v);
  EXPECT_EQ(volumes_from_seg(m, {2.5, 2.5, 3.0})[2], 10.0 * 18.75);
}

TEST(Auc, HandComputed) {
  // Positives {0.9, 0.4}, negatives {0.5, 0.1, 0.4}: wins 3 + (1 + 0.5) = 4.5 of 6.
  EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.4, 0.5, 0.1, 0.4}, {1, 1, 0, 0, 0}), 4.5 / 6.0);
  EXPECT_THROW(roc_auc({1, 2}, {1, 1}), DegenerateClass);
}

namespace {

void synthetic_features(double effect, int n, std::uint64_t seed, std::vector<Features>& x,
                        std::vector<int>& y) {
  Rng rng(seed);
  x.clear();
  y.clear();
  for (int i = 0; i < n; ++i) {
    const int label = i < 30 ? 1 : 0;
    Features f;
    for (auto& v : f) v = 1000.0 + 50.0 * rng.normal();
    f[3] += label * effect * 50.0;
    x.push_back(f);
    y.push_back(label);
  }
}

}  // namespace

TEST(Classifier, SeparableDataGivesHighAuc) {
  // Informative feature takes mean +/- sd within each class, so d = 3 leaves a
  // gap of one sd between the classes.
  Rng rng(1);
  std::vector<Features> x;
  std::vector<int> y;
  for (int i = 0; i < 99; ++i) {
    const int label = i < 30 ? 1 : 0;
    Features f;
    for (auto& v : f) v = 1000.0 + 50.0 * rng.normal();
    f[3] = 1000.0 + 150.0 * label + (rng.bernoulli(0.5) ? 50.0 : -50.0);
    x.push_back(f);
    y.push_back(label);
  }
  ClassifierConfig cfg;
  cfg.repeats = 20;
  const auto r = classify_cdr(x, y, cfg);
  EXPECT_GE(r.auc, 0.99);
  EXPECT_EQ(r.repeat_auc.size(), 20u);
}

TEST(Classifier, DegenerateClassRejected) {
  std::vector<Features> x(20, Features{});
  std::vector<int> y(20, 0);
  y[0] = y[1] = 1;
  EXPECT_THROW(classify_cdr(x, y), DegenerateClass);
}

TEST(Classifier, SeededRerunIdentical) {
  std::vector<Features> x;
  std::vector<int> y;
  synthetic_features(1.0, 40, 2, x, y);
  ClassifierConfig cfg;
  cfg.repeats = 5;
  EXPECT_EQ(classify_cdr(x, y, cfg).repeat_auc, classify_cdr(x, y, cfg).repeat_auc);
}

TEST(TTest, Examples) {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const auto same = paired_ttest(a, a);
  EXPECT_EQ(same.p, 1.0);
  EXPECT_FALSE(same.significant);

  std::vector<double> b = a, c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] + 1.0 + 1e-9 * static_cast<double>(i % 2);
  const auto shifted = paired_ttest(c, b);
  EXPECT_LT(shifted.p, 1e-6);
  EXPECT_TRUE(shifted.significant);

  std::vector<double> d = a;
  for (auto& v : d) v += 1.0;
  EXPECT_THROW(paired_ttest(d, a), DegenerateVariance);

  // Differences {1,2,3,4,5}: mean 3, sd sqrt(2.5), t = 3 / (sqrt(2.5)/sqrt(5)) = 4.2426,
  // df 4. Tables give the two-tailed 0.02 critical value 3.747 and 0.01 value 4.604.
  std::vector<double> e(5);
  for (int i = 0; i < 5; ++i) e[i] = a[i] + (i + 1);
  const auto t = paired_ttest(e, a);
  EXPECT_NEAR(t.t, 3.0 / std::sqrt(0.5), 1e-12);
  EXPECT_EQ(t.df, 4);
  EXPECT_GT(t.p, 0.01);
  EXPECT_LT(t.p, 0.02);
  // t = 2.776 is the tabulated two-tailed 5% critical value at df 4.
  std::vector<double> f = {0, 0, 0, 0, 0}, g(5);
  // Differences m + {-2..2}: sd sqrt(2.5), so t = m * sqrt(2).
  const double m = 2.776 / std::sqrt(2.0);
  for (int i = 0; i < 5; ++i) g[i] = m + (i - 2);
  EXPECT_NEAR(paired_ttest(g, f).p, 0.05, 1e-4);
}

TEST(KernelRegression, Examples) {
  const auto flat = kernel_regression({0, 1, 2, 5}, {3, 3, 3, 3}, 0.7, -1, 6, 15);
  for (double v : flat.y) EXPECT_NEAR(v, 3.0, 1e-12);
  const auto single = kernel_regression({2}, {7}, 0.5, 0, 100, 11);
  for (double v : single.y) EXPECT_DOUBLE_EQ(v, 7.0);
  EXPECT_TRUE(single.far_from_data.back());
  const auto two = kernel_regression({0, 1}, {0, 1}, 0.5, 0.5, 0.5, 1);
  EXPECT_DOUBLE_EQ(two.y[0], 0.5);
}

TEST(KernelRegression, BoundedByData) {
  Rng rng(5);
  std::vector<double> x, y;
  for (int i = 0; i < 30; ++i) {
    x.push_back(rng.uniform(18, 96));
    y.push_back(rng.uniform(0.5, 0.9));
  }
  const auto c = kernel_regression(x, y, default_bandwidth(x), 0, 120, 61);
  for (double v : c.y) {
    EXPECT_GE(v, 0.5 - 1e-12);
    EXPECT_LE(v, 0.9 + 1e-12);
  }
}

TEST(Tables, HeaderAndRow) {
  EXPECT_EQ(dsc_table_header(), "label,Total,Ac.,Am.,Ca.,Hi.,Pa.,Pu.,Th.,Avg");
  DscReport r;
  r.overall = 0.801;
  r.per_structure.fill(0.5);
  r.mean = 0.5;
  EXPECT_EQ(dsc_table_row("base", {r}), "base,80.10,50.00,50.00,50.00,50.00,50.00,50.00,50.00,50.00");
  EXPECT_THROW(dsc_table_row("x", {}), MissingResults);
}

TEST(Plots, SvgFilesWritten) {
  const auto dir = std::filesystem::temp_directory_path() / "gansfer_plots";
  std::filesystem::create_directories(dir);
  write_line_plot_svg(dir / "a.svg", "t", "x", "y", {{"s", {0, 1}, {0, 1}}});
  write_bar_chart_svg(dir / "b.svg", "t", "y", {"a", "b"}, {1, 2});
  std::ifstream f(dir / "a.svg");
  std::string first;
  std::getline(f, first);
  EXPECT_NE(first.find("<svg"), std::string::npos);
  std::filesystem::remove_all(dir);
}
