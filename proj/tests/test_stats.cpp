#include <gtest/gtest.h>

#include <random>

#include "hyperscore/errors.hpp"
#include "hyperscore/stats.hpp"
#include "oracles.hpp"

using namespace hyperscore;

namespace {

using V = std::vector<double>;

AnnotationMatrix matrix(const std::vector<V>& by_subject, std::size_t dims = 1) {
  AnnotationMatrix m;
  for (std::size_t s = 0; s < by_subject.size(); ++s) m.subjects.push_back("u" + std::to_string(s));
  for (std::size_t n = 0; n < by_subject[0].size() / dims; ++n) m.samples.push_back("x" + std::to_string(n));
  for (std::size_t k = 0; k < dims; ++k) m.dimensions.push_back("d" + std::to_string(k));
  for (const auto& row : by_subject) m.scores.insert(m.scores.end(), row.begin(), row.end());
  return m;
}

// Straightforward BT.500 rule evaluation, independent of screen_bt500.
std::vector<bool> bt500_oracle(const std::vector<V>& x) {
  const std::size_t s_count = x.size(), n_count = x[0].size();
  std::vector<int> p(s_count), q(s_count);
  for (std::size_t n = 0; n < n_count; ++n) {
    V c;
    for (const auto& row : x) c.push_back(row[n]);
    double m = 0;
    for (double v : c) m += v / s_count;
    double ss = 0, m2 = 0, m4 = 0;
    for (double v : c) {
      ss += (v - m) * (v - m);
      m2 += (v - m) * (v - m) / s_count;
      m4 += std::pow(v - m, 4) / s_count;
    }
    const double sd = std::sqrt(ss / (s_count - 1));
    if (sd == 0) continue;
    const double b2 = m4 / (m2 * m2);
    const double w = (b2 >= 2 && b2 <= 4) ? 2 * sd : std::sqrt(20.0) * sd;
    for (std::size_t s = 0; s < s_count; ++s) {
      p[s] += x[s][n] >= m + w;
      q[s] += x[s][n] <= m - w;
    }
  }
  std::vector<bool> keep(s_count, true);
  for (std::size_t s = 0; s < s_count; ++s) {
    const double pq = p[s] + q[s];
    if (pq > 0 && pq / n_count > 0.05 && std::abs(p[s] - q[s]) / pq < 0.3) keep[s] = false;
  }
  return keep;
}

}  // namespace

TEST(Plcc, Examples) {
  EXPECT_NEAR(plcc(V{1, 2, 3, 4}, V{2, 4, 6, 8}), 1.0, 1e-15);
  EXPECT_NEAR(plcc(V{1, 2, 3}, V{-1, -2, -3}), -1.0, 1e-15);
  EXPECT_NEAR(plcc(V{1, 2, 3}, V{1, 3, 2}), 0.5, 1e-15);
  EXPECT_THROW(plcc(V{1, 1, 1}, V{1, 2, 3}), UndefinedCorrelationError);
  EXPECT_THROW(plcc(V{1}, V{1}), ArgumentError);
  EXPECT_THROW(plcc(V{1, 2}, V{1, 2, 3}), ArgumentError);
}

TEST(Plcc, AffineInvariance) {
  const V x{0.3, 1.7, -2, 5, 4.4}, y{1, 0, 3, 2, 2.5};
  V ax;
  for (double v : x) ax.push_back(3.5 * v - 7);
  EXPECT_NEAR(plcc(x, y), plcc(ax, y), 1e-14);
}

TEST(Srcc, Examples) {
  EXPECT_DOUBLE_EQ(srcc(V{1, 2, 3, 4}, V{1, 8, 27, 64}), 1.0);
  EXPECT_DOUBLE_EQ(srcc(V{1, 2, 3, 4}, V{4, 3, 2, 1}), -1.0);
  const V x{1, 2, 2, 3, 5, 5, 5}, y{2, 1, 4, 4, 3, 6, 6};
  EXPECT_NEAR(srcc(x, y), oracle::spearman(x, y), 1e-12);
  EXPECT_THROW(srcc(V{2, 2, 2}, V{1, 2, 3}), UndefinedCorrelationError);
  EXPECT_EQ(average_ranks(V{10, 20, 20, 5}), (V{2, 3.5, 3.5, 1}));
}

TEST(Krcc, Examples) {
  EXPECT_DOUBLE_EQ(krcc(V{1, 2, 3}, V{1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(krcc(V{1, 2, 3}, V{3, 2, 1}), -1.0);
  const V x{1, 3, 3, 2, 5, 1, 4, 4}, y{2, 2, 5, 1, 4, 3, 3, 6};
  EXPECT_NEAR(krcc(x, y), oracle::kendall_b(x, y), 1e-12);
  EXPECT_THROW(krcc(V{1, 1, 1}, V{1, 2, 3}), UndefinedCorrelationError);
}

TEST(RankCorrelations, BruteForceOracle) {
  std::mt19937 gen(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 12)(gen);
    std::uniform_int_distribution<int> val(0, std::uniform_int_distribution<int>(1, 6)(gen));
    V x, y;
    for (int i = 0; i < n; ++i) {
      x.push_back(val(gen));
      y.push_back(val(gen));
    }
    const auto rx = oracle::ranks(x), ry = oracle::ranks(y);
    const auto r = average_ranks(x);
    for (int i = 0; i < n; ++i) ASSERT_EQ(r[i], rx[i]);
    const bool x_const = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    const bool y_const = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (x_const || y_const) {
      EXPECT_THROW(srcc(x, y), UndefinedCorrelationError);
      EXPECT_THROW(krcc(x, y), UndefinedCorrelationError);
      continue;
    }
    EXPECT_NEAR(srcc(x, y), oracle::spearman(x, y), 1e-12);
    EXPECT_NEAR(krcc(x, y), oracle::kendall_b(x, y), 1e-12);
  }
}

TEST(RankCorrelations, MonotoneInvariance) {
  const V x{1, 4, 2, 2, 8, 5, 7, 7}, y{3, 1, 2, 6, 6, 4, 8, 5};
  V tx;
  for (double v : x) tx.push_back(std::exp(v) + 3);
  EXPECT_EQ(srcc(x, y), srcc(tx, y));
  EXPECT_EQ(krcc(x, y), krcc(tx, y));
}

TEST(Logistic, IdentityAffineAndConstant) {
  const V mos{1, 2.5, 3, 4.2, 6, 7.7, 9};
  const auto id = logistic_map(mos, mos);
  EXPECT_LE(id.rms_residual, 1e-6);
  V aff;
  for (double v : mos) aff.push_back(2 * v + 1);
  EXPECT_LE(logistic_map(aff, mos).rms_residual, 1e-3);
  const auto c = logistic_map(V(7, 4.0), mos);
  EXPECT_TRUE(c.warning);
  for (double v : c.mapped) EXPECT_EQ(v, c.mapped[0]);
  EXPECT_THROW(logistic_map(V{1, 2, 3, 4}, V{1, 2, 3, 4}), ArgumentError);
}

TEST(Logistic, FitsSigmoidData) {
  V x, y;
  for (int i = 0; i < 30; ++i) {
    x.push_back(i * 0.3);
    y.push_back(logistic5({8, 1.2, 4.5, 0.05, 5}, i * 0.3));
  }
  const auto f = logistic_map(x, y);
  EXPECT_LE(f.rms_residual, 1e-6);
  EXPECT_LE(f.iterations, 200);
}

TEST(Annotations, ParseAndErrors) {
  const auto m = parse_annotations_csv("subject_id,sample_id,dimension,score\na,x,q,5\nb,x,q,6\na,y,q,0\nb,y,q,10\n");
  EXPECT_EQ(m.num_subjects(), 2u);
  EXPECT_EQ(m.num_samples(), 2u);
  EXPECT_EQ(m.at(1, 1, 0), 10.0);
  EXPECT_THROW(parse_annotations_csv(""), FormatError);
  try {
    parse_annotations_csv("a,x,q,5\nb,x,q\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_annotations_csv("a,x,q,11\n"), DataError);
  EXPECT_THROW(parse_annotations_csv("a,x,q,2.5\n"), DataError);
  EXPECT_THROW(parse_annotations_csv("a,x,q,abc\n"), FormatError);
  EXPECT_THROW(parse_annotations_csv("a,x,q,1\na,x,q,2\n"), DataError);
  EXPECT_THROW(parse_annotations_csv("a,x,q,1\nb,y,q,2\n"), DataError);
  EXPECT_THROW(parse_annotations_csv("a,x,q,1\n", {"other"}), DataError);
}

TEST(Trapping, Thresholds) {
  // samples: real, sentinel, dupA, dupB
  auto m = matrix({{5, 9, 4, 4}, {5, 0, 4, 4}, {5, 3, 2, 5}, {5, 2, 1, 5}});
  m.sentinel_ids = {"x1"};
  m.duplicate_pairs = {{"x2", "x3"}};
  const auto r = screen_trapping(m);
  EXPECT_FALSE(r.retained[0]);  // sentinel 9
  EXPECT_TRUE(r.retained[1]);
  EXPECT_TRUE(r.retained[2]);   // sentinel == T_low, gap == T_dup
  EXPECT_FALSE(r.retained[3]);  // gap 4
  ASSERT_EQ(r.rejected.size(), 2u);
  EXPECT_EQ(r.rejected[0].stage, "trapping");
  EXPECT_NE(r.rejected[1].reason.find("duplicate"), std::string::npos);
  m.sentinel_ids.clear();
  m.duplicate_pairs.clear();
  EXPECT_THROW(screen_trapping(m), ConfigError);
}

TEST(Bt500, AllIdenticalRetainsEveryone) {
  const auto m = matrix({V(10, 4), V(10, 4), V(10, 4), V(10, 4)});
  const auto r = screen_bt500(m);
  EXPECT_EQ(r.retained_count(), 4u);
  EXPECT_TRUE(r.rejected.empty());
}

TEST(Bt500, NeedsThreeSubjects) {
  EXPECT_THROW(screen_bt500(matrix({V(3, 1), V(3, 2)})), ConfigError);
}

TEST(Bt500, ErraticSubjectRejected) {
  const V bell{2, 3, 4, 4, 5, 5, 5, 5, 5, 5, 6, 6, 7, 8};
  std::vector<V> x(15, V(20));
  for (int n = 0; n < 20; ++n) {
    for (int s = 1; s < 15; ++s) x[s][n] = bell[(s + n) % bell.size()];
    x[0][n] = n % 2 ? 0 : 10;
  }
  const auto r = screen_bt500(matrix(x));
  EXPECT_EQ(r.retained, bt500_oracle(x));
  EXPECT_FALSE(r.retained[0]);
  EXPECT_EQ(r.retained_count(), 14u);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].subject, "u0");
}

TEST(Bt500, ConstantHighRaterIsOneSided) {
  // One rater at a constant 10 against raters near 2: every exceedance is on
  // the high side, so |P-Q|/(P+Q) = 1 and the symmetry clause keeps them.
  std::vector<V> x{V(10, 10), {2, 1, 3, 2, 2, 1, 3, 2, 2, 3}, {1, 2, 2, 3, 2, 2, 1, 3, 2, 2}};
  const auto r = screen_bt500(matrix(x));
  EXPECT_EQ(r.retained, bt500_oracle(x));
}

TEST(Bt500, ExceedanceFractionThreshold) {
  // u0 deviates on two stimuli (once high, once low); every other stimulus is unanimous
  const V bell{2, 3, 4, 4, 5, 5, 5, 5, 5, 5, 6, 6, 7, 8};
  auto fixture = [&](int n) {
    std::vector<V> x(15, V(n, 5.0));
    for (int j = 0; j < 2; ++j)
      for (int s = 1; s < 15; ++s) x[s][j] = bell[(s + j) % bell.size()];
    x[0][0] = 10;
    x[0][1] = 0;
    return x;
  };
  // 2 of 40 = 5% is not above the limit
  const auto keep = screen_bt500(matrix(fixture(40)));
  EXPECT_EQ(keep.retained_count(), 15u);
  // 2 of 20 = 10%
  const auto drop = screen_bt500(matrix(fixture(20)));
  EXPECT_FALSE(drop.retained[0]);
  EXPECT_EQ(drop.retained_count(), 14u);
  EXPECT_EQ(drop.retained, bt500_oracle(fixture(20)));
}

TEST(Bt500, RandomFixturesMatchOracle) {
  std::mt19937 gen(77);
  for (int t = 0; t < 200; ++t) {
    const int s = std::uniform_int_distribution<int>(3, 9)(gen);
    const int n = std::uniform_int_distribution<int>(2, 12)(gen);
    std::normal_distribution<double> nd(5, 2);
    std::vector<V> x(s, V(n));
    for (auto& row : x)
      for (auto& v : row) v = std::clamp(std::round(nd(gen)), 0.0, 10.0);
    ASSERT_EQ(screen_bt500(matrix(x)).retained, bt500_oracle(x)) << t;
  }
}

TEST(Mos, MeansAndExclusions) {
  const auto m = matrix({{5, 1}, {6, 2}, {7, 9}});
  const auto all = compute_mos(m, {true, true, true});
  EXPECT_DOUBLE_EQ(all[0].mos[0], 6.0);
  EXPECT_EQ(all[0].retained_subject_count, 3u);
  const auto one = compute_mos(m, {false, true, false});
  EXPECT_DOUBLE_EQ(one[1].mos[0], 2.0);
  const auto two = compute_mos(m, {true, true, false});
  EXPECT_DOUBLE_EQ(two[1].mos[0], 1.5);
  EXPECT_THROW(compute_mos(m, {false, false, false}), ConfigError);
  const auto perm = compute_mos(matrix({{7, 9}, {5, 1}, {6, 2}}), {true, true, true});
  EXPECT_EQ(perm[1].mos, all[1].mos);
}

TEST(Mos, PipelineDropsTrappingSamples) {
  auto m = matrix({{5, 0, 4, 4}, {6, 1, 5, 5}, {7, 2, 6, 6}, {4, 10, 5, 5}});
  m.sentinel_ids = {"x1"};
  m.duplicate_pairs = {{"x2", "x3"}};
  const auto r = run_mos_pipeline(m);
  EXPECT_FALSE(r.retained[3]);
  ASSERT_EQ(r.labels.size(), 2u);
  EXPECT_EQ(r.labels[0].sample_id, "x0");
  EXPECT_EQ(r.labels[1].sample_id, "x2");
  EXPECT_DOUBLE_EQ(r.labels[0].mos[0], 6.0);
}

TEST(Reports, CategoryTable) {
  const std::map<std::string, std::string> cats{{"p0", "Basic"}, {"p1", "Complex"}, {"p2", "Basic"}};
  const auto one = category_table({{"m", "p0", 3.0}}, cats);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].rank, 1);

  const auto t = category_table({{"a", "p0", 2}, {"a", "p2", 4}, {"a", "p1", 5}, {"b", "p0", 6}, {"b", "p1", 1}}, cats);
  ASSERT_EQ(t.size(), 4u);
  EXPECT_EQ(t[0].row, "a");
  EXPECT_EQ(t[0].column, "Basic");
  EXPECT_DOUBLE_EQ(t[0].value, 3.0);
  EXPECT_EQ(t[0].count, 2u);
  EXPECT_EQ(t[0].rank, 2);
  EXPECT_EQ(t[1].rank, 1);
  EXPECT_EQ(t[2].rank, 1);
  EXPECT_EQ(t[3].rank, 2);

  const auto tie = category_table({{"a", "p0", 2}, {"a", "p1", 2}}, cats);
  EXPECT_EQ(tie[0].rank, 1);
  EXPECT_EQ(tie[1].rank, 1);

  EXPECT_THROW(category_table({{"a", "p9", 1}}, cats), DataError);
  EXPECT_THROW(category_table({{"a", "p0", 1}}, {{"p0", "Whimsical"}}), DataError);
}

TEST(Reports, CorrelationTable) {
  const std::vector<V> mos{{1, 4}, {2, 3}, {3, 2}, {4, 1}, {5, 5}};
  const std::vector<V> pred{{1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}};
  const auto rows = correlation_table({{"m", pred}}, mos, {"a", "b"});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].srcc, 1.0);
  EXPECT_NEAR(rows[1].srcc, oracle::spearman({1, 2, 3, 4, 5}, {4, 3, 2, 1, 5}), 1e-12);
  const auto flat = correlation_table({{"c", std::vector<V>(5, V{1, 1})}}, mos, {"a", "b"});
  EXPECT_TRUE(std::isnan(flat[0].plcc));
}

TEST(Reports, CategorySrccRanksColumns) {
  const V mos{1, 2, 3, 4, 5, 6};
  const std::vector<std::string> cats{"Basic", "Basic", "Basic", "Spatial", "Spatial", "Spatial"};
  const auto t = category_srcc_table({{"good", {1, 2, 3, 4, 5, 6}}, {"bad", {3, 2, 1, 6, 4, 5}}}, mos, cats);
  ASSERT_EQ(t.size(), 4u);
  for (const auto& c : t) {
    if (c.row == "good") EXPECT_EQ(c.rank, 1);
    if (c.row == "bad") EXPECT_EQ(c.rank, 2);
  }
}

TEST(Baseline, HandFixtures) {
  FeatureBundle b;
  b.text_tokens.resize(1, 2);
  b.text_tokens << 1, 0;
  b.eot_index = 0;
  b.views = {Mat<float>(2, 2)};
  b.views[0] << 2, 0, 4, 0;
  b.viewpoints = {{0, 0}};
  EXPECT_DOUBLE_EQ(baseline_cosine_score(b), 2.5);
  b.views[0] << 0, 1, 0, 3;
  EXPECT_DOUBLE_EQ(baseline_cosine_score(b), 0.0);
  b.views[0] << -1, 0, -1, 0;
  EXPECT_DOUBLE_EQ(baseline_cosine_score(b), 0.0);
  // cosines 0.8 and 0.4
  b.views = {Mat<float>(1, 2), Mat<float>(1, 2)};
  b.views[0] << 0.8f, 0.6f;
  b.views[1] << 0.4f, static_cast<float>(std::sqrt(1 - 0.16));
  b.viewpoints = {{0, 0}, {0, 90}};
  EXPECT_NEAR(baseline_cosine_score(b), 1.5, 1e-6);
  b.views[1].setZero();
  EXPECT_THROW(baseline_cosine_score(b), DegenerateFeatureError);
}
