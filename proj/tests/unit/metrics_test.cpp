#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "mvqa/errors.hpp"
#include "mvqa/metrics.hpp"

namespace mvqa {
namespace {

using Vec = std::vector<double>;

// Classical Spearman formula for tie-free data, ranks by counting.
double spearman_oracle(const Vec& x, const Vec& y) {
  const std::size_t n = x.size();
  auto rank_of = [](const Vec& v, std::size_t i) {
    return 1.0 + static_cast<double>(std::count_if(v.begin(), v.end(),
                                                   [&](double o) { return o < v[i]; }));
  };
  double d2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rank_of(x, i) - rank_of(y, i);
    d2 += d * d;
  }
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

Vec distinct_values(std::mt19937_64& rng, std::size_t n) {
  Vec v(n);
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), rng);
  std::uniform_real_distribution<double> jitter(0.0, 0.5);
  for (auto& x : v) x = x * 1.7 + jitter(rng);
  return v;
}

TEST(RankTest, Examples) {
  EXPECT_EQ(rank(Vec{10, 30, 20}), (Vec{1, 3, 2}));
  EXPECT_EQ(rank(Vec{5, 5, 1}), (Vec{2.5, 2.5, 1}));
  EXPECT_EQ(rank(Vec{1, 2, 3, 4}), (Vec{1, 2, 3, 4}));
  EXPECT_EQ(rank(Vec{7, 7, 7, 7}), (Vec{2.5, 2.5, 2.5, 2.5}));
}

TEST(PlccTest, Examples) {
  const Vec x{0.3, 1.7, -2.0, 4.4, 0.0};
  Vec affine, neg;
  for (double v : x) {
    affine.push_back(3 * v + 1);
    neg.push_back(-v);
  }
  EXPECT_NEAR(plcc(x, affine), 1.0, 1e-12);
  EXPECT_NEAR(plcc(x, neg), -1.0, 1e-12);
  EXPECT_NEAR(plcc(Vec{1, 2, 3}, Vec{3, 1, 2}), -0.5, 1e-12);
}

TEST(PlccTest, Errors) {
  EXPECT_THROW(plcc(Vec{1, 1, 1}, Vec{1, 2, 3}), DegenerateError);
  EXPECT_THROW(plcc(Vec{1}, Vec{2}), DegenerateError);
  EXPECT_THROW(plcc(Vec{1, 2}, Vec{1, 2, 3}), DimError);
}

TEST(SroccTest, Examples) {
  const Vec x{0.5, -1.0, 2.0, 3.5, 1.0};
  Vec ex;
  for (double v : x) ex.push_back(std::exp(v));
  EXPECT_NEAR(srocc(x, x), 1.0, 1e-12);
  EXPECT_NEAR(srocc(x, ex), 1.0, 1e-12);
  EXPECT_NEAR(srocc(Vec{1, 2, 3}, Vec{3, 1, 2}), -0.5, 1e-12);
  EXPECT_THROW(srocc(Vec{2, 2, 2}, Vec{1, 2, 3}), DegenerateError);
}

TEST(SroccTest, MatchesClassicalFormulaOnTieFreeData) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(2, 20);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = size(rng);
    const auto x = distinct_values(rng, n), y = distinct_values(rng, n);
    EXPECT_NEAR(srocc(x, y), spearman_oracle(x, y), 1e-12) << "n " << n;
  }
}

TEST(SroccTest, InvariantUnderIncreasingMaps) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> slope(0.1, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = distinct_values(rng, 12), y = distinct_values(rng, 12);
    // piecewise-linear increasing map with a break at the median
    const double s1 = slope(rng), s2 = slope(rng), knot = 10.0;
    Vec mapped;
    for (double v : x) mapped.push_back(v < knot ? s1 * v : s1 * knot + s2 * (v - knot));
    EXPECT_NEAR(srocc(mapped, y), srocc(x, y), 1e-12);
    Vec cubed;
    for (double v : y) cubed.push_back(v * v * v - 4.0);
    EXPECT_NEAR(srocc(x, cubed), srocc(x, y), 1e-12);
  }
}

TEST(PlccTest, AffineInvarianceAndSymmetry) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> a(0.1, 10.0), b(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec x(10), y(10);
    for (auto& v : x) v = n(rng);
    for (auto& v : y) v = n(rng);
    const double sa = a(rng), sb = b(rng);
    Vec ax, negx;
    for (double v : x) {
      ax.push_back(sa * v + sb);
      negx.push_back(-sa * v + sb);
    }
    const double r = plcc(x, y);
    EXPECT_NEAR(plcc(ax, y), r, 1e-12);
    EXPECT_NEAR(plcc(negx, y), -r, 1e-12);
    EXPECT_NEAR(plcc(y, x), r, 1e-15);
    EXPECT_NEAR(srocc(y, x), srocc(x, y), 1e-15);
  }
}

TEST(ReportTest, JsonAndTable) {
  const auto r = evaluate_metrics(Vec{1, 2, 3, 4}, Vec{1, 3, 2, 4});
  EXPECT_EQ(r.n, 4u);
  const auto j = nlohmann::json::parse(to_json(r));
  EXPECT_DOUBLE_EQ(j.at("srocc").get<double>(), r.srocc);
  EXPECT_DOUBLE_EQ(j.at("plcc").get<double>(), r.plcc);
  EXPECT_EQ(j.at("n").get<int>(), 4);
  const auto table = to_table(r);
  EXPECT_NE(table.find("SROCC"), std::string::npos);
  EXPECT_NE(table.find("PLCC"), std::string::npos);
}

}  // namespace
}  // namespace mvqa
