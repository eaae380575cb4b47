#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mvqa/errors.hpp"
#include "mvqa/model.hpp"
#include "mvqa/training.hpp"

namespace mvqa {
namespace {

using Vec = std::vector<double>;

double mon(const Vec& p, const Vec& q) { return loss_mon<double>({p, q}); }
double lin(const Vec& p, const Vec& q) { return loss_lin<double>({p, q}); }

// Pair-by-pair evaluation of the monotonicity loss.
double mon_oracle(const Vec& p, const Vec& q) {
  const std::size_t m = p.size();
  double sum = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double f = q[i] >= q[j] ? 1.0 : -1.0;
      sum += std::max(0.0, std::abs(q[i] - q[j]) - f * (p[i] - p[j]));
    }
  return sum / static_cast<double>(m * m);
}

Vec random_vec(std::mt19937_64& rng, std::size_t m, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vec v(m);
  for (auto& x : v) x = n(rng);
  return v;
}

TEST(LossMonTest, Examples) {
  const Vec q{3.0, 1.0, 4.0, 1.5};
  EXPECT_EQ(mon(q, q), 0.0);
  EXPECT_EQ(mon({2.0, 1.0}, {1.0, 2.0}), 1.0);
  Vec shifted = q;
  for (auto& v : shifted) v += 17.25;
  EXPECT_EQ(mon(shifted, q), 0.0);
}

TEST(LossMonTest, MatchesPairOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + trial % 12;
    const auto p = random_vec(rng, m), q = random_vec(rng, m, 3.0);
    EXPECT_NEAR(mon(p, q), mon_oracle(p, q), 1e-12);
    EXPECT_GE(mon(p, q), 0.0);
  }
}

TEST(LossMonTest, LengthMismatch) {
  EXPECT_THROW(mon({1.0, 2.0}, {1.0}), DimError);
}

TEST(LossLinTest, Examples) {
  const Vec q{0.5, 2.0, -1.0, 3.5, 0.0};
  Vec affine, neg, constant(q.size(), 4.0);
  for (double v : q) {
    affine.push_back(2.0 * v + 3.0);
    neg.push_back(-v);
  }
  EXPECT_LE(lin(affine, q), 1e-6);
  EXPECT_NEAR(lin(neg, q), 1.0, 1e-6);
  EXPECT_NEAR(lin(constant, q), 0.5, 1e-12);
  EXPECT_THROW(lin({1.0}, {1.0}), DimError);
}

TEST(LossLinTest, InvariantToPositiveAffinePrediction) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_vec(rng, 8), q = random_vec(rng, 8);
    Vec mapped;
    for (double v : p) mapped.push_back(0.7 * v - 5.0);
    EXPECT_NEAR(lin(mapped, q), lin(p, q), 1e-9);
    const double l = lin(p, q);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
  }
}

TEST(LossTotalTest, Weights) {
  const Vec q{1.0, 2.0}, p{2.0, 1.0};
  EXPECT_LE(loss_total<double>({q, q}, {1.0, 1.0}), 1e-6);
  EXPECT_EQ(loss_total<double>({p, q}, {1.0, 0.0}), 1.0);
  const Vec p3{0.1, 0.9, 0.3}, q3{1.0, 3.0, 2.0};
  EXPECT_DOUBLE_EQ(loss_total<double>({p3, q3}, {0.0, 2.0}), 2.0 * lin(p3, q3));
  EXPECT_THROW(loss_total<double>({p, q}, {0.0, 0.0}), ConfigError);
  EXPECT_THROW(loss_total<double>({p, q}, {-1.0, 1.0}), ConfigError);
}

DifferentiableFn loss_fn(const Vec& truth, int which) {
  return [truth, which](std::span<const double> x, std::span<double> grad) {
    const ScoreBatch<double> b{x, truth};
    if (which == 0) return loss_mon<double>(b, grad);
    if (which == 1) return loss_lin<double>(b, grad);
    return loss_total<double>(b, {0.6, 1.3}, grad);
  };
}

TEST(LossGradientTest, LinearityLoss) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_vec(rng, 8), q = random_vec(rng, 8);
    EXPECT_LT(grad_check(loss_fn(q, 1), p, 1e-6).max_rel_error, 1e-6);
  }
}

// Scores on a 2^-10 grid so every loss term and the 2^-20 difference step are
// exact in double; the central difference is then exact away from kinks.
Vec dyadic_vec(std::mt19937_64& rng, std::size_t m) {
  auto v = random_vec(rng, m);
  for (auto& x : v) x = std::round(x * 1024.0) / 1024.0;
  return v;
}

TEST(LossGradientTest, MonotonicityLossAwayFromHinge) {
  std::mt19937_64 rng(4);
  const double eps = std::ldexp(1.0, -20);
  int checked = 0;
  for (int trial = 0; trial < 50 && checked < 10; ++trial) {
    const auto p = dyadic_vec(rng, 8), q = dyadic_vec(rng, 8);
    bool on_kink = false;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        if (i == j) continue;
        const double f = q[i] >= q[j] ? 1.0 : -1.0;
        on_kink |= std::abs(q[i] - q[j]) - f * (p[i] - p[j]) == 0.0;
      }
    if (on_kink) continue;
    ++checked;
    EXPECT_LT(grad_check(loss_fn(q, 0), p, eps).max_rel_error, 1e-6);
    EXPECT_LT(grad_check(loss_fn(q, 2), p, 1e-6).max_rel_error, 1e-6);
  }
  EXPECT_EQ(checked, 10);
}

TEST(LossGradientTest, HingeKinkUsesZeroSubgradient) {
  // Pair (0, 1) sits exactly on its kink; pair terms with i == j always do.
  const Vec q{1.0, 2.0}, p{0.0, 1.0};
  Vec g(2);
  EXPECT_EQ(loss_mon<double>({p, q}, g), 0.0);
  EXPECT_EQ(g, (Vec{0.0, 0.0}));
}

TEST(LossGradientTest, FloatMatchesDouble) {
  std::mt19937_64 rng(5);
  const auto p = random_vec(rng, 6), q = random_vec(rng, 6);
  const std::vector<float> pf(p.begin(), p.end()), qf(q.begin(), q.end());
  std::vector<float> gf(6);
  Vec gd(6);
  const float lf = loss_total<float>({pf, qf}, {1.0, 1.0}, gf);
  const double ld = loss_total<double>({p, q}, {1.0, 1.0}, gd);
  EXPECT_NEAR(lf, ld, 1e-5);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(gf[i], gd[i], 1e-5);
}

TEST(GradCheckTest, Quadratic) {
  const DifferentiableFn sq = [](std::span<const double> x, std::span<double> g) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      s += x[i] * x[i];
      if (!g.empty()) g[i] = 2 * x[i];
    }
    return s;
  };
  const Vec x{1.0, 2.0};
  const auto r = grad_check(sq, x, 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_EQ(r.checked, 2u);
  Vec g(2);
  sq(x, g);
  EXPECT_EQ(g, (Vec{2.0, 4.0}));
}

TEST(GradCheckTest, FourthOrderStencilIsExactOnQuartics) {
  const DifferentiableFn quartic = [](std::span<const double> x, std::span<double> g) {
    if (!g.empty()) g[0] = 4 * x[0] * x[0] * x[0];
    return x[0] * x[0] * x[0] * x[0];
  };
  const Vec x{1.5};
  EXPECT_LT(grad_check(quartic, x, 0.1, {}, DifferenceStencil::kCentral4).max_rel_error, 1e-12);
  // The two-point stencil is off by eps^2 f'''(x) / 6 = 0.06.
  const auto r2 = grad_check(quartic, x, 0.1);
  EXPECT_NEAR(r2.worst_numeric - r2.worst_analytic, 0.06, 1e-9);
}

TEST(GradCheckTest, DetectsWrongGradientAndNonFinite) {
  const DifferentiableFn wrong = [](std::span<const double> x, std::span<double> g) {
    if (!g.empty()) g[0] = 3 * x[0];
    return x[0] * x[0];
  };
  EXPECT_GT(grad_check(wrong, Vec{1.0}, 1e-5).max_rel_error, 0.3);
  const DifferentiableFn bad = [](std::span<const double> x, std::span<double> g) {
    if (!g.empty()) g[0] = 0;
    return std::log(x[0]);
  };
  EXPECT_THROW(grad_check(bad, Vec{0.0}, 1e-3), NumericError);
}

TEST(CosineTest, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.0025, 0, 300), 0.0025);
  EXPECT_NEAR(cosine_lr(0.0025, 150, 300), 0.00125, 1e-15);
  EXPECT_LT(cosine_lr(0.0025, 299, 300), 1e-3 * 0.0025);
}

TEST(AdamWTest, FirstStepMovesBySignedRate) {
  // After one step the bias-corrected update is lr * g / (|g| + eps).
  AdamW opt(3, {0.9, 0.999, 1e-8, 0.0});
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -4.0, 0.0};
  opt.step<double>(p, g, 0.01);
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-9);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(opt.steps_taken(), 1u);
}

TEST(AdamWTest, DecoupledDecayRespectsMask) {
  AdamW opt(2, {0.9, 0.999, 1e-8, 0.1});
  opt.set_decay_mask({1, 0});
  std::vector<double> p{2.0, 2.0};
  const std::vector<double> g{0.0, 0.0};
  opt.step<double>(p, g, 0.5);
  EXPECT_DOUBLE_EQ(p[0], 2.0 * (1.0 - 0.5 * 0.1));
  EXPECT_EQ(p[1], 2.0);
}

TEST(DecayMaskTest, OnlyMatricesDecay) {
  const auto layout = build_layout(ModelConfig::nano());
  const auto mask = default_decay_mask(layout);
  ASSERT_EQ(mask.size(), layout.total());
  EXPECT_EQ(mask[layout.at("embed.weight").offset], 1);
  EXPECT_EQ(mask[layout.at("blocks.0.in_proj.weight").offset], 1);
  EXPECT_EQ(mask[layout.at("embed.bias").offset], 0);
  EXPECT_EQ(mask[layout.at("blocks.0.norm.weight").offset], 0);
  EXPECT_EQ(mask[layout.at("blocks.1.fwd.A_log").offset], 0);
  EXPECT_EQ(mask[layout.at("pos_spatial").offset], 0);
}

}  // namespace
}  // namespace mvqa
