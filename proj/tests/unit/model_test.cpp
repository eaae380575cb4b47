#include <gtest/gtest.h>

#include <cmath>

#include "mvqa/errors.hpp"
#include "mvqa/model.hpp"
#include "test_support.hpp"

namespace mvqa {
namespace {

// Tiny-preset geometry with a narrow, shallow network so shape tests stay fast.
ModelConfig tiny_geometry(int dim = 4) {
  auto c = ModelConfig::tiny();
  c.dim = dim;
  c.depth = 0;
  c.head_hidden = dim;
  return c;
}

TEST(ModelConfigTest, PresetsMatchPublishedSizes) {
  const auto tiny = ModelConfig::tiny();
  EXPECT_EQ(tiny.depth, 24);
  EXPECT_EQ(tiny.dim, 192);
  const auto middle = ModelConfig::middle();
  EXPECT_EQ(middle.depth, 32);
  EXPECT_EQ(middle.dim, 576);
  const auto nano = ModelConfig::nano();
  EXPECT_EQ(nano.depth, 2);
  EXPECT_EQ(nano.dim, 32);
  EXPECT_EQ(nano.frames, 8);
  EXPECT_EQ(nano.height, 64);
  EXPECT_THROW(ModelConfig::preset("huge"), ConfigError);
}

TEST(ModelConfigTest, TokenCount) {
  EXPECT_EQ(ModelConfig::tiny().sequence_length(), 6273);
  EXPECT_EQ(ModelConfig::nano().sequence_length(), 8 * 16 + 1);
  for (int t : {1, 3, 16}) {
    for (int h : {16, 48, 112}) {
      auto c = ModelConfig::nano();
      c.frames = t;
      c.height = h;
      c.width = 2 * h;
      EXPECT_EQ(c.sequence_length(), static_cast<long long>(t) * (h / 16) * (2 * h / 16) + 1);
    }
  }
}

TEST(ModelConfigTest, IndivisibleInputRejected) {
  auto c = ModelConfig::nano();
  c.height = 70;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_THROW(init_params<float>(c, 0), ConfigError);
  c = ModelConfig::nano();
  c.patch_t = 2;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(InitParamsTest, DeterministicPerSeed) {
  const auto a = init_params<float>(ModelConfig::nano(), 7);
  const auto b = init_params<float>(ModelConfig::nano(), 7);
  const auto c = init_params<float>(ModelConfig::nano(), 8);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
}

TEST(InitParamsTest, SpatialEmbeddingShape) {
  const auto layout = build_layout(ModelConfig::tiny());
  const auto& ps = layout.at("pos_spatial");
  ASSERT_EQ(ps.shape.size(), 2u);
  EXPECT_EQ(ps.shape[0], 14 * 14 + 1);
  EXPECT_EQ(ps.shape[1], 192);
  EXPECT_EQ(layout.at("pos_temporal").shape[0], 32);
}

TEST(InitParamsTest, TruncatedWithinTwoStd) {
  const auto p = init_params<double>(ModelConfig::nano(), 3);
  for (const char* name : {"embed.weight", "reg_token", "pos_spatial", "pos_temporal",
                           "blocks.0.in_proj.weight", "head.fc1.weight"}) {
    for (double v : p.view(name)) EXPECT_LE(std::abs(v), 0.04) << name;
  }
  for (double v : p.view("embed.bias")) EXPECT_EQ(v, 0.0);
  for (double v : p.view("blocks.1.fwd.D")) EXPECT_EQ(v, 1.0);
  const auto a_log = p.view("blocks.0.bwd.A_log");
  EXPECT_DOUBLE_EQ(a_log[0], 0.0);
  EXPECT_DOUBLE_EQ(a_log[15], std::log(16.0));
}

TEST(Embed3dTest, GridShapeForTinyInput) {
  const auto c = tiny_geometry();
  const auto p = init_params<float>(c, 0);
  const auto clips = testing::random_clips<float>(c, 1, 1);
  const auto grid = embed_3d(clips[0], p);
  EXPECT_EQ(grid.size(), static_cast<std::size_t>(32) * 14 * 14 * 4);
}

TEST(Embed3dTest, Linearity) {
  const auto c = ModelConfig::nano();
  auto p = init_params<double>(c, 0);
  auto clip = testing::random_clips<double>(c, 1, 2)[0];

  auto zero = clip;
  std::fill(zero.data.begin(), zero.data.end(), 0.0);
  for (double v : embed_3d(zero, p)) EXPECT_EQ(v, 0.0);

  auto doubled = clip;
  for (auto& v : doubled.data) v *= 2.0;
  const auto base = embed_3d(clip, p);
  const auto twice = embed_3d(doubled, p);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(twice[i], 2.0 * base[i], 1e-12);
}

TEST(Embed3dTest, WrongClipDims) {
  const auto p = init_params<float>(ModelConfig::nano(), 0);
  BasicClip<float> clip{3, 8, 60, 64, std::vector<float>(3 * 8 * 60 * 64)};
  EXPECT_THROW(embed_3d(clip, p), DimError);
  BasicClip<float> short_clip{3, 4, 64, 64, std::vector<float>(3 * 4 * 64 * 64)};
  EXPECT_THROW(forward(short_clip, p), DimError);
}

TEST(AssembleSequenceTest, LengthAndAssemblyRules) {
  const auto c = tiny_geometry();
  auto p = init_params<double>(c, 5);
  const std::size_t S = 196, D = 4;
  std::vector<double> grid(32 * S * D);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = 0.001 * static_cast<double>(i % 97);
  const auto seq = assemble_sequence<double>(grid, p);
  ASSERT_EQ(seq.size(), 6273 * D);

  const auto reg = p.view("reg_token");
  const auto ps = p.view("pos_spatial");
  const auto pt = p.view("pos_temporal");
  for (std::size_t d = 0; d < D; ++d) EXPECT_DOUBLE_EQ(seq[d], reg[d] + ps[d]);

  for (std::size_t t : {0u, 7u, 31u}) {
    for (std::size_t s : {0u, 13u, 195u}) {
      const std::size_t tok = 1 + t * S + s;
      for (std::size_t d = 0; d < D; ++d) {
        const double expected = grid[(t * S + s) * D + d] + ps[(1 + s) * D + d] + pt[t * D + d];
        EXPECT_DOUBLE_EQ(seq[tok * D + d], expected);
      }
    }
  }
}

TEST(ForwardTest, FiniteAndDeterministic) {
  const auto c = ModelConfig::nano();
  const auto p = init_params<float>(c, 11);
  const auto clip = testing::random_clips<float>(c, 1, 12)[0];
  const float q1 = forward(clip, p);
  const float q2 = forward(clip, p);
  EXPECT_TRUE(std::isfinite(q1));
  EXPECT_EQ(q1, q2);
}

TEST(ForwardTest, CacheDoesNotChangeResult) {
  const auto c = ModelConfig::nano();
  auto p = init_params<double>(c, 1);
  testing::perturb(p, 2, 0.1);
  const auto clip = testing::random_clips<double>(c, 1, 3)[0];
  ForwardCache<double> cache;
  EXPECT_EQ(forward(clip, p), forward(clip, p, &cache));
}

TEST(ForwardGradientTest, FullModelF64) {
  const auto c = ModelConfig::nano();
  auto p = init_params<double>(c, 21);
  testing::perturb(p, 22, 0.05);
  const auto clip = testing::random_clips<double>(c, 1, 23);

  // d Q / d theta against central differences on 16 random coordinates.
  auto fn = [&](std::span<const double> x, std::span<double> grad) {
    MvqaParams<double> q = p;
    std::copy(x.begin(), x.end(), q.values.begin());
    ForwardCache<double> cache;
    const double score = forward(clip[0], q, grad.empty() ? nullptr : &cache);
    if (!grad.empty()) {
      std::fill(grad.begin(), grad.end(), 0.0);
      backward<double>(cache, q, 1.0, grad);
    }
    return score;
  };
  const auto idx = testing::sample_indices(p.values.size(), 16, 24);
  const auto r = grad_check(fn, p.values, 1e-3, idx);
  EXPECT_LT(r.max_rel_error, 1e-4) << "index " << r.worst_index << " analytic "
                                   << r.worst_analytic << " numeric " << r.worst_numeric;
}

TEST(ForwardGradientTest, FullModelF32) {
  const auto c = ModelConfig::nano();
  auto pd = init_params<double>(c, 31);
  testing::perturb(pd, 32, 0.05);
  const auto pf = cast_params<float>(pd);
  const auto clip = testing::random_clips<float>(c, 1, 33);

  ForwardCache<float> cache;
  forward(clip[0], pf, &cache);
  std::vector<float> grad(pf.values.size(), 0.0f);
  backward<float>(cache, pf, 1.0f, grad);

  const auto idx = testing::sample_indices(pf.values.size(), 16, 34);
  double worst = 0;
  for (std::size_t i : idx) {
    constexpr float eps = 1e-2f;
    auto plus = pf, minus = pf;
    plus.values[i] += eps;
    minus.values[i] -= eps;
    const double numeric =
        (static_cast<double>(forward(clip[0], plus)) - forward(clip[0], minus)) / (2.0 * eps);
    const double denom = std::max({std::abs(numeric), std::abs(double(grad[i])), 1e-3});
    worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
  }
  EXPECT_LT(worst, 1e-2);
}

TEST(BatchLossGradientTest, TotalLossF64) {
  const auto c = ModelConfig::nano();
  auto p = init_params<double>(c, 41);
  testing::perturb(p, 42, 0.05);
  const auto clips = testing::random_clips<double>(c, 3, 43);
  const std::vector<double> truth{10.0, 55.0, 90.0};
  const auto fn = testing::model_loss_fn(p, clips, truth, {1.0, 1.0});
  const auto idx = testing::sample_indices(p.values.size(), 12, 44);
  const auto r = grad_check(fn, p.values, 1e-3, idx);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(CountParamsTest, NanoClosedForm) {
  // embed 32*768+32, reg 32, p_s 17*32, p_t 8*32, two blocks of 13760,
  // final norm 64, head 32*32+32 + 32+1
  EXPECT_EQ(count_params(ModelConfig::nano()), 54113u);
  EXPECT_EQ(vim::block_param_count(ModelConfig::nano().block_shape()), 13760u);
}

TEST(CountParamsTest, TinyNearSevenMillion) {
  const double n = static_cast<double>(count_params(ModelConfig::tiny()));
  EXPECT_GT(n, 0.8 * 7e6);
  EXPECT_LT(n, 1.2 * 7e6);
}

TEST(CountParamsTest, DepthIsAdditive) {
  auto c = ModelConfig::nano();
  const auto per_block = vim::block_param_count(c.block_shape());
  const auto base = count_params(c);
  c.depth = 4;
  EXPECT_EQ(count_params(c), base + 2 * per_block);
}

TEST(EstimateFlopsTest, NanoHandCount) {
  const auto r = estimate_flops(ModelConfig::nano());
  // embed 128*768*32, encoder 129*2*17408, head 32*32+32
  EXPECT_DOUBLE_EQ(r.embed_macs, 3145728.0);
  EXPECT_DOUBLE_EQ(r.encoder_macs, 4491264.0);
  EXPECT_DOUBLE_EQ(r.head_macs, 1056.0);
  EXPECT_DOUBLE_EQ(r.flops(), 2.0 * 7638048.0);
}

TEST(EstimateFlopsTest, LinearInFrames) {
  auto c = ModelConfig::tiny();
  const double f32 = estimate_flops(c).flops();
  c.frames = 64;
  const double f64 = estimate_flops(c).flops();
  EXPECT_NEAR(f64 / f32, 2.0, 0.1);
}

TEST(EstimateFlopsTest, TinyWithinFactorTwoOfPublished) {
  // The published column counts one multiply-accumulate as one operation.
  const double macs = estimate_flops(ModelConfig::tiny()).macs();
  EXPECT_GT(macs, 34e9 / 2.0);
  EXPECT_LT(macs, 34e9 * 2.0);
}

}  // namespace
}  // namespace mvqa
