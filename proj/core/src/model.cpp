#include "mvqa/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mvqa/errors.hpp"
#include "mvqa/nn.hpp"

namespace mvqa {
namespace {

std::string block_prefix(int i) { return "blocks." + std::to_string(i); }

template <typename T>
void fill_trunc_normal(std::span<T> out, std::mt19937_64& rng, double std_dev) {
  std::normal_distribution<double> normal(0.0, std_dev);
  for (auto& v : out) {
    double x = normal(rng);
    while (std::abs(x) > 2.0 * std_dev) x = normal(rng);
    v = static_cast<T>(x);
  }
}

template <typename T>
void fill_uniform(std::span<T> out, std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : out) v = static_cast<T>(u(rng));
}

}  // namespace

ModelConfig ModelConfig::nano() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.variant = "tiny";
  c.depth = 24;
  c.dim = 192;
  c.frames = 32;
  c.height = 224;
  c.width = 224;
  c.head_hidden = 192;
  return c;
}

ModelConfig ModelConfig::middle() {
  ModelConfig c = tiny();
  c.variant = "middle";
  c.depth = 32;
  c.dim = 576;
  c.head_hidden = 576;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "nano") return nano();
  if (name == "tiny") return tiny();
  if (name == "middle") return middle();
  throw ConfigError("unknown model preset '" + name + "'");
}

vim::VimShape ModelConfig::block_shape() const {
  return vim::VimShape::for_dim(dim, expand, d_state, conv_width);
}

void validate(const ModelConfig& c) {
  if (c.depth < 0 || c.dim < 1 || c.head_hidden < 1 || c.frames < 1 || c.height < 1 ||
      c.width < 1 || c.patch_h < 1 || c.patch_w < 1 || c.expand < 1 || c.d_state < 1 ||
      c.conv_width < 1) {
    throw ConfigError("model widths and input dims must be positive");
  }
  if (c.channels != 1 && c.channels != 3) throw ConfigError("channels must be 1 or 3");
  if (c.patch_t != 1) throw ConfigError("patch_t must be 1");
  if (c.height % c.patch_h != 0 || c.width % c.patch_w != 0) {
    throw ConfigError("input " + std::to_string(c.height) + "x" + std::to_string(c.width) +
                      " is not divisible by patch " + std::to_string(c.patch_h) + "x" +
                      std::to_string(c.patch_w));
  }
}

ParamLayout build_layout(const ModelConfig& c) {
  validate(c);
  ParamLayout layout;
  layout.add("embed.weight", {c.dim, c.patch_inputs()});
  layout.add("embed.bias", {c.dim});
  layout.add("reg_token", {c.dim});
  layout.add("pos_spatial", {c.tokens_per_frame() + 1, c.dim});
  layout.add("pos_temporal", {c.frames, c.dim});
  const auto shape = c.block_shape();
  for (int i = 0; i < c.depth; ++i) vim::append_block_layout(layout, block_prefix(i), shape);
  layout.add("norm_f.weight", {c.dim});
  layout.add("norm_f.bias", {c.dim});
  layout.add("head.fc1.weight", {c.head_hidden, c.dim});
  layout.add("head.fc1.bias", {c.head_hidden});
  layout.add("head.fc2.weight", {1, c.head_hidden});
  layout.add("head.fc2.bias", {1});
  return layout;
}

template <typename T>
MvqaParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  MvqaParams<T> p{config, build_layout(config), {}};
  p.values.assign(p.layout.total(), T(0));
  std::mt19937_64 rng(seed);
  constexpr double kStd = 0.02;

  fill_trunc_normal(p.view("embed.weight"), rng, kStd);
  fill_trunc_normal(p.view("reg_token"), rng, kStd);
  fill_trunc_normal(p.view("pos_spatial"), rng, kStd);
  fill_trunc_normal(p.view("pos_temporal"), rng, kStd);

  const auto s = config.block_shape();
  for (int i = 0; i < config.depth; ++i) {
    const auto prefix = block_prefix(i);
    std::ranges::fill(p.view(prefix + ".norm.weight"), T(1));
    fill_trunc_normal(p.view(prefix + ".in_proj.weight"), rng, kStd);
    fill_trunc_normal(p.view(prefix + ".out_proj.weight"), rng, kStd);
    for (const char* dir : {".fwd", ".bwd"}) {
      const auto b = prefix + dir;
      fill_uniform(p.view(b + ".conv.weight"), rng, 1.0 / std::sqrt(double(s.conv_width)));
      fill_trunc_normal(p.view(b + ".x_proj.weight"), rng, kStd);
      fill_uniform(p.view(b + ".dt_proj.weight"), rng, 1.0 / std::sqrt(double(s.dt_rank)));
      // delta initialised log-uniform in [1e-3, 1e-1]; the bias is its softplus inverse.
      std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
      for (auto& bias : p.view(b + ".dt_proj.bias")) {
        const double dt = std::exp(u(rng));
        bias = static_cast<T>(dt + std::log(-std::expm1(-dt)));
      }
      auto a_log = p.view(b + ".A_log");
      for (int ch = 0; ch < s.d_inner; ++ch)
        for (int n = 0; n < s.d_state; ++n)
          a_log[static_cast<std::size_t>(ch) * s.d_state + n] = static_cast<T>(std::log(n + 1.0));
      std::ranges::fill(p.view(b + ".D"), T(1));
    }
  }
  std::ranges::fill(p.view("norm_f.weight"), T(1));
  fill_trunc_normal(p.view("head.fc1.weight"), rng, kStd);
  fill_trunc_normal(p.view("head.fc2.weight"), rng, kStd);
  return p;
}

template <typename T>
static void check_clip(const BasicClip<T>& clip, const ModelConfig& c) {
  if (clip.channels != c.channels || clip.frames != c.frames || clip.height != c.height ||
      clip.width != c.width) {
    throw DimError("clip " + std::to_string(clip.channels) + "x" + std::to_string(clip.frames) +
                   "x" + std::to_string(clip.height) + "x" + std::to_string(clip.width) +
                   " does not match model input " + std::to_string(c.channels) + "x" +
                   std::to_string(c.frames) + "x" + std::to_string(c.height) + "x" +
                   std::to_string(c.width));
  }
  if (clip.data.size() != static_cast<std::size_t>(clip.channels) * clip.frames * clip.height *
                              clip.width) {
    throw DimError("clip buffer size does not match its dims");
  }
}

// Gathers tubelets into rows of patch_inputs values, ordered (c, py, px).
template <typename T>
static std::vector<T> extract_patches(const BasicClip<T>& clip, const ModelConfig& c) {
  const int Hp = c.grid_h(), Wp = c.grid_w(), P = c.patch_inputs();
  std::vector<T> patches(static_cast<std::size_t>(c.frames) * Hp * Wp * P);
  for (int t = 0; t < c.frames; ++t)
    for (int i = 0; i < Hp; ++i)
      for (int j = 0; j < Wp; ++j) {
        T* row = &patches[((static_cast<std::size_t>(t) * Hp + i) * Wp + j) * P];
        for (int ch = 0; ch < c.channels; ++ch)
          for (int py = 0; py < c.patch_h; ++py) {
            const T* src = &clip.data[clip.index(ch, t, i * c.patch_h + py, j * c.patch_w)];
            std::copy_n(src, c.patch_w, row + (ch * c.patch_h + py) * c.patch_w);
          }
      }
  return patches;
}

template <typename T>
std::vector<T> embed_3d(const BasicClip<T>& clip, const MvqaParams<T>& params) {
  const auto& c = params.config;
  if (clip.height % c.patch_h != 0 || clip.width % c.patch_w != 0) {
    throw DimError("clip dims are not divisible by the patch size");
  }
  check_clip(clip, c);
  const auto patches = extract_patches(clip, c);
  const int rows = c.frames * c.tokens_per_frame();
  std::vector<T> grid(static_cast<std::size_t>(rows) * c.dim);
  nn::linear<T>(patches, params.view("embed.weight"), params.view("embed.bias"), rows,
                c.patch_inputs(), c.dim, grid);
  return grid;
}

template <typename T>
std::vector<T> assemble_sequence(std::span<const T> grid, const MvqaParams<T>& params) {
  const auto& c = params.config;
  const int S = c.tokens_per_frame(), D = c.dim;
  if (grid.size() != static_cast<std::size_t>(c.frames) * S * D) {
    throw DimError("token grid does not match model config");
  }
  const auto ordered = vim::scan_order<T>(grid, c.frames, c.grid_h(), c.grid_w(), D);
  const auto reg = params.view("reg_token");
  const auto ps = params.view("pos_spatial");
  const auto pt = params.view("pos_temporal");
  const auto L = static_cast<std::size_t>(c.sequence_length());
  std::vector<T> seq(L * D);
  for (int d = 0; d < D; ++d) seq[d] = reg[d] + ps[d];
  for (int t = 0; t < c.frames; ++t)
    for (int s = 0; s < S; ++s) {
      const std::size_t tok = 1 + static_cast<std::size_t>(t) * S + s;
      const T* src = &ordered[(tok - 1) * D];
      const T* pos = &ps[static_cast<std::size_t>(1 + s) * D];
      const T* tim = &pt[static_cast<std::size_t>(t) * D];
      for (int d = 0; d < D; ++d) seq[tok * D + d] = src[d] + pos[d] + tim[d];
    }
  return seq;
}

template <typename T>
std::vector<T> encode(std::span<const T> sequence, int length, const MvqaParams<T>& params) {
  const auto shape = params.config.block_shape();
  std::vector<T> x(sequence.begin(), sequence.end());
  const std::span<const T> flat(params.values);
  for (int i = 0; i < params.config.depth; ++i) {
    const auto view = vim::bind_block(params.layout, block_prefix(i), flat);
    x = vim::vim_block<T>(x, length, shape, view, nullptr);
  }
  return x;
}

template <typename T>
T forward(const BasicClip<T>& clip, const MvqaParams<T>& params, ForwardCache<T>* cache) {
  const auto& c = params.config;
  check_clip(clip, c);
  const int rows = c.frames * c.tokens_per_frame();
  const int L = static_cast<int>(c.sequence_length());
  const int D = c.dim, Hd = c.head_hidden;

  auto patches = extract_patches(clip, c);
  std::vector<T> grid(static_cast<std::size_t>(rows) * D);
  nn::linear<T>(patches, params.view("embed.weight"), params.view("embed.bias"), rows,
                c.patch_inputs(), D, grid);
  auto x = assemble_sequence<T>(grid, params);

  const auto shape = c.block_shape();
  const std::span<const T> flat(params.values);
  if (cache) {
    cache->patches = std::move(patches);
    cache->blocks.resize(static_cast<std::size_t>(c.depth));
  }
  for (int i = 0; i < c.depth; ++i) {
    const auto view = vim::bind_block(params.layout, block_prefix(i), flat);
    x = vim::vim_block<T>(x, L, shape, view, cache ? &cache->blocks[i] : nullptr);
  }

  std::vector<T> f(D), xhat(D), rstd(1);
  nn::layer_norm<T>(std::span<const T>(x).first(D), params.view("norm_f.weight"),
                    params.view("norm_f.bias"), 1, D, f, xhat, rstd);
  std::vector<T> pre(Hd), hidden(Hd);
  nn::linear<T>(f, params.view("head.fc1.weight"), params.view("head.fc1.bias"), 1, D, Hd, pre);
  std::transform(pre.begin(), pre.end(), hidden.begin(), [](T v) { return nn::gelu(v); });
  T score = 0;
  nn::linear<T>(hidden, params.view("head.fc2.weight"), params.view("head.fc2.bias"), 1, Hd, 1,
                std::span<T>(&score, 1));
  if (cache) {
    cache->head_in = std::move(f);
    cache->head_xhat = std::move(xhat);
    cache->head_rstd = std::move(rstd);
    cache->hidden_pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return score;
}

template <typename T>
void backward(const ForwardCache<T>& cache, const MvqaParams<T>& params, T dscore,
              std::span<T> grads) {
  const auto& c = params.config;
  const auto& layout = params.layout;
  const int D = c.dim, Hd = c.head_hidden, S = c.tokens_per_frame();
  const int L = static_cast<int>(c.sequence_length());
  const int rows = c.frames * S;
  auto g = [&](const std::string& name) { return layout.view(grads, name); };

  // head
  std::vector<T> dhidden(Hd, T(0));
  nn::linear_backward<T>(cache.hidden, params.view("head.fc2.weight"),
                         std::span<const T>(&dscore, 1), 1, Hd, 1, dhidden,
                         g("head.fc2.weight"), g("head.fc2.bias"));
  std::vector<T> dpre(Hd);
  for (int i = 0; i < Hd; ++i) dpre[i] = dhidden[i] * nn::gelu_grad(cache.hidden_pre[i]);
  std::vector<T> df(D, T(0));
  nn::linear_backward<T>(cache.head_in, params.view("head.fc1.weight"), dpre, 1, D, Hd, df,
                         g("head.fc1.weight"), g("head.fc1.bias"));

  std::vector<T> dx(static_cast<std::size_t>(L) * D, T(0));
  nn::layer_norm_backward<T>(cache.head_xhat, cache.head_rstd, params.view("norm_f.weight"), df,
                             1, D, std::span<T>(dx).first(D), g("norm_f.weight"),
                             g("norm_f.bias"));

  // encoder, last block first
  const auto shape = c.block_shape();
  const std::span<const T> flat(params.values);
  for (int i = c.depth - 1; i >= 0; --i) {
    const auto view = vim::bind_block(params.layout, block_prefix(i), flat);
    const auto gview = vim::bind_block(params.layout, block_prefix(i), grads);
    std::vector<T> dprev(dx.size(), T(0));
    vim::vim_block_backward<T>(dx, shape, view, cache.blocks[i], gview, dprev);
    dx = std::move(dprev);
  }

  // sequence assembly
  auto dreg = g("reg_token");
  auto dps = g("pos_spatial");
  auto dpt = g("pos_temporal");
  for (int d = 0; d < D; ++d) {
    dreg[d] += dx[d];
    dps[d] += dx[d];
  }
  std::vector<T> dgrid(static_cast<std::size_t>(rows) * D);
  for (int t = 0; t < c.frames; ++t)
    for (int s = 0; s < S; ++s) {
      const std::size_t tok = 1 + static_cast<std::size_t>(t) * S + s;
      for (int d = 0; d < D; ++d) {
        const T v = dx[tok * D + d];
        dgrid[(tok - 1) * D + d] = v;
        dps[static_cast<std::size_t>(1 + s) * D + d] += v;
        dpt[static_cast<std::size_t>(t) * D + d] += v;
      }
    }

  nn::linear_backward<T>(cache.patches, params.view("embed.weight"), dgrid, rows,
                         c.patch_inputs(), D, {}, g("embed.weight"), g("embed.bias"));
}

std::size_t count_params(const ModelConfig& config) { return build_layout(config).total(); }

double block_macs_per_token(const vim::VimShape& s) {
  const double di = s.d_inner;
  const double branch = di * s.conv_width          // depthwise conv
                        + di * s.proj_width()      // x_proj
                        + di * s.dt_rank           // dt_proj
                        + 3.0 * di * s.d_state;    // decay*h, (delta u)*B, C*h
  return s.dim * 2.0 * di + 2.0 * branch + di * s.dim;
}

FlopReport estimate_flops(const ModelConfig& config) {
  validate(config);
  FlopReport r;
  const double patches = static_cast<double>(config.frames) * config.tokens_per_frame();
  r.embed_macs = patches * config.patch_inputs() * config.dim;
  r.encoder_macs = static_cast<double>(config.sequence_length()) * config.depth *
                   block_macs_per_token(config.block_shape());
  r.head_macs = static_cast<double>(config.dim) * config.head_hidden + config.head_hidden;
  return r;
}

#define MVQA_INSTANTIATE_MODEL(T)                                                         \
  template MvqaParams<T> init_params<T>(const ModelConfig&, std::uint64_t);               \
  template std::vector<T> embed_3d(const BasicClip<T>&, const MvqaParams<T>&);            \
  template std::vector<T> assemble_sequence(std::span<const T>, const MvqaParams<T>&);    \
  template std::vector<T> encode(std::span<const T>, int, const MvqaParams<T>&);          \
  template T forward(const BasicClip<T>&, const MvqaParams<T>&, ForwardCache<T>*);        \
  template void backward(const ForwardCache<T>&, const MvqaParams<T>&, T, std::span<T>);

MVQA_INSTANTIATE_MODEL(float)
MVQA_INSTANTIATE_MODEL(double)

#undef MVQA_INSTANTIATE_MODEL

}  // namespace mvqa
