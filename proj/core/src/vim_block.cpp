#include "mvqa/vim_block.hpp"

#include <algorithm>
#include <cmath>

#include "mvqa/errors.hpp"
#include "mvqa/nn.hpp"

namespace mvqa::vim {
namespace {

// Reverses the order of `rows` rows of `width` elements.
template <typename T>
void flip_rows(std::span<const T> src, int rows, int width, std::span<T> dst) {
  for (int r = 0; r < rows; ++r) {
    std::copy_n(&src[static_cast<std::size_t>(r) * width], width,
                &dst[static_cast<std::size_t>(rows - 1 - r) * width]);
  }
}

template <typename T>
void add_flipped_rows(std::span<const T> src, int rows, int width, std::span<T> dst) {
  for (int r = 0; r < rows; ++r) {
    const T* s = &src[static_cast<std::size_t>(r) * width];
    T* d = &dst[static_cast<std::size_t>(rows - 1 - r) * width];
    for (int i = 0; i < width; ++i) d[i] += s[i];
  }
}

template <typename U>
BranchView<U> bind_branch(const ParamLayout& layout, const std::string& prefix,
                          std::span<U> flat) {
  return {layout.view(flat, prefix + ".conv.weight"),    layout.view(flat, prefix + ".conv.bias"),
          layout.view(flat, prefix + ".x_proj.weight"),  layout.view(flat, prefix + ".dt_proj.weight"),
          layout.view(flat, prefix + ".dt_proj.bias"),   layout.view(flat, prefix + ".A_log"),
          layout.view(flat, prefix + ".D")};
}

void append_branch_layout(ParamLayout& layout, const std::string& prefix, const VimShape& s) {
  layout.add(prefix + ".conv.weight", {s.d_inner, s.conv_width});
  layout.add(prefix + ".conv.bias", {s.d_inner});
  layout.add(prefix + ".x_proj.weight", {s.proj_width(), s.d_inner});
  layout.add(prefix + ".dt_proj.weight", {s.d_inner, s.dt_rank});
  layout.add(prefix + ".dt_proj.bias", {s.d_inner});
  layout.add(prefix + ".A_log", {s.d_inner, s.d_state});
  layout.add(prefix + ".D", {s.d_inner});
}

}  // namespace

VimShape VimShape::for_dim(int dim, int expand, int d_state, int conv_width) {
  if (dim < 1 || expand < 1 || d_state < 1 || conv_width < 1) {
    throw ConfigError("block widths must be positive");
  }
  VimShape s;
  s.dim = dim;
  s.d_inner = expand * dim;
  s.d_state = d_state;
  s.dt_rank = (dim + 15) / 16;
  s.conv_width = conv_width;
  return s;
}

void append_block_layout(ParamLayout& layout, const std::string& prefix, const VimShape& s) {
  layout.add(prefix + ".norm.weight", {s.dim});
  layout.add(prefix + ".norm.bias", {s.dim});
  layout.add(prefix + ".in_proj.weight", {2 * s.d_inner, s.dim});
  append_branch_layout(layout, prefix + ".fwd", s);
  append_branch_layout(layout, prefix + ".bwd", s);
  layout.add(prefix + ".out_proj.weight", {s.dim, s.d_inner});
}

std::size_t block_param_count(const VimShape& s) {
  ParamLayout layout;
  append_block_layout(layout, "b", s);
  return layout.total();
}

template <typename U>
BlockView<U> bind_block(const ParamLayout& layout, const std::string& prefix, std::span<U> flat) {
  return {layout.view(flat, prefix + ".norm.weight"), layout.view(flat, prefix + ".norm.bias"),
          layout.view(flat, prefix + ".in_proj.weight"),
          layout.view(flat, prefix + ".out_proj.weight"),
          bind_branch(layout, prefix + ".fwd", flat), bind_branch(layout, prefix + ".bwd", flat)};
}

template <typename T>
void selective_scan(std::span<const T> x, int length, const VimShape& s,
                    const BranchView<const T>& p, ssm::Direction direction, std::span<T> y,
                    BranchCache<T>* cache) {
  const int L = length, Di = s.d_inner, N = s.d_state, R = s.dt_rank, K = s.conv_width;
  const int P = s.proj_width();
  const std::size_t LDi = static_cast<std::size_t>(L) * Di;
  BranchCache<T> local;
  BranchCache<T>& c = cache ? *cache : local;

  c.xs.resize(LDi);
  if (direction == ssm::Direction::kForward) {
    std::copy_n(x.begin(), LDi, c.xs.begin());
  } else {
    flip_rows<T>(x, L, Di, c.xs);
  }

  c.conv.resize(LDi);
  c.u.resize(LDi);
  for (int k = 0; k < L; ++k) {
    for (int ch = 0; ch < Di; ++ch) {
      T acc = p.conv_b[ch];
      for (int j = 0; j < K; ++j) {
        const int src = k - (K - 1) + j;
        if (src >= 0) acc += p.conv_w[static_cast<std::size_t>(ch) * K + j] *
                             c.xs[static_cast<std::size_t>(src) * Di + ch];
      }
      c.conv[static_cast<std::size_t>(k) * Di + ch] = acc;
      c.u[static_cast<std::size_t>(k) * Di + ch] = nn::silu(acc);
    }
  }

  c.proj.resize(static_cast<std::size_t>(L) * P);
  nn::linear<T>(c.u, p.x_proj, {}, L, Di, P, c.proj);

  c.dt_raw.resize(LDi);
  c.delta.resize(LDi);
  c.b.resize(static_cast<std::size_t>(L) * N);
  c.c.resize(static_cast<std::size_t>(L) * N);
  for (int k = 0; k < L; ++k) {
    const T* row = &c.proj[static_cast<std::size_t>(k) * P];
    for (int ch = 0; ch < Di; ++ch) {
      T acc = p.dt_b[ch];
      const T* w = &p.dt_w[static_cast<std::size_t>(ch) * R];
      for (int i = 0; i < R; ++i) acc += row[i] * w[i];
      c.dt_raw[static_cast<std::size_t>(k) * Di + ch] = acc;
      c.delta[static_cast<std::size_t>(k) * Di + ch] = nn::softplus(acc);
    }
    std::copy_n(row + R, N, &c.b[static_cast<std::size_t>(k) * N]);
    std::copy_n(row + R + N, N, &c.c[static_cast<std::size_t>(k) * N]);
  }
  c.a.resize(static_cast<std::size_t>(Di) * N);
  for (std::size_t i = 0; i < c.a.size(); ++i) c.a[i] = -std::exp(p.a_log[i]);

  if (cache) c.states.resize(LDi * N);
  std::vector<T> ys(LDi);
  const ssm::SelectiveInputs<T> in{c.u, c.delta, c.a, c.b, c.c, p.d, L, Di, N};
  ssm::selective_scan_kernel<T>(in, ssm::Direction::kForward, ys,
                                cache ? std::span<T>(c.states) : std::span<T>());

  if (direction == ssm::Direction::kForward) {
    std::copy(ys.begin(), ys.end(), y.begin());
  } else {
    flip_rows<T>(ys, L, Di, y);
  }
}

template <typename T>
void selective_scan_backward(std::span<const T> dy, int length, const VimShape& s,
                             const BranchView<const T>& p, ssm::Direction direction,
                             const BranchCache<T>& c, const BranchView<T>& g, std::span<T> dx) {
  const int L = length, Di = s.d_inner, N = s.d_state, R = s.dt_rank, K = s.conv_width;
  const int P = s.proj_width();
  const std::size_t LDi = static_cast<std::size_t>(L) * Di;

  std::vector<T> dys(LDi);
  if (direction == ssm::Direction::kForward) {
    std::copy_n(dy.begin(), LDi, dys.begin());
  } else {
    flip_rows<T>(dy, L, Di, dys);
  }

  std::vector<T> du(LDi, T(0)), ddelta(LDi, T(0));
  std::vector<T> da(static_cast<std::size_t>(Di) * N, T(0));
  std::vector<T> db(static_cast<std::size_t>(L) * N, T(0)), dc(db.size(), T(0));
  const ssm::SelectiveInputs<T> in{c.u, c.delta, c.a, c.b, c.c, p.d, L, Di, N};
  ssm::selective_scan_backward<T>(in, ssm::Direction::kForward, c.states, dys,
                                  {du, ddelta, da, db, dc, g.d});

  for (std::size_t i = 0; i < da.size(); ++i) g.a_log[i] += da[i] * c.a[i];

  std::vector<T> dproj(static_cast<std::size_t>(L) * P, T(0));
  for (int k = 0; k < L; ++k) {
    const T* row = &c.proj[static_cast<std::size_t>(k) * P];
    T* drow = &dproj[static_cast<std::size_t>(k) * P];
    for (int ch = 0; ch < Di; ++ch) {
      const std::size_t kc = static_cast<std::size_t>(k) * Di + ch;
      const T gdt = ddelta[kc] * nn::sigmoid(c.dt_raw[kc]);
      if (gdt == T(0)) continue;
      g.dt_b[ch] += gdt;
      const T* w = &p.dt_w[static_cast<std::size_t>(ch) * R];
      T* dw = &g.dt_w[static_cast<std::size_t>(ch) * R];
      for (int i = 0; i < R; ++i) {
        dw[i] += gdt * row[i];
        drow[i] += gdt * w[i];
      }
    }
    for (int n = 0; n < N; ++n) {
      drow[R + n] += db[static_cast<std::size_t>(k) * N + n];
      drow[R + N + n] += dc[static_cast<std::size_t>(k) * N + n];
    }
  }
  nn::linear_backward<T>(c.u, p.x_proj, dproj, L, Di, P, du, g.x_proj, {});

  std::vector<T> dxs(LDi, T(0));
  for (int k = 0; k < L; ++k) {
    for (int ch = 0; ch < Di; ++ch) {
      const std::size_t kc = static_cast<std::size_t>(k) * Di + ch;
      const T gc = du[kc] * nn::silu_grad(c.conv[kc]);
      g.conv_b[ch] += gc;
      for (int j = 0; j < K; ++j) {
        const int src = k - (K - 1) + j;
        if (src < 0) continue;
        const std::size_t sc = static_cast<std::size_t>(src) * Di + ch;
        g.conv_w[static_cast<std::size_t>(ch) * K + j] += gc * c.xs[sc];
        dxs[sc] += gc * p.conv_w[static_cast<std::size_t>(ch) * K + j];
      }
    }
  }

  if (direction == ssm::Direction::kForward) {
    for (std::size_t i = 0; i < LDi; ++i) dx[i] += dxs[i];
  } else {
    add_flipped_rows<T>(dxs, L, Di, dx);
  }
}

template <typename T>
std::vector<T> vim_block(std::span<const T> tokens, int length, const VimShape& s,
                         const BlockView<const T>& p, BlockCache<T>* cache) {
  const int L = length, D = s.dim, Di = s.d_inner;
  const std::size_t LD = static_cast<std::size_t>(L) * D;
  const std::size_t LDi = static_cast<std::size_t>(L) * Di;
  if (tokens.size() != LD) throw DimError("token buffer does not match length x dim");

  BlockCache<T> local;
  BlockCache<T>& c = cache ? *cache : local;
  c.length = L;
  c.xhat.resize(LD);
  c.rstd.resize(static_cast<std::size_t>(L));
  c.xn.resize(LD);
  nn::layer_norm<T>(tokens, p.norm_w, p.norm_b, L, D, c.xn, c.xhat, c.rstd);

  c.xz.resize(LDi * 2);
  nn::linear<T>(c.xn, p.in_proj, {}, L, D, 2 * Di, c.xz);

  std::vector<T> x_in(LDi);
  for (int k = 0; k < L; ++k) {
    std::copy_n(&c.xz[static_cast<std::size_t>(k) * 2 * Di], Di,
                &x_in[static_cast<std::size_t>(k) * Di]);
  }

  std::vector<T> y_f(LDi), y_b(LDi);
  selective_scan<T>(x_in, L, s, p.fwd, ssm::Direction::kForward, y_f, cache ? &c.fwd : nullptr);
  selective_scan<T>(x_in, L, s, p.bwd, ssm::Direction::kBackward, y_b, cache ? &c.bwd : nullptr);

  c.ysum.resize(LDi);
  c.gated.resize(LDi);
  for (int k = 0; k < L; ++k) {
    for (int ch = 0; ch < Di; ++ch) {
      const std::size_t kc = static_cast<std::size_t>(k) * Di + ch;
      const T z = c.xz[static_cast<std::size_t>(k) * 2 * Di + Di + ch];
      c.ysum[kc] = y_f[kc] + y_b[kc];
      c.gated[kc] = c.ysum[kc] * nn::silu(z);
    }
  }

  std::vector<T> out(LD);
  nn::linear<T>(c.gated, p.out_proj, {}, L, Di, D, out);
  for (std::size_t i = 0; i < LD; ++i) out[i] += tokens[i];
  return out;
}

template <typename T>
void vim_block_backward(std::span<const T> dout, const VimShape& s, const BlockView<const T>& p,
                        const BlockCache<T>& c, const BlockView<T>& g, std::span<T> dtokens) {
  const int L = c.length, D = s.dim, Di = s.d_inner;
  const std::size_t LD = static_cast<std::size_t>(L) * D;
  const std::size_t LDi = static_cast<std::size_t>(L) * Di;

  for (std::size_t i = 0; i < LD; ++i) dtokens[i] += dout[i];

  std::vector<T> dgated(LDi, T(0));
  nn::linear_backward<T>(c.gated, p.out_proj, dout, L, Di, D, dgated, g.out_proj, {});

  std::vector<T> dysum(LDi), dxz(LDi * 2, T(0));
  for (int k = 0; k < L; ++k) {
    for (int ch = 0; ch < Di; ++ch) {
      const std::size_t kc = static_cast<std::size_t>(k) * Di + ch;
      const T z = c.xz[static_cast<std::size_t>(k) * 2 * Di + Di + ch];
      dysum[kc] = dgated[kc] * nn::silu(z);
      dxz[static_cast<std::size_t>(k) * 2 * Di + Di + ch] =
          dgated[kc] * c.ysum[kc] * nn::silu_grad(z);
    }
  }

  std::vector<T> dx_in(LDi, T(0));
  selective_scan_backward<T>(dysum, L, s, p.fwd, ssm::Direction::kForward, c.fwd, g.fwd, dx_in);
  selective_scan_backward<T>(dysum, L, s, p.bwd, ssm::Direction::kBackward, c.bwd, g.bwd, dx_in);
  for (int k = 0; k < L; ++k) {
    std::copy_n(&dx_in[static_cast<std::size_t>(k) * Di], Di,
                &dxz[static_cast<std::size_t>(k) * 2 * Di]);
  }

  std::vector<T> dxn(LD, T(0));
  nn::linear_backward<T>(c.xn, p.in_proj, dxz, L, D, 2 * Di, dxn, g.in_proj, {});
  nn::layer_norm_backward<T>(c.xhat, c.rstd, p.norm_w, dxn, L, D, dtokens, g.norm_w, g.norm_b);
}

template <typename T>
std::vector<T> scan_order(std::span<const T> grid, int frames, int grid_h, int grid_w, int dim,
                          ssm::Direction direction) {
  const std::size_t tokens = static_cast<std::size_t>(frames) * grid_h * grid_w;
  if (grid.size() != tokens * dim) throw DimError("token grid size mismatch");
  // Row-major T x Hp x Wp storage already is spatial-first, temporal-next.
  std::vector<T> seq(grid.begin(), grid.end());
  if (direction == ssm::Direction::kBackward) {
    flip_rows<T>(grid, static_cast<int>(tokens), dim, seq);
  }
  return seq;
}

#define MVQA_INSTANTIATE_VIM(T)                                                               \
  template BlockView<T> bind_block(const ParamLayout&, const std::string&, std::span<T>);     \
  template BlockView<const T> bind_block(const ParamLayout&, const std::string&,             \
                                         std::span<const T>);                                \
  template void selective_scan(std::span<const T>, int, const VimShape&,                      \
                               const BranchView<const T>&, ssm::Direction, std::span<T>,     \
                               BranchCache<T>*);                                             \
  template void selective_scan_backward(std::span<const T>, int, const VimShape&,             \
                                        const BranchView<const T>&, ssm::Direction,          \
                                        const BranchCache<T>&, const BranchView<T>&,         \
                                        std::span<T>);                                       \
  template std::vector<T> vim_block(std::span<const T>, int, const VimShape&,                 \
                                    const BlockView<const T>&, BlockCache<T>*);              \
  template void vim_block_backward(std::span<const T>, const VimShape&,                       \
                                   const BlockView<const T>&, const BlockCache<T>&,          \
                                   const BlockView<T>&, std::span<T>);                       \
  template std::vector<T> scan_order(std::span<const T>, int, int, int, int, ssm::Direction);

MVQA_INSTANTIATE_VIM(float)
MVQA_INSTANTIATE_VIM(double)

#undef MVQA_INSTANTIATE_VIM

}  // namespace mvqa::vim
