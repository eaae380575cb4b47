#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mvqa/params.hpp"
#include "mvqa/ssm.hpp"

namespace mvqa::vim {

/// Widths of one bidirectional block.
struct VimShape {
  int dim = 0;
  int d_inner = 0;     // expand * dim
  int d_state = 16;
  int dt_rank = 0;     // ceil(dim / 16)
  int conv_width = 4;

  static VimShape for_dim(int dim, int expand = 2, int d_state = 16, int conv_width = 4);
  int proj_width() const noexcept { return dt_rank + 2 * d_state; }
};

/// Parameters of one scan direction. Shapes:
///   conv_w [d_inner, conv_width], conv_b [d_inner],
///   x_proj [dt_rank + 2 d_state, d_inner], dt_w [d_inner, dt_rank],
///   dt_b [d_inner], a_log [d_inner, d_state], d [d_inner].
template <typename U>
struct BranchView {
  std::span<U> conv_w, conv_b, x_proj, dt_w, dt_b, a_log, d;
};

/// norm_w/norm_b [dim], in_proj [2 d_inner, dim], out_proj [dim, d_inner].
template <typename U>
struct BlockView {
  std::span<U> norm_w, norm_b, in_proj, out_proj;
  BranchView<U> fwd, bwd;
};

/// Registers the block's tensors under `prefix` (e.g. "blocks.3").
void append_block_layout(ParamLayout& layout, const std::string& prefix, const VimShape& shape);
std::size_t block_param_count(const VimShape& shape);

/// Binds views over a flat buffer laid out by append_block_layout.
template <typename U>
BlockView<U> bind_block(const ParamLayout& layout, const std::string& prefix,
                        std::span<U> flat);

template <typename T>
struct BranchCache {
  std::vector<T> xs;       // branch-ordered input, L x d_inner
  std::vector<T> conv;     // conv pre-activation
  std::vector<T> u;        // silu(conv)
  std::vector<T> proj;     // L x (dt_rank + 2 d_state)
  std::vector<T> dt_raw;   // L x d_inner, before softplus
  std::vector<T> delta;
  std::vector<T> b, c;     // L x d_state
  std::vector<T> a;        // d_inner x d_state, -exp(a_log)
  std::vector<T> states;   // L x d_inner x d_state
};

template <typename T>
struct BlockCache {
  int length = 0;
  std::vector<T> xhat, rstd;  // pre-norm
  std::vector<T> xn;          // normalized input
  std::vector<T> xz;          // L x 2 d_inner
  BranchCache<T> fwd, bwd;
  std::vector<T> ysum;        // forward + re-reversed backward outputs
  std::vector<T> gated;       // ysum * silu(z)
};

/// One direction of the selective state-space branch on an L x d_inner input:
/// causal depthwise conv, SiLU, input-dependent (delta, B, C), scan. The
/// backward direction is the forward computation on the time-reversed input,
/// with the result reversed back. `cache` may be null for inference.
template <typename T>
void selective_scan(std::span<const T> x, int length, const VimShape& shape,
                    const BranchView<const T>& p, ssm::Direction direction, std::span<T> y,
                    BranchCache<T>* cache = nullptr);

/// Reverse pass of selective_scan; accumulates into `grads` and `dx`.
template <typename T>
void selective_scan_backward(std::span<const T> dy, int length, const VimShape& shape,
                             const BranchView<const T>& p, ssm::Direction direction,
                             const BranchCache<T>& cache, const BranchView<T>& grads,
                             std::span<T> dx);

/// out = x + out_proj((scan_fwd + scan_bwd) * silu(z)), with [x_in, z] the
/// in_proj of LayerNorm(x).
template <typename T>
std::vector<T> vim_block(std::span<const T> tokens, int length, const VimShape& shape,
                         const BlockView<const T>& p, BlockCache<T>* cache = nullptr);

/// Accumulates parameter gradients into `grads` and input gradients into
/// `dtokens`.
template <typename T>
void vim_block_backward(std::span<const T> dout, const VimShape& shape,
                        const BlockView<const T>& p, const BlockCache<T>& cache,
                        const BlockView<T>& grads, std::span<T> dtokens);

/// Spatial-first, temporal-next flattening of a T x Hp x Wp x dim grid.
/// The backward direction yields the exact reverse token order.
template <typename T>
std::vector<T> scan_order(std::span<const T> grid, int frames, int grid_h, int grid_w, int dim,
                          ssm::Direction direction = ssm::Direction::kForward);

}  // namespace mvqa::vim
