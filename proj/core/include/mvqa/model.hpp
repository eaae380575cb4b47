#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mvqa/params.hpp"
#include "mvqa/video_io.hpp"
#include "mvqa/vim_block.hpp"

namespace mvqa {

/// Network geometry. Inputs are channels x frames x height x width clips cut
/// into 1 x patch_h x patch_w tubelets.
struct ModelConfig {
  std::string variant = "nano";
  int depth = 2;
  int dim = 32;
  int channels = 3;
  int patch_t = 1;
  int patch_h = 16;
  int patch_w = 16;
  int frames = 8;
  int height = 64;
  int width = 64;
  int head_hidden = 32;
  int expand = 2;
  int d_state = 16;
  int conv_width = 4;

  static ModelConfig nano();
  static ModelConfig tiny();
  static ModelConfig middle();
  /// "nano", "tiny" or "middle"; throws ConfigError otherwise.
  static ModelConfig preset(const std::string& name);

  int grid_h() const noexcept { return height / patch_h; }
  int grid_w() const noexcept { return width / patch_w; }
  int tokens_per_frame() const noexcept { return grid_h() * grid_w(); }
  /// frames * grid_h * grid_w plus the regression token.
  long long sequence_length() const noexcept {
    return static_cast<long long>(frames) * tokens_per_frame() + 1;
  }
  int patch_inputs() const noexcept { return channels * patch_t * patch_h * patch_w; }
  vim::VimShape block_shape() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Throws ConfigError on indivisible dims, patch_t != 1 or non-positive widths.
void validate(const ModelConfig& config);

/// Canonical tensor table of the network for `config`.
ParamLayout build_layout(const ModelConfig& config);

/// All learnable tensors of one network, packed by build_layout(config).
template <typename T>
struct MvqaParams {
  ModelConfig config;
  ParamLayout layout;
  std::vector<T> values;

  std::span<T> view(const std::string& name) { return layout.view(std::span<T>(values), name); }
  std::span<const T> view(const std::string& name) const {
    return layout.view(std::span<const T>(values), name);
  }
};

/// Truncated normal (std 0.02, cut at 2 std) weights, zero biases, unit
/// norm gains, S4D-real A_log = log(1..d_state), D = 1 and Mamba-style
/// delta bias. Deterministic in `seed`.
template <typename T>
MvqaParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename U, typename T>
MvqaParams<U> cast_params(const MvqaParams<T>& params) {
  MvqaParams<U> out{params.config, params.layout, {}};
  out.values.assign(params.values.begin(), params.values.end());
  return out;
}

/// Non-overlapping tubelet projection; returns frames x grid_h x grid_w x dim.
/// Throws DimError when the clip does not match the configured input size.
template <typename T>
std::vector<T> embed_3d(const BasicClip<T>& clip, const MvqaParams<T>& params);

/// Prepends the regression token and adds spatial (per frame) and temporal
/// position embeddings; returns sequence_length() x dim.
template <typename T>
std::vector<T> assemble_sequence(std::span<const T> grid, const MvqaParams<T>& params);

/// Intermediate values kept for the reverse pass.
template <typename T>
struct ForwardCache {
  std::vector<T> patches;  // tokens x patch_inputs
  std::vector<vim::BlockCache<T>> blocks;
  std::vector<T> head_in;            // final-norm output
  std::vector<T> head_xhat, head_rstd;
  std::vector<T> hidden_pre;         // fc1 output before GELU
  std::vector<T> hidden;
};

/// Predicted quality score for one clip. With a cache, records what
/// backward() needs.
template <typename T>
T forward(const BasicClip<T>& clip, const MvqaParams<T>& params, ForwardCache<T>* cache = nullptr);

/// Accumulates d(score)/d(params) * dscore into `grads` (same layout).
template <typename T>
void backward(const ForwardCache<T>& cache, const MvqaParams<T>& params, T dscore,
              std::span<T> grads);

/// Runs only the Vim stack on an L x dim sequence (inference mode).
template <typename T>
std::vector<T> encode(std::span<const T> sequence, int length, const MvqaParams<T>& params);

/// Exact number of learnable scalars.
std::size_t count_params(const ModelConfig& config);

struct FlopReport {
  double embed_macs = 0;
  double encoder_macs = 0;  // projections, convolutions and scans
  double head_macs = 0;
  double macs() const noexcept { return embed_macs + encoder_macs + head_macs; }
  /// Two floating-point operations per multiply-accumulate.
  double flops() const noexcept { return 2.0 * macs(); }
};

/// Analytic multiply-accumulate count of one forward pass on one clip.
/// Elementwise work (norms, activations, exp) is not counted.
FlopReport estimate_flops(const ModelConfig& config);

/// Multiply-accumulates of a single Vim block per token.
double block_macs_per_token(const vim::VimShape& shape);

// ---- Checkpoints ----------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned little-endian f32 table keyed by canonical names.
void save_checkpoint(const MvqaParams<float>& params, const std::filesystem::path& path);
MvqaParams<float> load_checkpoint(const std::filesystem::path& path);
/// As above, but throws FormatError if the stored config differs from `expected`.
MvqaParams<float> load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

std::vector<std::uint8_t> encode_checkpoint(const MvqaParams<float>& params);
MvqaParams<float> decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace mvqa
