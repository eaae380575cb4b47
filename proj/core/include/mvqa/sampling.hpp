#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mvqa/video_io.hpp"

namespace mvqa {

/// Grid geometry shared by the fragment and unified samplers. The output
/// frame is fragments_h x fragments_w patches of fsize_h x fsize_w pixels.
struct SamplerConfig {
  int fragments_h = 14;
  int fragments_w = 14;
  int fsize_h = 16;
  int fsize_w = 16;
  bool aligned_offsets = true;  // one offset set shared by every frame
  bool zero_offsets = false;    // debug: every patch at its cell origin
  std::uint64_t seed = 0;

  int target_h() const noexcept { return fragments_h * fsize_h; }
  int target_w() const noexcept { return fragments_w * fsize_w; }
};

/// Throws ConfigError on non-positive geometry, and on odd fragment counts
/// when `require_even_grid` is set (the mask blocks are 2 x 2 patches).
void validate(const SamplerConfig& cfg, bool require_even_grid);

struct PatchOffset {
  int dy = 0;
  int dx = 0;
  friend bool operator==(const PatchOffset&, const PatchOffset&) = default;
};

/// Where every output patch was copied from.
struct FragmentGrid {
  int fragments_h = 0;
  int fragments_w = 0;
  int fsize_h = 0;
  int fsize_w = 0;
  int frames = 0;
  bool aligned = true;
  std::vector<int> cell_y;  // grid start row per cell row
  std::vector<int> cell_x;  // grid start column per cell column
  std::vector<PatchOffset> offsets;  // [aligned ? 1 : frames][f_h][f_w]

  const PatchOffset& offset(int t, int i, int j) const noexcept {
    const int frame = aligned ? 0 : t;
    return offsets[(static_cast<std::size_t>(frame) * fragments_h + i) * fragments_w + j];
  }
  /// Top-left source pixel of patch (i, j) in frame t.
  int source_y(int t, int i, int j) const noexcept { return cell_y[i] + offset(t, i, j).dy; }
  int source_x(int t, int i, int j) const noexcept { return cell_x[j] + offset(t, i, j).dx; }
};

struct FragmentSample {
  VideoTensor clip;
  FragmentGrid grid;
};

/// Binary plane selecting the bottom-right fsize patch of every 2x2-patch block.
struct MaskSpec {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> mask;  // row-major, 1 = semantic

  std::uint8_t at(int y, int x) const noexcept {
    return mask[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t ones() const noexcept;
  double ones_fraction() const noexcept;
};

enum class Provenance : std::uint8_t { kFragment = 0, kSemantic = 1 };

struct SampledClip {
  VideoTensor clip;                     // C x T x S_h x S_w
  std::vector<Provenance> provenance;   // S_h x S_w, same for every C and T
  FragmentGrid grid;
  MaskSpec mask;

  double semantic_fraction() const noexcept;
};

enum class TemporalMode { kUniform };

/// Picks frames floor(i * T / t_out). Throws DimError when t_out is 0 or > T.
VideoTensor temporal_sample(const VideoTensor& video, int t_out,
                            TemporalMode mode = TemporalMode::kUniform,
                            std::uint64_t seed = 0);
std::vector<int> temporal_indices(int frames, int t_out);

/// Bilinear resampling with half-pixel centers on one H x W plane. The result
/// is unrounded.
std::vector<double> resize_plane_bilinear(std::span<const std::uint8_t> plane,
                                          int height, int width, int out_h,
                                          int out_w);

/// Per-frame, per-channel bilinear resize rounded to nearest.
VideoTensor resize_bilinear(const VideoTensor& video, int out_h, int out_w);

/// Centered window, top-left at ((H - out_h) / 2, (W - out_w) / 2).
VideoTensor center_crop(const VideoTensor& video, int out_h, int out_w);

/// Grid mini-patch sampling. Source must be at least target size.
FragmentSample fragments(const VideoTensor& video, const SamplerConfig& cfg);

MaskSpec build_mask(const SamplerConfig& cfg);

/// Places each fsize tile of the half-resolution frame into the bottom-right
/// quadrant of its block on a zero canvas of target size.
VideoTensor expand_lowres(const VideoTensor& low, const SamplerConfig& cfg);

/// Expansion on one unrounded plane; the canvas is target_h x target_w.
std::vector<double> expand_lowres_plane(std::span<const double> low,
                                        const SamplerConfig& cfg);

/// Upscales (bilinear) any axis smaller than the target so the grid fits.
/// Returns the input unchanged when it is already large enough.
VideoTensor fit_to_target(const VideoTensor& video, const SamplerConfig& cfg);

/// Unified semantic and distortion sampling: fragments on three quadrants of
/// every block, half-resolution bilinear content on the fourth.
SampledClip usds(const VideoTensor& video, const SamplerConfig& cfg);

enum class SamplerKind { kResize, kCrop, kFragments, kUsds };

SamplerKind parse_sampler(std::string_view name);
std::string_view to_string(SamplerKind kind);

/// Dispatches to one sampler producing a target_h x target_w clip.
VideoTensor sample_spatial(const VideoTensor& video, SamplerKind kind,
                           const SamplerConfig& cfg);

}  // namespace mvqa
