#include "mvqa/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mvqa/errors.hpp"

namespace mvqa {
namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint8_t round_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

// Cell origins floor(extent * i / count), i in [0, count).
std::vector<int> grid_starts(int extent, int count) {
  std::vector<int> starts(count);
  for (int i = 0; i < count; ++i) {
    starts[i] = static_cast<int>(static_cast<long long>(extent) * i / count);
  }
  return starts;
}

int cell_extent(int extent, int count, int i) {
  const auto next = static_cast<int>(static_cast<long long>(extent) * (i + 1) / count);
  const auto here = static_cast<int>(static_cast<long long>(extent) * i / count);
  return next - here;
}

}  // namespace

void validate(const SamplerConfig& cfg, bool require_even_grid) {
  if (cfg.fragments_h < 1 || cfg.fragments_w < 1 || cfg.fsize_h < 1 || cfg.fsize_w < 1) {
    throw ConfigError("sampler geometry must be positive");
  }
  if (require_even_grid && (cfg.fragments_h % 2 != 0 || cfg.fragments_w % 2 != 0)) {
    throw ConfigError("fragments_h and fragments_w must be even, got " +
                      std::to_string(cfg.fragments_h) + "x" +
                      std::to_string(cfg.fragments_w));
  }
}

std::size_t MaskSpec::ones() const noexcept {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

double MaskSpec::ones_fraction() const noexcept {
  return mask.empty() ? 0.0 : static_cast<double>(ones()) / static_cast<double>(mask.size());
}

double SampledClip::semantic_fraction() const noexcept {
  if (provenance.empty()) return 0.0;
  const auto n = std::count(provenance.begin(), provenance.end(), Provenance::kSemantic);
  return static_cast<double>(n) / static_cast<double>(provenance.size());
}

std::vector<int> temporal_indices(int frames, int t_out) {
  if (t_out <= 0) throw DimError("t_out must be positive");
  if (t_out > frames) {
    throw DimError("t_out " + std::to_string(t_out) + " exceeds frame count " +
                   std::to_string(frames));
  }
  std::vector<int> idx(t_out);
  for (int i = 0; i < t_out; ++i) {
    idx[i] = static_cast<int>(static_cast<long long>(i) * frames / t_out);
  }
  return idx;
}

VideoTensor temporal_sample(const VideoTensor& video, int t_out, TemporalMode mode,
                            std::uint64_t seed) {
  (void)mode;
  (void)seed;  // uniform selection is deterministic
  const auto idx = temporal_indices(video.frames(), t_out);
  VideoTensor out(video.channels(), t_out, video.height(), video.width());
  for (int c = 0; c < video.channels(); ++c) {
    for (int t = 0; t < t_out; ++t) {
      const auto src = video.plane(c, idx[t]);
      std::copy(src.begin(), src.end(), out.plane(c, t).begin());
    }
  }
  return out;
}

std::vector<double> resize_plane_bilinear(std::span<const std::uint8_t> plane, int height,
                                          int width, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DimError("resize target must be >= 1");
  const double scale_y = static_cast<double>(height) / out_h;
  const double scale_x = static_cast<double>(width) / out_w;

  struct Tap {
    int i0, i1;
    double w1;
  };
  auto taps = [](int out, int in, double scale) {
    std::vector<Tap> t(out);
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, src - i0};
    }
    return t;
  };
  const auto ty = taps(out_h, height, scale_y);
  const auto tx = taps(out_w, width, scale_x);

  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    const auto* r0 = plane.data() + static_cast<std::size_t>(ty[y].i0) * width;
    const auto* r1 = plane.data() + static_cast<std::size_t>(ty[y].i1) * width;
    const double wy = ty[y].w1;
    for (int x = 0; x < out_w; ++x) {
      const double wx = tx[x].w1;
      const double top = r0[tx[x].i0] * (1.0 - wx) + r0[tx[x].i1] * wx;
      const double bot = r1[tx[x].i0] * (1.0 - wx) + r1[tx[x].i1] * wx;
      out[static_cast<std::size_t>(y) * out_w + x] = top * (1.0 - wy) + bot * wy;
    }
  }
  return out;
}

VideoTensor resize_bilinear(const VideoTensor& video, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DimError("resize target must be >= 1");
  VideoTensor out(video.channels(), video.frames(), out_h, out_w);
  for (int c = 0; c < video.channels(); ++c) {
    for (int t = 0; t < video.frames(); ++t) {
      const auto values =
          resize_plane_bilinear(video.plane(c, t), video.height(), video.width(), out_h, out_w);
      auto dst = out.plane(c, t);
      std::transform(values.begin(), values.end(), dst.begin(), round_u8);
    }
  }
  return out;
}

VideoTensor center_crop(const VideoTensor& video, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1 || out_h > video.height() || out_w > video.width()) {
    throw DimError("crop " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                   " does not fit in " + std::to_string(video.height()) + "x" +
                   std::to_string(video.width()));
  }
  const int top = (video.height() - out_h) / 2;
  const int left = (video.width() - out_w) / 2;
  VideoTensor out(video.channels(), video.frames(), out_h, out_w);
  for (int c = 0; c < video.channels(); ++c)
    for (int t = 0; t < video.frames(); ++t)
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) out.at(c, t, y, x) = video.at(c, t, top + y, left + x);
  return out;
}

FragmentSample fragments(const VideoTensor& video, const SamplerConfig& cfg) {
  validate(cfg, false);
  const int H = video.height(), W = video.width();
  if (H < cfg.target_h() || W < cfg.target_w()) {
    throw DimError("source " + std::to_string(H) + "x" + std::to_string(W) +
                   " smaller than fragment target " + std::to_string(cfg.target_h()) + "x" +
                   std::to_string(cfg.target_w()));
  }

  FragmentGrid grid;
  grid.fragments_h = cfg.fragments_h;
  grid.fragments_w = cfg.fragments_w;
  grid.fsize_h = cfg.fsize_h;
  grid.fsize_w = cfg.fsize_w;
  grid.frames = video.frames();
  grid.aligned = cfg.aligned_offsets;
  grid.cell_y = grid_starts(H, cfg.fragments_h);
  grid.cell_x = grid_starts(W, cfg.fragments_w);

  std::vector<int> range_y(cfg.fragments_h), range_x(cfg.fragments_w);
  for (int i = 0; i < cfg.fragments_h; ++i) {
    range_y[i] = cell_extent(H, cfg.fragments_h, i) - cfg.fsize_h;
    if (range_y[i] < 0) throw DimError("grid cell shorter than patch");
  }
  for (int j = 0; j < cfg.fragments_w; ++j) {
    range_x[j] = cell_extent(W, cfg.fragments_w, j) - cfg.fsize_w;
    if (range_x[j] < 0) throw DimError("grid cell narrower than patch");
  }

  const int offset_frames = cfg.aligned_offsets ? 1 : video.frames();
  grid.offsets.resize(static_cast<std::size_t>(offset_frames) * cfg.fragments_h *
                      cfg.fragments_w);
  for (int t = 0; t < offset_frames; ++t) {
    // Independent stream per frame: identical results however frames are scheduled.
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    for (int i = 0; i < cfg.fragments_h; ++i) {
      for (int j = 0; j < cfg.fragments_w; ++j) {
        PatchOffset off;
        if (!cfg.zero_offsets) {
          off.dy = std::uniform_int_distribution<int>(0, range_y[i])(rng);
          off.dx = std::uniform_int_distribution<int>(0, range_x[j])(rng);
        }
        grid.offsets[(static_cast<std::size_t>(t) * cfg.fragments_h + i) * cfg.fragments_w +
                     j] = off;
      }
    }
  }

  VideoTensor out(video.channels(), video.frames(), cfg.target_h(), cfg.target_w());
  for (int c = 0; c < video.channels(); ++c) {
    for (int t = 0; t < video.frames(); ++t) {
      for (int i = 0; i < cfg.fragments_h; ++i) {
        for (int j = 0; j < cfg.fragments_w; ++j) {
          const int sy = grid.source_y(t, i, j), sx = grid.source_x(t, i, j);
          for (int y = 0; y < cfg.fsize_h; ++y) {
            const std::uint8_t* src = &video.data()[video.index(c, t, sy + y, sx)];
            std::uint8_t* dst = &out.data()[out.index(c, t, i * cfg.fsize_h + y, j * cfg.fsize_w)];
            std::copy(src, src + cfg.fsize_w, dst);
          }
        }
      }
    }
  }
  return {std::move(out), std::move(grid)};
}

MaskSpec build_mask(const SamplerConfig& cfg) {
  validate(cfg, true);
  MaskSpec m;
  m.height = cfg.target_h();
  m.width = cfg.target_w();
  m.mask.resize(static_cast<std::size_t>(m.height) * m.width);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const bool on = (y % (2 * cfg.fsize_h)) >= cfg.fsize_h &&
                      (x % (2 * cfg.fsize_w)) >= cfg.fsize_w;
      m.mask[static_cast<std::size_t>(y) * m.width + x] = on ? 1 : 0;
    }
  }
  return m;
}

std::vector<double> expand_lowres_plane(std::span<const double> low, const SamplerConfig& cfg) {
  validate(cfg, true);
  const int S_h = cfg.target_h(), S_w = cfg.target_w();
  const int low_w = S_w / 2;
  if (low.size() != static_cast<std::size_t>(S_h / 2) * low_w) {
    throw DimError("low-resolution plane must be exactly half the target size");
  }
  std::vector<double> canvas(static_cast<std::size_t>(S_h) * S_w, 0.0);
  for (int bi = 0; bi < cfg.fragments_h / 2; ++bi) {
    for (int bj = 0; bj < cfg.fragments_w / 2; ++bj) {
      for (int y = 0; y < cfg.fsize_h; ++y) {
        const int dst_y = 2 * bi * cfg.fsize_h + cfg.fsize_h + y;
        const int src_y = bi * cfg.fsize_h + y;
        for (int x = 0; x < cfg.fsize_w; ++x) {
          const int dst_x = 2 * bj * cfg.fsize_w + cfg.fsize_w + x;
          const int src_x = bj * cfg.fsize_w + x;
          canvas[static_cast<std::size_t>(dst_y) * S_w + dst_x] =
              low[static_cast<std::size_t>(src_y) * low_w + src_x];
        }
      }
    }
  }
  return canvas;
}

VideoTensor expand_lowres(const VideoTensor& low, const SamplerConfig& cfg) {
  validate(cfg, true);
  if (low.height() * 2 != cfg.target_h() || low.width() * 2 != cfg.target_w()) {
    throw DimError("low-resolution input " + std::to_string(low.height()) + "x" +
                   std::to_string(low.width()) + " is not half of target " +
                   std::to_string(cfg.target_h()) + "x" + std::to_string(cfg.target_w()));
  }
  VideoTensor out(low.channels(), low.frames(), cfg.target_h(), cfg.target_w());
  std::vector<double> plane(static_cast<std::size_t>(low.height()) * low.width());
  for (int c = 0; c < low.channels(); ++c) {
    for (int t = 0; t < low.frames(); ++t) {
      const auto src = low.plane(c, t);
      std::copy(src.begin(), src.end(), plane.begin());
      const auto canvas = expand_lowres_plane(plane, cfg);
      auto dst = out.plane(c, t);
      std::transform(canvas.begin(), canvas.end(), dst.begin(), round_u8);
    }
  }
  return out;
}

VideoTensor fit_to_target(const VideoTensor& video, const SamplerConfig& cfg) {
  const int H = std::max(video.height(), cfg.target_h());
  const int W = std::max(video.width(), cfg.target_w());
  if (H == video.height() && W == video.width()) return video;
  return resize_bilinear(video, H, W);
}

SampledClip usds(const VideoTensor& video, const SamplerConfig& cfg) {
  validate(cfg, true);
  const VideoTensor source = fit_to_target(video, cfg);
  auto [frag_clip, grid] = fragments(source, cfg);
  MaskSpec mask = build_mask(cfg);

  const int S_h = cfg.target_h(), S_w = cfg.target_w();
  SampledClip result;
  result.clip = std::move(frag_clip);
  for (int c = 0; c < source.channels(); ++c) {
    for (int t = 0; t < source.frames(); ++t) {
      const auto low =
          resize_plane_bilinear(source.plane(c, t), source.height(), source.width(), S_h / 2,
                                S_w / 2);
      const auto expanded = expand_lowres_plane(low, cfg);
      auto dst = result.clip.plane(c, t);
      for (std::size_t p = 0; p < dst.size(); ++p) {
        if (mask.mask[p]) dst[p] = round_u8(expanded[p]);
      }
    }
  }
  result.provenance.resize(mask.mask.size());
  std::transform(mask.mask.begin(), mask.mask.end(), result.provenance.begin(),
                 [](std::uint8_t m) { return m ? Provenance::kSemantic : Provenance::kFragment; });
  result.grid = std::move(grid);
  result.mask = std::move(mask);
  return result;
}

SamplerKind parse_sampler(std::string_view name) {
  if (name == "resize") return SamplerKind::kResize;
  if (name == "crop") return SamplerKind::kCrop;
  if (name == "fragments") return SamplerKind::kFragments;
  if (name == "usds") return SamplerKind::kUsds;
  throw ConfigError("unknown sampler '" + std::string(name) + "'");
}

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kResize: return "resize";
    case SamplerKind::kCrop: return "crop";
    case SamplerKind::kFragments: return "fragments";
    case SamplerKind::kUsds: return "usds";
  }
  return "?";
}

VideoTensor sample_spatial(const VideoTensor& video, SamplerKind kind, const SamplerConfig& cfg) {
  switch (kind) {
    case SamplerKind::kResize:
      return resize_bilinear(video, cfg.target_h(), cfg.target_w());
    case SamplerKind::kCrop:
      return center_crop(fit_to_target(video, cfg), cfg.target_h(), cfg.target_w());
    case SamplerKind::kFragments:
      return fragments(fit_to_target(video, cfg), cfg).clip;
    case SamplerKind::kUsds:
      return usds(video, cfg).clip;
  }
  throw ConfigError("unknown sampler");
}

}  // namespace mvqa
