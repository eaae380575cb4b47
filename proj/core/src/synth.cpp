#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>

#include "mvqa/errors.hpp"
#include "mvqa/video_io.hpp"

namespace mvqa {
namespace {

using Plane = std::vector<double>;

constexpr double kGrain = 4.0;
constexpr double kWeave = 6.0;

struct Rgb {
  double r, g, b;
  double operator[](int c) const { return c == 0 ? r : (c == 1 ? g : b); }
};

Rgb random_color(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  const double r = u(rng);
  const double g = u(rng);
  const double b = u(rng);
  return {r, g, b};
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Uniform in [-1, 1) from a coordinate hash, so a pixel's value does not
// depend on how large a canvas is rendered around it.
double hash_unit(std::uint64_t seed, long long a, long long b, long long c) {
  std::uint64_t z = seed;
  for (long long v : {a, b, c}) {
    z += 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(v);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
  }
  return static_cast<double>(z >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

double grain_at(std::uint64_t seed, int c, int y, int x) {
  return kGrain * hash_unit(seed ^ 0x6a09e667f3bcc909ULL, c, y, x);
}

// Float render of the base pattern, C x T x (H + 2m) x (W + 2m) in [0, 255].
// The margin m extends the scene past the frame edges.
std::vector<double> render(const SynthSpec& spec, int m = 0) {
  const int T = spec.frames, H = spec.height, W = spec.width;
  const int Wp = W + 2 * m;
  const std::size_t plane = static_cast<std::size_t>(H + 2 * m) * Wp;
  std::vector<double> out(3 * static_cast<std::size_t>(T) * plane);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto at = [&](int c, int t, int y, int x) -> double& {
    return out[(static_cast<std::size_t>(c) * T + t) * plane +
               static_cast<std::size_t>(y + m) * Wp + (x + m)];
  };
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  switch (spec.base_pattern) {
    case BasePattern::kGradient: {
      const Rgb lo = random_color(rng, 20, 90);
      const Rgb hi = random_color(rng, 160, 235);
      const double angle = unit(rng) * kTwoPi;
      const double ca = std::cos(angle), sa = std::sin(angle);
      const double norm = std::abs(ca) * W + std::abs(sa) * H;
      for (int t = 0; t < T; ++t)
        for (int y = -m; y < H + m; ++y)
          for (int x = -m; x < W + m; ++x) {
            double s = ((x + 1.5 * t) * ca + y * sa) / norm;
            s = s - std::floor(s);
            s = 0.5 - 0.5 * std::cos(kTwoPi * s);
            for (int c = 0; c < 3; ++c) at(c, t, y, x) = lo[c] + (hi[c] - lo[c]) * s;
          }
      break;
    }
    case BasePattern::kChecker: {
      const Rgb a = random_color(rng, 15, 80);
      const Rgb b = random_color(rng, 170, 240);
      const int cell = std::max(4, std::min(H, W) / 8);
      const int shift = 1 + static_cast<int>(unit(rng) * 2.0);
      for (int t = 0; t < T; ++t)
        for (int y = -m; y < H + m; ++y)
          for (int x = -m; x < W + m; ++x) {
            const int parity = (floor_div(x + shift * t, cell) + floor_div(y, cell)) & 1;
            for (int c = 0; c < 3; ++c) at(c, t, y, x) = parity ? a[c] : b[c];
          }
      break;
    }
    case BasePattern::kNoiseTexture: {
      struct Wave {
        double fy, fx, phase, amp, drift;
      };
      std::array<std::array<Wave, 6>, 3> waves{};
      for (auto& channel : waves)
        for (auto& w : channel)
          w = {1.0 + 7.0 * unit(rng), 1.0 + 7.0 * unit(rng), kTwoPi * unit(rng),
               0.5 + 0.5 * unit(rng), 0.05 * unit(rng)};
      for (int c = 0; c < 3; ++c) {
        double total = 0;
        for (const auto& w : waves[c]) total += w.amp;
        for (int t = 0; t < T; ++t)
          for (int y = -m; y < H + m; ++y)
            for (int x = -m; x < W + m; ++x) {
              double v = 0;
              for (const auto& w : waves[c]) {
                v += w.amp * std::sin(kTwoPi * (w.fy * y / H + w.fx * x / W) +
                                      w.phase + kTwoPi * w.drift * t);
              }
              at(c, t, y, x) = 127.5 + 100.0 * v / total;
            }
      }
      break;
    }
    case BasePattern::kMovingBlob: {
      const Rgb bg = random_color(rng, 30, 110);
      const Rgb fg = random_color(rng, 150, 240);
      const double radius = std::max(2.0, std::min(H, W) / 5.0);
      const double cy0 = H * (0.3 + 0.4 * unit(rng));
      const double cx0 = W * (0.2 + 0.2 * unit(rng));
      const double vy = (unit(rng) - 0.5) * 2.0;
      const double vx = 1.0 + 2.0 * unit(rng);
      for (int t = 0; t < T; ++t) {
        const double cy = cy0 + vy * t, cx = cx0 + vx * t;
        for (int y = -m; y < H + m; ++y)
          for (int x = -m; x < W + m; ++x) {
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            const double wgt = std::exp(-d2 / (2.0 * radius * radius));
            const double ramp = 0.85 + 0.3 * static_cast<double>(y) / H;
            for (int c = 0; c < 3; ++c)
              at(c, t, y, x) = std::clamp(
                  bg[c] * ramp * (1.0 - wgt) + fg[c] * wgt, 0.0, 255.0);
          }
      }
      break;
    }
  }

  // Static grain plus a fine weave so every pattern carries detail at several
  // scales for the distortions to destroy.
  std::mt19937_64 weave_rng(spec.seed ^ 0xbb67ae8584caa73bULL);
  const double period_y = 10.0 + 4.0 * unit(weave_rng);
  const double period_x = 10.0 + 4.0 * unit(weave_rng);
  const double phase = kTwoPi * unit(weave_rng);
  for (int c = 0; c < 3; ++c)
    for (int y = -m; y < H + m; ++y)
      for (int x = -m; x < W + m; ++x) {
        const double g = kWeave * std::sin(kTwoPi * y / period_y + phase + c) *
                             std::sin(kTwoPi * x / period_x + phase) +
                         grain_at(spec.seed, c, y, x);
        for (int t = 0; t < T; ++t) at(c, t, y, x) = std::clamp(at(c, t, y, x) + g, 0.0, 255.0);
      }
  return out;
}

void gaussian_blur(std::span<double> img, int H, int W, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;

  Plane tmp(img.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = std::clamp(x + i, 0, W - 1);
        acc += kernel[i + radius] * img[static_cast<std::size_t>(y) * W + xx];
      }
      tmp[static_cast<std::size_t>(y) * W + x] = acc;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = std::clamp(y + i, 0, H - 1);
        acc += kernel[i + radius] * tmp[static_cast<std::size_t>(yy) * W + x];
      }
      img[static_cast<std::size_t>(y) * W + x] = acc;
    }
}

void blockiness(std::span<double> img, int H, int W, double level) {
  constexpr int kBlock = 8;
  for (int by = 0; by < H; by += kBlock)
    for (int bx = 0; bx < W; bx += kBlock) {
      const int ey = std::min(H, by + kBlock), ex = std::min(W, bx + kBlock);
      double mean = 0;
      for (int y = by; y < ey; ++y)
        for (int x = bx; x < ex; ++x) mean += img[static_cast<std::size_t>(y) * W + x];
      mean /= static_cast<double>((ey - by) * (ex - bx));
      for (int y = by; y < ey; ++y)
        for (int x = bx; x < ex; ++x) {
          auto& v = img[static_cast<std::size_t>(y) * W + x];
          v = (1.0 - level) * v + level * mean;
        }
    }
}

// Rounds with a fixed per-pixel dither so rounding error does not line up
// with smooth ramps.
VideoTensor quantize(const std::vector<double>& values, int T, int H, int W,
                     std::uint64_t seed) {
  std::vector<std::uint8_t> data(values.size());
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = 0.5 * hash_unit(seed ^ 0x3c6ef372fe94f82bULL,
                                     static_cast<long long>(i / plane),
                                     static_cast<long long>(i % plane), 0);
    data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i] + d, 0.0, 255.0)));
  }
  return VideoTensor(3, T, H, W, std::move(data));
}

void validate(const SynthSpec& spec) {
  if (spec.frames < 1 || spec.height < 1 || spec.width < 1) {
    throw ConfigError("synthetic clip dims must be positive");
  }
  if (!(spec.level >= 0.0 && spec.level <= 1.0)) {
    throw ConfigError("distortion level must lie in [0, 1]");
  }
  const auto p = static_cast<int>(spec.base_pattern);
  const auto d = static_cast<int>(spec.distortion);
  if (p < 0 || p > 3) throw ConfigError("unknown base pattern");
  if (d < 0 || d > 2) throw ConfigError("unknown distortion");
}

}  // namespace

BasePattern parse_base_pattern(std::string_view name) {
  if (name == "gradient") return BasePattern::kGradient;
  if (name == "checker") return BasePattern::kChecker;
  if (name == "noise_texture") return BasePattern::kNoiseTexture;
  if (name == "moving_blob") return BasePattern::kMovingBlob;
  throw ConfigError("unknown base pattern '" + std::string(name) + "'");
}

Distortion parse_distortion(std::string_view name) {
  if (name == "gaussian_blur") return Distortion::kGaussianBlur;
  if (name == "additive_noise") return Distortion::kAdditiveNoise;
  if (name == "blockiness") return Distortion::kBlockiness;
  throw ConfigError("unknown distortion '" + std::string(name) + "'");
}

std::string_view to_string(BasePattern pattern) {
  switch (pattern) {
    case BasePattern::kGradient: return "gradient";
    case BasePattern::kChecker: return "checker";
    case BasePattern::kNoiseTexture: return "noise_texture";
    case BasePattern::kMovingBlob: return "moving_blob";
  }
  return "?";
}

std::string_view to_string(Distortion distortion) {
  switch (distortion) {
    case Distortion::kGaussianBlur: return "gaussian_blur";
    case Distortion::kAdditiveNoise: return "additive_noise";
    case Distortion::kBlockiness: return "blockiness";
  }
  return "?";
}

VideoTensor render_base_pattern(const SynthSpec& spec) {
  validate(spec);
  return quantize(render(spec), spec.frames, spec.height, spec.width, spec.seed);
}

SyntheticClip generate_synthetic(const SynthSpec& spec) {
  validate(spec);
  const int T = spec.frames, H = spec.height, W = spec.width;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  auto values = render(spec);

  if (spec.level > 0.0) {
    switch (spec.distortion) {
      case Distortion::kGaussianBlur: {
        const double sigma = 3.0 * spec.level;
        const int m = static_cast<int>(std::ceil(3.0 * sigma));
        const int Hp = H + 2 * m, Wp = W + 2 * m;
        const std::size_t padded = static_cast<std::size_t>(Hp) * Wp;
        auto wide = render(spec, m);
        for (std::size_t p = 0; p < 3 * static_cast<std::size_t>(T); ++p) {
          auto src = std::span<double>(wide).subspan(p * padded, padded);
          gaussian_blur(src, Hp, Wp, sigma);
          for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
              values[p * plane + static_cast<std::size_t>(y) * W + x] =
                  src[static_cast<std::size_t>(y + m) * Wp + x + m];
        }
        break;
      }
      case Distortion::kAdditiveNoise: {
        // Separate stream so the base pattern does not depend on the distortion.
        std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
        std::normal_distribution<double> noise(0.0, 50.0 * spec.level);
        for (auto& v : values) v += noise(rng);
        break;
      }
      case Distortion::kBlockiness: {
        for (std::size_t p = 0; p < 3 * static_cast<std::size_t>(T); ++p) {
          blockiness(std::span<double>(values).subspan(p * plane, plane), H, W,
                     spec.level);
        }
        break;
      }
    }
  }

  SyntheticClip clip{quantize(values, T, H, W, spec.seed), {}};
  clip.score.clip_id = "synth-" + std::string(to_string(spec.base_pattern)) + "-" +
                       std::string(to_string(spec.distortion)) + "-" +
                       std::to_string(spec.seed);
  clip.score.mos = 100.0 * (1.0 - spec.level);
  return clip;
}

std::vector<SyntheticClip> generate_synthetic_set(std::size_t count, int frames, int height,
                                                  int width, std::uint64_t seed) {
  std::vector<SyntheticClip> out;
  out.reserve(count);
  std::mt19937_64 seeds(seed);
  for (std::size_t i = 0; i < count; ++i) {
    SynthSpec spec;
    spec.base_pattern = static_cast<BasePattern>(i % 4);
    spec.distortion = static_cast<Distortion>(i % 3);
    spec.level = count > 1 ? static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    spec.frames = frames;
    spec.height = height;
    spec.width = width;
    spec.seed = seeds();
    auto clip = generate_synthetic(spec);
    char id[32];
    std::snprintf(id, sizeof id, "synth-%04zu", i);
    clip.score.clip_id = id;
    out.push_back(std::move(clip));
  }
  return out;
}

}  // namespace mvqa
