#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mvqa {

/// Unsigned 8-bit video volume laid out as C x T x H x W (channel-major).
class VideoTensor {
 public:
  VideoTensor() = default;
  /// Zero-filled volume. Throws DimError when C is not 1 or 3 or any axis is 0.
  VideoTensor(int channels, int frames, int height, int width);
  VideoTensor(int channels, int frames, int height, int width,
              std::vector<std::uint8_t> data);

  int channels() const noexcept { return channels_; }
  int frames() const noexcept { return frames_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(int c, int t, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(c) * frames_ + t) * height_ + y) *
               static_cast<std::size_t>(width_) +
           x;
  }
  std::uint8_t at(int c, int t, int y, int x) const noexcept {
    return data_[index(c, t, y, x)];
  }
  std::uint8_t& at(int c, int t, int y, int x) noexcept {
    return data_[index(c, t, y, x)];
  }

  /// One H x W plane.
  std::span<const std::uint8_t> plane(int c, int t) const noexcept {
    return {data_.data() + index(c, t, 0, 0),
            static_cast<std::size_t>(height_) * width_};
  }
  std::span<std::uint8_t> plane(int c, int t) noexcept {
    return {data_.data() + index(c, t, 0, 0),
            static_cast<std::size_t>(height_) * width_};
  }

  const std::vector<std::uint8_t>& data() const noexcept { return data_; }
  std::vector<std::uint8_t>& data() noexcept { return data_; }

  bool same_shape(const VideoTensor& other) const noexcept {
    return channels_ == other.channels_ && frames_ == other.frames_ &&
           height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const VideoTensor&, const VideoTensor&) = default;

 private:
  int channels_ = 0;
  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Floating-point view of a video with the same axes as VideoTensor.
template <typename T>
struct BasicClip {
  int channels = 0;
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  std::size_t index(int c, int t, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(c) * frames + t) * height + y) *
               static_cast<std::size_t>(width) +
           x;
  }
};

using FloatClip = BasicClip<float>;

enum class Normalization { kUnit };

/// Maps each sample to value / 255.
template <typename T = float>
BasicClip<T> to_float(const VideoTensor& video,
                      Normalization mode = Normalization::kUnit);

struct ScoreRecord {
  std::string clip_id;
  double mos = 0.0;
};

// ---- RVID container -------------------------------------------------------

inline constexpr std::uint32_t kRvidVersion = 1;
inline constexpr std::size_t kRvidHeaderBytes = 4 + 4 * 5;

VideoTensor read_rvid(const std::filesystem::path& path);
void write_rvid(const VideoTensor& video, const std::filesystem::path& path);

/// Byte-level codec used by the file functions; exposed for in-memory use.
std::vector<std::uint8_t> encode_rvid(const VideoTensor& video);
VideoTensor decode_rvid(std::span<const std::uint8_t> bytes);

// ---- Dataset manifest -----------------------------------------------------

struct ManifestEntry {
  std::string clip_id;
  std::filesystem::path path;  // resolved against the manifest's directory
  double mos = 0.0;
};

/// Reads `clip_id,path,mos` CSV. Relative paths resolve against the manifest
/// location. Throws ConfigError if the file is missing, FormatError on bad
/// rows or duplicate ids.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Writes entries with paths relative to the manifest directory when possible.
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);

// ---- Synthetic clips ------------------------------------------------------

enum class BasePattern { kGradient, kChecker, kNoiseTexture, kMovingBlob };
enum class Distortion { kGaussianBlur, kAdditiveNoise, kBlockiness };

BasePattern parse_base_pattern(std::string_view name);
Distortion parse_distortion(std::string_view name);
std::string_view to_string(BasePattern pattern);
std::string_view to_string(Distortion distortion);

struct SynthSpec {
  BasePattern base_pattern = BasePattern::kGradient;
  Distortion distortion = Distortion::kGaussianBlur;
  double level = 0.0;  // in [0, 1]
  int frames = 8;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
};

struct SyntheticClip {
  VideoTensor video;
  ScoreRecord score;
};

/// Deterministic 3-channel clip. score.mos = 100 * (1 - level).
SyntheticClip generate_synthetic(const SynthSpec& spec);

/// `count` clips with levels i / (count - 1), cycling through base patterns and
/// distortions. Clip ids are "synth-NNNN" in index order.
std::vector<SyntheticClip> generate_synthetic_set(std::size_t count, int frames, int height,
                                                  int width, std::uint64_t seed);

/// The undistorted base pattern, shared by every level of one spec.
VideoTensor render_base_pattern(const SynthSpec& spec);

}  // namespace mvqa
