#include "mvqa/video_io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "mvqa/errors.hpp"

namespace mvqa {
namespace {

constexpr std::array<char, 4> kMagic = {'R', 'V', 'I', 'D'};
// Largest payload accepted by the reader (16 GiB).
constexpr std::uint64_t kMaxPayload = std::uint64_t{1} << 34;

void check_dims(int channels, int frames, int height, int width) {
  if (channels != 1 && channels != 3) {
    throw DimError("video channels must be 1 or 3, got " +
                   std::to_string(channels));
  }
  if (frames < 1 || height < 1 || width < 1) {
    throw DimError("video frames/height/width must be >= 1");
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[at + i]} << (8 * i);
  return v;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

VideoTensor::VideoTensor(int channels, int frames, int height, int width)
    : channels_(channels), frames_(frames), height_(height), width_(width) {
  check_dims(channels, frames, height, width);
  data_.assign(static_cast<std::size_t>(channels) * frames * height * width, 0);
}

VideoTensor::VideoTensor(int channels, int frames, int height, int width,
                         std::vector<std::uint8_t> data)
    : channels_(channels),
      frames_(frames),
      height_(height),
      width_(width),
      data_(std::move(data)) {
  check_dims(channels, frames, height, width);
  const std::size_t expected =
      static_cast<std::size_t>(channels) * frames * height * width;
  if (data_.size() != expected) {
    throw DimError("video payload has " + std::to_string(data_.size()) +
                   " samples, expected " + std::to_string(expected));
  }
}

template <typename T>
BasicClip<T> to_float(const VideoTensor& video, Normalization mode) {
  (void)mode;  // kUnit is the only mode
  BasicClip<T> clip{video.channels(), video.frames(), video.height(),
                    video.width(), {}};
  clip.data.resize(video.size());
  const auto& src = video.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    clip.data[i] = static_cast<T>(static_cast<double>(src[i]) / 255.0);
  }
  return clip;
}

template BasicClip<float> to_float<float>(const VideoTensor&, Normalization);
template BasicClip<double> to_float<double>(const VideoTensor&, Normalization);

std::vector<std::uint8_t> encode_rvid(const VideoTensor& video) {
  std::vector<std::uint8_t> out;
  out.reserve(kRvidHeaderBytes + video.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, kRvidVersion);
  put_u32(out, static_cast<std::uint32_t>(video.channels()));
  put_u32(out, static_cast<std::uint32_t>(video.frames()));
  put_u32(out, static_cast<std::uint32_t>(video.height()));
  put_u32(out, static_cast<std::uint32_t>(video.width()));
  out.insert(out.end(), video.data().begin(), video.data().end());
  return out;
}

VideoTensor decode_rvid(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw FormatError("missing RVID magic");
  }
  if (bytes.size() < kRvidHeaderBytes) {
    throw TruncationError("RVID header truncated");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kRvidVersion) {
    throw FormatError("unsupported RVID version " + std::to_string(version));
  }
  const std::uint32_t c = get_u32(bytes, 8);
  const std::uint32_t t = get_u32(bytes, 12);
  const std::uint32_t h = get_u32(bytes, 16);
  const std::uint32_t w = get_u32(bytes, 20);

  constexpr auto kIntMax =
      static_cast<std::uint32_t>(std::numeric_limits<int>::max());
  if (t > kIntMax || h > kIntMax || w > kIntMax) {
    throw DimError("RVID dimension exceeds int range");
  }
  // Each factor is < 2^31 and the running product is capped, so no overflow.
  std::uint64_t payload = c;
  for (std::uint64_t f : {std::uint64_t{t}, std::uint64_t{h}, std::uint64_t{w}}) {
    if (f != 0 && payload > kMaxPayload / f) {
      throw DimError("RVID dimensions overflow payload limit");
    }
    payload *= f;
  }
  if (payload > kMaxPayload) throw DimError("RVID payload exceeds limit");

  const std::size_t available = bytes.size() - kRvidHeaderBytes;
  if (available < payload) {
    throw TruncationError("RVID payload has " + std::to_string(available) +
                          " bytes, header declares " + std::to_string(payload));
  }
  std::vector<std::uint8_t> data(bytes.begin() + kRvidHeaderBytes,
                                 bytes.begin() + kRvidHeaderBytes + payload);
  return VideoTensor(static_cast<int>(c), static_cast<int>(t),
                     static_cast<int>(h), static_cast<int>(w), std::move(data));
}

VideoTensor read_rvid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_rvid(bytes);
}

void write_rvid(const VideoTensor& video, const std::filesystem::path& path) {
  const auto bytes = encode_rvid(video);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  const auto base = path.parent_path();

  std::string line;
  if (!std::getline(in, line) || trim(line) != "clip_id,path,mos") {
    throw FormatError("manifest " + path.string() +
                      " must start with header clip_id,path,mos");
  }
  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (fields.size() != 3) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 3 fields");
    }
    ManifestEntry e;
    e.clip_id = fields[0];
    std::filesystem::path p(fields[1]);
    e.path = p.is_absolute() ? p : base / p;
    try {
      std::size_t used = 0;
      e.mos = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": bad mos '" + fields[2] + "'");
    }
    if (!seen.insert(e.clip_id).second) {
      throw FormatError("duplicate clip_id '" + e.clip_id + "' in " +
                        path.string());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto base = std::filesystem::absolute(
      path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  out << "clip_id,path,mos\n";
  std::unordered_set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.clip_id).second) {
      throw FormatError("duplicate clip_id '" + e.clip_id + "'");
    }
    auto rel = std::filesystem::relative(std::filesystem::absolute(e.path), base);
    if (rel.empty()) rel = std::filesystem::absolute(e.path);
    std::ostringstream mos;
    mos.precision(17);
    mos << e.mos;
    out << e.clip_id << ',' << rel.generic_string() << ',' << mos.str() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mvqa
