#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "mvqa/errors.hpp"
#include "mvqa/model.hpp"

namespace mvqa {
namespace {

constexpr char kMagic[4] = {'M', 'V', 'Q', 'C'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  int i32() { return static_cast<int>(u32()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_config(Writer& w, const ModelConfig& c) {
  w.str(c.variant);
  for (int v : {c.depth, c.dim, c.channels, c.patch_t, c.patch_h, c.patch_w, c.frames, c.height,
                c.width, c.head_hidden, c.expand, c.d_state, c.conv_width}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
}

ModelConfig read_config(Reader& r) {
  ModelConfig c;
  c.variant = r.str();
  for (int* v : {&c.depth, &c.dim, &c.channels, &c.patch_t, &c.patch_h, &c.patch_w, &c.frames,
                 &c.height, &c.width, &c.head_hidden, &c.expand, &c.d_state, &c.conv_width}) {
    *v = r.i32();
  }
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const MvqaParams<float>& params) {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(kCheckpointVersion);
  write_config(w, params.config);
  const auto& entries = params.layout.entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < e.size; ++i) w.f32(params.values[e.offset + i]);
  }
  return std::move(w.bytes);
}

MvqaParams<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("missing MVQC magic");
  }
  Reader r(bytes.subspan(4));
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig config;
  try {
    config = read_config(r);
    validate(config);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }
  MvqaParams<float> p{config, build_layout(config), {}};
  p.values.assign(p.layout.total(), 0.0f);

  std::unordered_map<std::string, bool> loaded;
  const auto count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name = r.str();
    if (!p.layout.contains(name)) throw FormatError("unexpected tensor '" + name + "'");
    const auto& info = p.layout.at(name);
    const auto ndim = r.u32();
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = r.i32();
    if (shape != info.shape) throw FormatError("tensor '" + name + "' has the wrong shape");
    if (loaded[name]) throw FormatError("tensor '" + name + "' stored twice");
    loaded[name] = true;
    for (std::size_t i = 0; i < info.size; ++i) p.values[info.offset + i] = r.f32();
  }
  for (const auto& e : p.layout.entries()) {
    if (!loaded[e.name]) throw FormatError("checkpoint is missing tensor '" + e.name + "'");
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint tensors");
  return p;
}

void save_checkpoint(const MvqaParams<float>& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

MvqaParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

MvqaParams<float> load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  auto p = load_checkpoint(path);
  auto stored = p.config;
  auto want = expected;
  stored.variant.clear();
  want.variant.clear();
  if (!(stored == want)) {
    throw FormatError("checkpoint " + path.string() + " was saved for a different model config");
  }
  return p;
}

}  // namespace mvqa
