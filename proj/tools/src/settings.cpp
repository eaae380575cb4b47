#include <fstream>

#include "mvqa/errors.hpp"
#include "mvqa_tools/cli.hpp"

namespace mvqa::cli {
namespace {

using nlohmann::json;

// Walks one JSON object, rejecting keys nobody claimed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config '" + path_ + "' must be an object");
    for (const auto& [key, _] : j_.items()) pending_.push_back(key);
  }

  template <typename V>
  void read(const std::string& key, V& into) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    std::erase(pending_, key);
    try {
      into = it->template get<V>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + full(key) + "' has the wrong type");
    }
  }

  const json* child(const std::string& key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    std::erase(pending_, key);
    return &*it;
  }

  std::string full(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    if (!pending_.empty()) throw ConfigError("unknown config key '" + full(pending_.front()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> pending_;
};

void apply_model(Settings& s, const json& j) {
  Section sec(j, "model");
  if (j.contains("preset")) {
    sec.read("preset", s.preset);
    s.model = ModelConfig::preset(s.preset);
  }
  auto& m = s.model;
  sec.read("depth", m.depth);
  sec.read("dim", m.dim);
  sec.read("frames", m.frames);
  sec.read("height", m.height);
  sec.read("width", m.width);
  sec.read("patch_h", m.patch_h);
  sec.read("patch_w", m.patch_w);
  sec.read("head_hidden", m.head_hidden);
  sec.read("expand", m.expand);
  sec.read("d_state", m.d_state);
  sec.read("conv_width", m.conv_width);
  sec.finish();
  s.model_from_user = true;
}

void apply_train(Settings& s, const json& j) {
  Section sec(j, "train");
  auto& t = s.train;
  sec.read("learning_rate", t.learning_rate);
  sec.read("weight_decay", t.weight_decay);
  sec.read("steps", t.steps);
  sec.read("batch_size", t.batch_size);
  sec.read("alpha", t.loss.alpha);
  sec.read("beta", t.loss.beta);
  std::string sampler(to_string(t.sampler));
  sec.read("sampler", sampler);
  t.sampler = parse_sampler(sampler);
  sec.read("fsize_h", t.fsize_h);
  sec.read("fsize_w", t.fsize_w);
  sec.read("aligned_offsets", t.aligned_offsets);
  sec.read("normalize_scores", t.normalize_scores);
  sec.finish();
}

}  // namespace

void apply_json(Settings& s, const json& j) {
  Section top(j, "");
  top.read("seed", s.seed);
  top.read("precision", s.precision);
  if (const auto* m = top.child("model")) apply_model(s, *m);
  if (const auto* t = top.child("train")) apply_train(s, *t);
  if (const auto* p = top.child("sample")) {
    Section sec(*p, "sample");
    sec.read("grid", s.sample.grid);
    sec.read("patch", s.sample.patch);
    sec.read("aligned_offsets", s.sample.aligned_offsets);
    sec.read("zero_offsets", s.sample.zero_offsets);
    sec.finish();
  }
  if (const auto* p = top.child("synth")) {
    Section sec(*p, "synth");
    sec.read("count", s.synth.count);
    sec.read("frames", s.synth.frames);
    sec.read("height", s.synth.height);
    sec.read("width", s.synth.width);
    sec.finish();
  }
  if (const auto* p = top.child("bench")) {
    Section sec(*p, "bench");
    sec.read("lengths", s.bench.lengths);
    sec.read("repeats", s.bench.repeats);
    sec.finish();
  }
  if (const auto* p = top.child("grad_check")) {
    Section sec(*p, "grad_check");
    sec.read("params", s.grad_check.params);
    sec.read("clips", s.grad_check.clips);
    sec.read("epsilon", s.grad_check.epsilon);
    sec.read("tolerance", s.grad_check.tolerance);
    sec.read("perturbation", s.grad_check.perturbation);
    sec.finish();
  }
  top.finish();
}

void apply_config_file(Settings& s, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  apply_json(s, j);
}

json to_json(const Settings& s) {
  const auto& m = s.model;
  const auto& t = s.train;
  return {
      {"seed", s.seed},
      {"precision", s.precision},
      {"model",
       {{"preset", s.preset}, {"depth", m.depth}, {"dim", m.dim}, {"frames", m.frames},
        {"height", m.height}, {"width", m.width}, {"patch_h", m.patch_h},
        {"patch_w", m.patch_w}, {"head_hidden", m.head_hidden}, {"expand", m.expand},
        {"d_state", m.d_state}, {"conv_width", m.conv_width}}},
      {"train",
       {{"learning_rate", t.learning_rate}, {"weight_decay", t.weight_decay},
        {"steps", t.steps}, {"batch_size", t.batch_size}, {"alpha", t.loss.alpha},
        {"beta", t.loss.beta}, {"sampler", std::string(to_string(t.sampler))},
        {"fsize_h", t.fsize_h}, {"fsize_w", t.fsize_w},
        {"aligned_offsets", t.aligned_offsets}, {"normalize_scores", t.normalize_scores}}},
      {"sample",
       {{"grid", s.sample.grid}, {"patch", s.sample.patch},
        {"aligned_offsets", s.sample.aligned_offsets},
        {"zero_offsets", s.sample.zero_offsets}}},
      {"synth",
       {{"count", s.synth.count}, {"frames", s.synth.frames}, {"height", s.synth.height},
        {"width", s.synth.width}}},
      {"bench", {{"lengths", s.bench.lengths}, {"repeats", s.bench.repeats}}},
      {"grad_check",
       {{"params", s.grad_check.params}, {"clips", s.grad_check.clips},
        {"epsilon", s.grad_check.epsilon}, {"tolerance", s.grad_check.tolerance},
        {"perturbation", s.grad_check.perturbation}}},
  };
}

void validate(const Settings& s) {
  if (s.precision != "f32" && s.precision != "f64") {
    throw ConfigError("precision must be f32 or f64, got '" + s.precision + "'");
  }
  validate(s.model);
  validate(s.train);
  if (s.sample.grid < 1 || s.sample.patch < 1) throw ConfigError("sample grid and patch must be positive");
  if (s.synth.count == 0) throw ConfigError("synth count must be positive");
  if (s.bench.lengths.empty()) throw ConfigError("bench needs at least one length");
  for (int L : s.bench.lengths) {
    if (L < 1) throw ConfigError("bench lengths must be positive");
  }
  if (s.bench.repeats < 1) throw ConfigError("bench repeats must be positive");
  if (s.grad_check.params == 0 || s.grad_check.clips < 2) {
    throw ConfigError("grad_check needs at least one parameter and two clips");
  }
  if (!(s.grad_check.epsilon > 0)) throw ConfigError("grad_check epsilon must be positive");
  if (s.grad_check.perturbation < 0) throw ConfigError("grad_check perturbation must be non-negative");
}

}  // namespace mvqa::cli
