#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvqa/model.hpp"
#include "mvqa/training.hpp"

namespace mvqa::cli {

struct SampleSettings {
  int grid = 14;
  int patch = 16;
  bool aligned_offsets = true;
  bool zero_offsets = false;
};

struct SynthSettings {
  std::size_t count = 16;
  int frames = 8;
  int height = 64;
  int width = 64;
};

struct BenchSettings {
  std::vector<int> lengths{1024, 2048, 4096, 8192};
  int repeats = 5;  // fastest run is reported
};

struct GradCheckSettings {
  std::size_t params = 32;
  std::size_t clips = 3;
  double epsilon = 1e-2;  // fourth-order central stencil
  double tolerance = 1e-4;
  double perturbation = 0.1;  // std of noise added to the initial weights
};

/// Everything a command can be configured with. Defaults, then the JSON file,
/// then command-line flags.
struct Settings {
  std::uint64_t seed = 0;
  std::string precision = "f32";
  std::string preset = "nano";
  ModelConfig model = ModelConfig::nano();
  bool model_from_user = false;  // set when the file or a flag names the model
  TrainConfig train;
  SampleSettings sample;
  SynthSettings synth;
  BenchSettings bench;
  GradCheckSettings grad_check;
};

/// Merges a parsed config file into `s`. Unknown keys and wrong types throw
/// ConfigError naming the offending key.
void apply_json(Settings& s, const nlohmann::json& j);

/// Reads and applies a config file; a missing or malformed file is a ConfigError.
void apply_config_file(Settings& s, const std::string& path);

nlohmann::json to_json(const Settings& s);

/// Throws ConfigError on inconsistent values.
void validate(const Settings& s);

/// Least-squares slope of log(seconds) against log(length).
double fit_growth_exponent(std::span<const double> lengths, std::span<const double> seconds);

/// Log-log scatter of wall time against sequence length with the fitted line.
std::string loglog_svg(std::span<const double> lengths, std::span<const double> seconds,
                       double exponent, const std::string& title);

/// Entry point shared by the executable and the tests. Returns the process
/// exit code; errors are reported on `err` as "error: <Kind>: <message>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mvqa::cli
