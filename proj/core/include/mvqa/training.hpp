#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mvqa/metrics.hpp"
#include "mvqa/model.hpp"
#include "mvqa/sampling.hpp"
#include "mvqa/video_io.hpp"

namespace mvqa {

// ---- Losses -----------------------------------------------------------------

/// Predicted scores paired with ground truth. Both spans have length m.
template <typename T>
struct ScoreBatch {
  std::span<const T> predicted;
  std::span<const T> truth;
};

struct LossWeights {
  double alpha = 1.0;  // monotonicity
  double beta = 1.0;   // linearity
};

inline constexpr double kLinearityEps = 1e-8;

/// (1/m^2) sum_ij max(0, |q_i - q_j| - f_ij (p_i - p_j)), f_ij = +1 if q_i >= q_j
/// else -1. When `grad` is non-empty it receives dL/dp (hinge kinks use 0).
template <typename T>
T loss_mon(const ScoreBatch<T>& batch, std::span<T> grad = {});

/// (1 - r) / 2 with r the Pearson correlation; eps = 1e-8 sits inside the
/// square root of the denominator. Throws DimError when m < 2.
template <typename T>
T loss_lin(const ScoreBatch<T>& batch, std::span<T> grad = {});

/// alpha * loss_mon + beta * loss_lin. Throws ConfigError if both weights are 0
/// or either is negative.
template <typename T>
T loss_total(const ScoreBatch<T>& batch, const LossWeights& weights, std::span<T> grad = {});

// ---- Gradient verification ------------------------------------------------------

/// Evaluates f at a point; when `grad` is non-empty also writes the analytic gradient.
using DifferentiableFn =
    std::function<double(std::span<const double> point, std::span<double> grad)>;

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t checked = 0;
};

enum class DifferenceStencil {
  kCentral2,  // (f(x+e) - f(x-e)) / 2e
  kCentral4,  // (8 (f(x+e) - f(x-e)) - (f(x+2e) - f(x-2e))) / 12e
};

/// Central differences against the analytic gradient on `indices` (all
/// coordinates if empty). Relative error is |a - n| / max(|a|, |n|, 1e-8).
/// Throws NumericError on non-finite values.
GradCheckResult grad_check(const DifferentiableFn& fn, std::span<const double> point,
                           double epsilon, std::span<const std::size_t> indices = {},
                           DifferenceStencil stencil = DifferenceStencil::kCentral2);

// ---- Optimizer ----------------------------------------------------------------

/// Adam with decoupled weight decay. Moments are kept in f64.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.05;
  };

  AdamW(std::size_t size, Options options);

  /// `decay_mask[i]` selects which coordinates receive weight decay; empty
  /// means all.
  void set_decay_mask(std::vector<std::uint8_t> mask) { decay_mask_ = std::move(mask); }

  template <typename T>
  void step(std::span<T> params, std::span<const T> grads, double learning_rate);

  std::size_t steps_taken() const noexcept { return step_; }

 private:
  Options options_;
  std::vector<double> m_, v_;
  std::vector<std::uint8_t> decay_mask_;
  std::size_t step_ = 0;
};

/// lr0 * (1 + cos(pi * step / total)) / 2.
double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps);

/// Weight decay only on projection matrices and the patch embedding.
std::vector<std::uint8_t> default_decay_mask(const ParamLayout& layout);

// ---- Training loop ------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.0025;
  double weight_decay = 0.05;
  std::size_t steps = 300;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  LossWeights loss;
  SamplerKind sampler = SamplerKind::kUsds;
  int fsize_h = 16;
  int fsize_w = 16;
  bool aligned_offsets = true;
  // Targets are mapped to [0, 1] by the dataset's score range before the loss.
  bool normalize_scores = true;
};

/// Throws ConfigError on a non-positive rate, batch < 2 or zero steps.
void validate(const TrainConfig& config);

struct LabeledClip {
  std::string clip_id;
  VideoTensor video;
  double mos = 0;
};

std::vector<LabeledClip> load_dataset(const std::vector<ManifestEntry>& manifest);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0;
  double lr = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_srocc = 0;
  double train_plcc = 0;
};

template <typename T>
struct TrainResult {
  MvqaParams<T> params;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  MetricReport final_train;  // full pass over the training set after the last step
};

/// Sampler geometry that tiles the model input with fsize patches.
SamplerConfig sampler_for(const ModelConfig& model, const TrainConfig& train, std::uint64_t seed);

/// temporal_sample -> spatial sampler -> /255, sized for `model`.
template <typename T>
BasicClip<T> prepare_clip(const VideoTensor& video, const ModelConfig& model,
                          const TrainConfig& train, std::uint64_t seed);

/// Full training run. Deterministic in train.seed. Throws ConfigError on an
/// empty dataset and NumericError (naming the step) on a non-finite loss.
template <typename T>
TrainResult<T> train(const std::vector<LabeledClip>& dataset, const ModelConfig& model,
                     const TrainConfig& config);

/// Same, continuing from existing parameters.
template <typename T>
TrainResult<T> train(const std::vector<LabeledClip>& dataset, MvqaParams<T> initial,
                     const TrainConfig& config);

/// Predicted scores for every clip, sampled with `seed`.
template <typename T>
std::vector<double> predict(const std::vector<LabeledClip>& dataset, const MvqaParams<T>& params,
                            const TrainConfig& config, std::uint64_t seed);

}  // namespace mvqa
