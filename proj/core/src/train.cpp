#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "mvqa/errors.hpp"
#include "mvqa/training.hpp"

namespace mvqa {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (c.weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (c.steps == 0) throw ConfigError("steps must be positive");
  if (c.batch_size < 2) throw ConfigError("batch_size must be >= 2 for the linearity loss");
  if (c.loss.alpha < 0 || c.loss.beta < 0 || (c.loss.alpha == 0 && c.loss.beta == 0)) {
    throw ConfigError("loss weights must be non-negative and not both zero");
  }
  if (c.fsize_h < 1 || c.fsize_w < 1) throw ConfigError("fsize must be positive");
}

std::vector<LabeledClip> load_dataset(const std::vector<ManifestEntry>& manifest) {
  std::vector<LabeledClip> clips;
  clips.reserve(manifest.size());
  for (const auto& e : manifest) clips.push_back({e.clip_id, read_rvid(e.path), e.mos});
  return clips;
}

SamplerConfig sampler_for(const ModelConfig& model, const TrainConfig& train, std::uint64_t seed) {
  if (model.height % train.fsize_h != 0 || model.width % train.fsize_w != 0) {
    throw ConfigError("model input is not a whole number of fragment patches");
  }
  SamplerConfig s;
  s.fragments_h = model.height / train.fsize_h;
  s.fragments_w = model.width / train.fsize_w;
  s.fsize_h = train.fsize_h;
  s.fsize_w = train.fsize_w;
  s.aligned_offsets = train.aligned_offsets;
  s.seed = seed;
  return s;
}

template <typename T>
BasicClip<T> prepare_clip(const VideoTensor& video, const ModelConfig& model,
                          const TrainConfig& train, std::uint64_t seed) {
  const auto frames = temporal_sample(video, model.frames);
  const auto sampled = sample_spatial(frames, train.sampler, sampler_for(model, train, seed));
  return to_float<T>(sampled);
}

template <typename T>
std::vector<double> predict(const std::vector<LabeledClip>& dataset, const MvqaParams<T>& params,
                            const TrainConfig& config, std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto clip = prepare_clip<T>(dataset[i].video, params.config, config, mix(seed, i));
    out.push_back(static_cast<double>(forward<T>(clip, params)));
  }
  return out;
}

template <typename T>
TrainResult<T> train(const std::vector<LabeledClip>& dataset, MvqaParams<T> initial,
                     const TrainConfig& config) {
  validate(config);
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  if (dataset.size() < 2) throw ConfigError("training needs at least 2 clips");

  TrainResult<T> result{std::move(initial), {}, {}, {}};
  auto& params = result.params;
  const std::size_t batch = std::min(config.batch_size, dataset.size());
  const std::size_t per_epoch = dataset.size() / batch;

  double lo = 0, span = 1;
  if (config.normalize_scores) {
    const auto [mn, mx] = std::minmax_element(dataset.begin(), dataset.end(),
                                              [](const auto& a, const auto& b) { return a.mos < b.mos; });
    lo = mn->mos;
    if (mx->mos > mn->mos) span = mx->mos - mn->mos;
  }

  AdamW opt(params.values.size(), {0.9, 0.999, 1e-8, config.weight_decay});
  opt.set_decay_mask(default_decay_mask(params.layout));

  std::mt19937_64 shuffle_rng(mix(config.seed, 0x5eed));
  std::vector<std::size_t> order(dataset.size());
  std::vector<T> grads(params.values.size());
  std::vector<ForwardCache<T>> caches(batch);
  std::vector<T> preds(batch), truth(batch), dpred(batch);
  std::vector<double> epoch_pred, epoch_truth;

  for (std::size_t step = 0; step < config.steps; ++step) {
    const std::size_t epoch = step / per_epoch;
    const std::size_t slot = step % per_epoch;
    if (slot == 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      epoch_pred.clear();
      epoch_truth.clear();
    }
    // Fresh fragment offsets every epoch.
    const std::uint64_t epoch_seed = mix(config.seed, epoch + 1);

    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t idx = order[slot * batch + b];
      const auto clip =
          prepare_clip<T>(dataset[idx].video, params.config, config, mix(epoch_seed, idx));
      preds[b] = forward<T>(clip, params, &caches[b]);
      truth[b] = static_cast<T>((dataset[idx].mos - lo) / span);
    }
    const ScoreBatch<T> sb{preds, truth};
    const T loss = loss_total<T>(sb, config.loss, dpred);
    if (!std::isfinite(static_cast<double>(loss))) {
      throw NumericError("non-finite loss at step " + std::to_string(step));
    }

    std::fill(grads.begin(), grads.end(), T(0));
    for (std::size_t b = 0; b < batch; ++b) backward<T>(caches[b], params, dpred[b], grads);

    const double lr = cosine_lr(config.learning_rate, step, config.steps);
    opt.step<T>(params.values, grads, lr);
    result.steps.push_back({step, static_cast<double>(loss), lr});

    epoch_pred.insert(epoch_pred.end(), preds.begin(), preds.end());
    epoch_truth.insert(epoch_truth.end(), truth.begin(), truth.end());
    if (slot + 1 == per_epoch || step + 1 == config.steps) {
      EpochRecord rec{epoch, 0.0, 0.0};
      try {
        rec.train_srocc = srocc(epoch_pred, epoch_truth);
        rec.train_plcc = plcc(epoch_pred, epoch_truth);
      } catch (const DegenerateError&) {
        rec.train_srocc = rec.train_plcc = std::nan("");
      }
      result.epochs.push_back(rec);
    }
  }

  const auto final_pred = predict<T>(dataset, params, config, mix(config.seed, 0xE7A1));
  std::vector<double> all_truth;
  for (const auto& c : dataset) all_truth.push_back(c.mos);
  try {
    result.final_train = evaluate_metrics(final_pred, all_truth);
  } catch (const DegenerateError&) {
    result.final_train = {std::nan(""), std::nan(""), dataset.size()};
  }
  return result;
}

template <typename T>
TrainResult<T> train(const std::vector<LabeledClip>& dataset, const ModelConfig& model,
                     const TrainConfig& config) {
  return train<T>(dataset, init_params<T>(model, config.seed), config);
}

#define MVQA_INSTANTIATE_TRAIN(T)                                                          \
  template BasicClip<T> prepare_clip<T>(const VideoTensor&, const ModelConfig&,            \
                                        const TrainConfig&, std::uint64_t);                \
  template std::vector<double> predict(const std::vector<LabeledClip>&, const MvqaParams<T>&, \
                                       const TrainConfig&, std::uint64_t);                 \
  template TrainResult<T> train(const std::vector<LabeledClip>&, MvqaParams<T>,            \
                                const TrainConfig&);                                       \
  template TrainResult<T> train<T>(const std::vector<LabeledClip>&, const ModelConfig&,    \
                                   const TrainConfig&);

MVQA_INSTANTIATE_TRAIN(float)
MVQA_INSTANTIATE_TRAIN(double)

#undef MVQA_INSTANTIATE_TRAIN

}  // namespace mvqa
