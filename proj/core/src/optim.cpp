#include <cmath>
#include <numbers>

#include "mvqa/errors.hpp"
#include "mvqa/training.hpp"

namespace mvqa {

AdamW::AdamW(std::size_t size, Options options)
    : options_(options), m_(size, 0.0), v_(size, 0.0) {}

template <typename T>
void AdamW::step(std::span<T> params, std::span<const T> grads, double learning_rate) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimError("optimizer state does not match the parameter count");
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    double p = params[i];
    if (decay_mask_.empty() || decay_mask_[i]) p -= learning_rate * options_.weight_decay * p;
    p -= learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + options_.epsilon);
    params[i] = static_cast<T>(p);
  }
}

template void AdamW::step<float>(std::span<float>, std::span<const float>, double);
template void AdamW::step<double>(std::span<double>, std::span<const double>, double);

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return base_lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<std::uint8_t> default_decay_mask(const ParamLayout& layout) {
  std::vector<std::uint8_t> mask(layout.total(), 0);
  for (const auto& e : layout.entries()) {
    const bool matrix = e.shape.size() >= 2;
    const bool excluded = e.name == "pos_spatial" || e.name == "pos_temporal" ||
                          e.name.ends_with(".A_log");
    if (matrix && !excluded) {
      std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(e.offset), e.size, 1);
    }
  }
  return mask;
}

}  // namespace mvqa
