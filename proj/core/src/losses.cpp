#include <cmath>
#include <string>

#include "mvqa/errors.hpp"
#include "mvqa/training.hpp"

namespace mvqa {
namespace {

template <typename T>
void check_lengths(const ScoreBatch<T>& batch, std::span<T> grad) {
  if (batch.predicted.size() != batch.truth.size()) {
    throw DimError("predicted and truth lengths differ");
  }
  if (!grad.empty() && grad.size() != batch.predicted.size()) {
    throw DimError("gradient buffer length differs from the batch");
  }
}

}  // namespace

template <typename T>
T loss_mon(const ScoreBatch<T>& batch, std::span<T> grad) {
  check_lengths(batch, grad);
  const std::size_t m = batch.predicted.size();
  if (m == 0) throw DimError("loss_mon needs at least one score");
  const double scale = 1.0 / (static_cast<double>(m) * static_cast<double>(m));
  std::vector<double> g(grad.empty() ? 0 : m, 0.0);
  double total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double qi = batch.truth[i], qj = batch.truth[j];
      const double f = qi >= qj ? 1.0 : -1.0;
      const double diff = static_cast<double>(batch.predicted[i]) - batch.predicted[j];
      const double term = std::abs(qi - qj) - f * diff;
      if (term > 0) {
        total += term;
        if (!g.empty()) {
          g[i] -= f * scale;
          g[j] += f * scale;
        }
      }
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] = static_cast<T>(g[i]);
  return static_cast<T>(total * scale);
}

template <typename T>
T loss_lin(const ScoreBatch<T>& batch, std::span<T> grad) {
  check_lengths(batch, grad);
  const std::size_t m = batch.predicted.size();
  if (m < 2) throw DimError("loss_lin needs at least two scores");
  double mp = 0, mq = 0;
  for (std::size_t i = 0; i < m; ++i) {
    mp += batch.predicted[i];
    mq += batch.truth[i];
  }
  mp /= static_cast<double>(m);
  mq /= static_cast<double>(m);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double a = batch.predicted[i] - mp, b = batch.truth[i] - mq;
    sab += a * b;
    saa += a * a;
    sbb += b * b;
  }
  const double den = std::sqrt(saa * sbb + kLinearityEps);
  const double r = sab / den;
  if (!grad.empty()) {
    // Centering terms vanish because the deviations sum to zero.
    for (std::size_t i = 0; i < m; ++i) {
      const double a = batch.predicted[i] - mp, b = batch.truth[i] - mq;
      const double dr = b / den - sab * sbb * a / (den * den * den);
      grad[i] = static_cast<T>(-0.5 * dr);
    }
  }
  return static_cast<T>((1.0 - r) / 2.0);
}

template <typename T>
T loss_total(const ScoreBatch<T>& batch, const LossWeights& w, std::span<T> grad) {
  if (w.alpha < 0 || w.beta < 0 || (w.alpha == 0 && w.beta == 0)) {
    throw ConfigError("loss weights must be non-negative and not both zero");
  }
  check_lengths(batch, grad);
  const std::size_t m = batch.predicted.size();
  std::vector<T> gm(grad.empty() ? 0 : m), gl(grad.empty() ? 0 : m);
  double total = 0;
  if (w.alpha != 0) total += w.alpha * static_cast<double>(loss_mon<T>(batch, gm));
  if (w.beta != 0) total += w.beta * static_cast<double>(loss_lin<T>(batch, gl));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double g = 0;
    if (w.alpha != 0) g += w.alpha * static_cast<double>(gm[i]);
    if (w.beta != 0) g += w.beta * static_cast<double>(gl[i]);
    grad[i] = static_cast<T>(g);
  }
  return static_cast<T>(total);
}

template float loss_mon(const ScoreBatch<float>&, std::span<float>);
template double loss_mon(const ScoreBatch<double>&, std::span<double>);
template float loss_lin(const ScoreBatch<float>&, std::span<float>);
template double loss_lin(const ScoreBatch<double>&, std::span<double>);
template float loss_total(const ScoreBatch<float>&, const LossWeights&, std::span<float>);
template double loss_total(const ScoreBatch<double>&, const LossWeights&, std::span<double>);

}  // namespace mvqa
