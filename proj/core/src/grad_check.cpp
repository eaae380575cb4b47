#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mvqa/errors.hpp"
#include "mvqa/training.hpp"

namespace mvqa {

GradCheckResult grad_check(const DifferentiableFn& fn, std::span<const double> point,
                           double epsilon, std::span<const std::size_t> indices,
                           DifferenceStencil stencil) {
  if (!(epsilon > 0)) throw ParamError("epsilon must be positive");
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> analytic(x.size(), 0.0);
  const double f0 = fn(x, analytic);
  if (!std::isfinite(f0)) throw NumericError("function value is not finite");

  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(x.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }

  GradCheckResult result;
  for (const std::size_t i : indices) {
    const double saved = x[i];
    auto at = [&](double offset) {
      x[i] = saved + offset;
      const double f = fn(x, {});
      x[i] = saved;
      return f;
    };
    double numeric = 0;
    if (stencil == DifferenceStencil::kCentral2) {
      numeric = (at(epsilon) - at(-epsilon)) / (2.0 * epsilon);
    } else {
      numeric = (8.0 * (at(epsilon) - at(-epsilon)) - (at(2.0 * epsilon) - at(-2.0 * epsilon))) /
                (12.0 * epsilon);
    }
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      throw NumericError("non-finite gradient at coordinate " + std::to_string(i));
    }
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > result.max_rel_error || result.checked == 0) {
      result.max_rel_error = rel;
      result.worst_index = i;
      result.worst_analytic = analytic[i];
      result.worst_numeric = numeric;
    }
    ++result.checked;
  }
  return result;
}

}  // namespace mvqa
