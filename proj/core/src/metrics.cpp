#include "mvqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mvqa/errors.hpp"

namespace mvqa {

std::vector<double> rank(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 hold ranks i+1..j
    const double shared = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = shared;
    i = j;
  }
  return ranks;
}

double plcc(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimError("metric inputs differ in length");
  const std::size_t n = pred.size();
  if (n < 2) throw DegenerateError("correlation needs at least 2 samples");
  const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / static_cast<double>(n);
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(n);
  double spp = 0, stt = 0, spt = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = pred[i] - mp, b = truth[i] - mt;
    spp += a * a;
    stt += b * b;
    spt += a * b;
  }
  if (spp == 0.0 || stt == 0.0) throw DegenerateError("correlation of a zero-variance series");
  return std::clamp(spt / std::sqrt(spp * stt), -1.0, 1.0);
}

double srocc(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimError("metric inputs differ in length");
  const auto rp = rank(pred);
  const auto rt = rank(truth);
  return plcc(rp, rt);
}

MetricReport evaluate_metrics(std::span<const double> pred, std::span<const double> truth) {
  return {srocc(pred, truth), plcc(pred, truth), pred.size()};
}

std::string to_json(const MetricReport& report) {
  nlohmann::json j;
  j["srocc"] = report.srocc;
  j["plcc"] = report.plcc;
  j["n"] = report.n;
  return j.dump(2);
}

std::string to_table(const MetricReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "metric" << std::right << std::setw(10) << "value" << '\n';
  out << std::left << std::setw(8) << "SROCC" << std::right << std::setw(10) << std::fixed
      << std::setprecision(4) << report.srocc << '\n';
  out << std::left << std::setw(8) << "PLCC" << std::right << std::setw(10) << report.plcc
      << '\n';
  out << std::left << std::setw(8) << "n" << std::right << std::setw(10) << report.n << '\n';
  return out.str();
}

}  // namespace mvqa
