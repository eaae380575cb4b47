#pragma once

#include <span>
#include <string>
#include <vector>

namespace mvqa {

/// Ascending 1-based ranks; tied values share the mean of the ranks they cover.
std::vector<double> rank(std::span<const double> values);

/// Pearson linear correlation in f64. Throws DimError when the lengths differ
/// or n < 2, DegenerateError when either series has zero variance.
double plcc(std::span<const double> pred, std::span<const double> truth);

/// Spearman rank-order correlation: plcc of the two rank vectors.
double srocc(std::span<const double> pred, std::span<const double> truth);

struct MetricReport {
  double srocc = 0;
  double plcc = 0;
  std::size_t n = 0;
};

MetricReport evaluate_metrics(std::span<const double> pred, std::span<const double> truth);

std::string to_json(const MetricReport& report);
/// Two-column aligned text table.
std::string to_table(const MetricReport& report);

}  // namespace mvqa
