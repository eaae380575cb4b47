#include <algorithm>
#include <cmath>
#include <sstream>

#include "mvqa/errors.hpp"
#include "mvqa_tools/cli.hpp"

namespace mvqa::cli {

double fit_growth_exponent(std::span<const double> lengths, std::span<const double> seconds) {
  if (lengths.size() != seconds.size()) throw DimError("lengths and times differ in size");
  if (lengths.size() < 2) throw DegenerateError("need at least two lengths to fit an exponent");
  const double n = static_cast<double>(lengths.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (!(lengths[i] > 0) || !(seconds[i] > 0)) {
      throw NumericError("lengths and times must be positive for a log-log fit");
    }
    sx += std::log(lengths[i]);
    sy += std::log(seconds[i]);
  }
  const double mx = sx / n, my = sy / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const double dx = std::log(lengths[i]) - mx;
    sxy += dx * (std::log(seconds[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw DegenerateError("all lengths are equal");
  return sxy / sxx;
}

std::string loglog_svg(std::span<const double> lengths, std::span<const double> seconds,
                       double exponent, const std::string& title) {
  constexpr double W = 640, H = 420, left = 80, right = 30, top = 50, bottom = 60;
  const auto [lx0, lx1] = std::minmax_element(lengths.begin(), lengths.end());
  const auto [ly0, ly1] = std::minmax_element(seconds.begin(), seconds.end());
  // Pad the ranges by a quarter decade so the points do not touch the frame.
  const double x0 = std::log10(*lx0) - 0.25, x1 = std::log10(*lx1) + 0.25;
  const double y0 = std::log10(*ly0) - 0.25, y1 = std::log10(*ly1) + 0.25;
  auto px = [&](double v) { return left + (std::log10(v) - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double v) { return H - bottom - (std::log10(v) - y0) / (y1 - y0) * (H - top - bottom); };

  std::ostringstream s;
  s.precision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"15\">" << title
    << "</text>\n"
    << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right
    << "\" height=\"" << H - top - bottom << "\" fill=\"none\" stroke=\"#333\"/>\n";

  for (std::size_t i = 0; i < lengths.size(); ++i) {
    s << "<text x=\"" << px(lengths[i]) << "\" y=\"" << H - bottom + 18
      << "\" text-anchor=\"middle\">" << lengths[i] << "</text>\n";
  }
  for (int d = static_cast<int>(std::ceil(y0)); d <= static_cast<int>(std::floor(y1)); ++d) {
    const double v = std::pow(10.0, d);
    s << "<line x1=\"" << left << "\" x2=\"" << W - right << "\" y1=\"" << py(v) << "\" y2=\""
      << py(v) << "\" stroke=\"#ddd\"/>\n"
      << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">1e" << d
      << "</text>\n";
  }
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">sequence length L</text>\n"
    << "<text x=\"20\" y=\"" << H / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
    << H / 2 << ")\">seconds</text>\n";

  // Fitted power law through the geometric mean of the points.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    mx += std::log(lengths[i]);
    my += std::log(seconds[i]);
  }
  mx /= static_cast<double>(lengths.size());
  my /= static_cast<double>(lengths.size());
  auto fit = [&](double L) { return std::exp(my + exponent * (std::log(L) - mx)); };
  s << "<line x1=\"" << px(*lx0) << "\" y1=\"" << py(fit(*lx0)) << "\" x2=\"" << px(*lx1)
    << "\" y2=\"" << py(fit(*lx1)) << "\" stroke=\"#c0392b\" stroke-dasharray=\"6 4\"/>\n";
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    s << "<circle cx=\"" << px(lengths[i]) << "\" cy=\"" << py(seconds[i])
      << "\" r=\"4\" fill=\"#2c7fb8\"/>\n";
  }
  s << "<text x=\"" << W - right - 8 << "\" y=\"" << top + 18
    << "\" text-anchor=\"end\">fitted exponent " << exponent << "</text>\n"
    << "</svg>\n";
  return s.str();
}

}  // namespace mvqa::cli
