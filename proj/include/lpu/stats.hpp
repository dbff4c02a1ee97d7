#ifndef LPU_STATS_HPP
#define LPU_STATS_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "errors.hpp"

namespace lpu {

/// Name of the quantile rule written into every report.
inline constexpr const char* percentile_convention =
    "type-7 (linear interpolation between closest ranks, h = (n-1)p)";

struct SummaryStats {
  double median_ns = 0.0;
  double p25_ns = 0.0;
  double p75_ns = 0.0;
  std::size_t n_converged = 0;
  std::size_t n_total = 0;
};

/**
 * Quantile of already sorted data: with h = (n-1) p, returns
 * x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h]).
 */
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw argument_error("quantile: empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw argument_error("quantile: p must be in [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// Median and interquartile bounds of the given durations (which should be converged runs only).
inline SummaryStats summarize(std::span<const double> times) {
  if (times.empty()) throw argument_error("summarize: no durations");
  std::vector<double> sorted(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());
  SummaryStats s;
  s.median_ns = quantile_sorted(sorted, 0.5);
  s.p25_ns = quantile_sorted(sorted, 0.25);
  s.p75_ns = quantile_sorted(sorted, 0.75);
  s.n_converged = sorted.size();
  s.n_total = sorted.size();
  return s;
}

} // namespace lpu

#endif // LPU_STATS_HPP
