#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "sbs/core.hpp"

namespace sbs::metrics {

/// Sum of squared error over free cells. Symmetric in its map arguments.
double sse(const GridMap& estimate, const GridMap& truth, const ObstacleMask& mask);

struct ThresholdStats {
    double percentile = 0.0;
    double threshold = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double cax = 1.0;
};

/// Nearest-rank X-th percentile of the truth values on free cells.
double truth_threshold(const GridMap& truth, double percentile, const ObstacleMask& mask);

/// Characterisation accuracy TP / (TP + FP + FN) where a cell is positive when
/// its value exceeds the truth-anchored threshold; 1.0 when nothing is positive.
ThresholdStats cax(const GridMap& estimate, const GridMap& truth, double percentile, const ObstacleMask& mask);

inline constexpr std::array<double, 5> kCaxPercentiles{50.0, 80.0, 90.0, 95.0, 99.0};

struct MetricPoint {
    int round = 0;
    double sse = 0.0;
    std::array<double, 5> cax{};  // in kCaxPercentiles order
};

using MetricTimeline = std::vector<MetricPoint>;

MetricPoint evaluate(int round, const GridMap& estimate, const GridMap& truth, const ObstacleMask& mask);

/// CSV: round,sse,ca50,ca80,ca90,ca95,ca99
void write_timeline_csv(std::ostream& out, const MetricTimeline& timeline);
MetricTimeline read_timeline_csv(std::istream& in);

/// Metric names used in aggregate tables, in column order.
const std::vector<std::string>& metric_names();
double metric_value(const MetricPoint& p, std::size_t metric);
/// SSE is lower-is-better, CA metrics higher-is-better.
bool lower_is_better(std::size_t metric) noexcept;

}  // namespace sbs::metrics
