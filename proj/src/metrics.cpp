#include "sbs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace sbs::metrics {

namespace {

void require_same_grid(const GridMap& a, const GridMap& b, const ObstacleMask& mask) {
    if (!(a.spec() == b.spec()) || !(a.spec() == mask.spec())) {
        throw ValidationError("metric inputs are defined on different grids");
    }
}

}  // namespace

double sse(const GridMap& estimate, const GridMap& truth, const ObstacleMask& mask) {
    require_same_grid(estimate, truth, mask);
    double total = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask.blocked(i)) continue;
        const double d = estimate[i] - truth[i];
        total += d * d;
    }
    return total;
}

double truth_threshold(const GridMap& truth, double percentile, const ObstacleMask& mask) {
    if (!(percentile > 0.0 && percentile < 100.0)) throw ValidationError("percentile must lie in (0,100)");
    std::vector<double> values;
    values.reserve(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask.free(i)) values.push_back(truth[i]);
    }
    if (values.empty()) throw ValidationError("no free cells");
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
    return values[rank - 1];
}

ThresholdStats cax(const GridMap& estimate, const GridMap& truth, double percentile, const ObstacleMask& mask) {
    require_same_grid(estimate, truth, mask);
    ThresholdStats s;
    s.percentile = percentile;
    s.threshold = truth_threshold(truth, percentile, mask);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask.blocked(i)) continue;
        const bool actual = truth[i] > s.threshold;
        const bool predicted = estimate[i] > s.threshold;
        if (actual && predicted) ++s.tp;
        else if (predicted) ++s.fp;
        else if (actual) ++s.fn;
    }
    const std::size_t denom = s.tp + s.fp + s.fn;
    s.cax = denom == 0 ? 1.0 : static_cast<double>(s.tp) / static_cast<double>(denom);
    return s;
}

MetricPoint evaluate(int round, const GridMap& estimate, const GridMap& truth, const ObstacleMask& mask) {
    MetricPoint p;
    p.round = round;
    p.sse = sse(estimate, truth, mask);
    for (std::size_t k = 0; k < kCaxPercentiles.size(); ++k) {
        p.cax[k] = cax(estimate, truth, kCaxPercentiles[k], mask).cax;
    }
    return p;
}

void write_timeline_csv(std::ostream& out, const MetricTimeline& timeline) {
    out << "round,sse,ca50,ca80,ca90,ca95,ca99\n";
    out << std::setprecision(17);
    for (const auto& p : timeline) {
        out << p.round << ',' << p.sse;
        for (double c : p.cax) out << ',' << c;
        out << '\n';
    }
}

MetricTimeline read_timeline_csv(std::istream& in) {
    MetricTimeline out;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        MetricPoint p;
        std::getline(row, field, ',');
        p.round = std::stoi(field);
        std::getline(row, field, ',');
        p.sse = std::stod(field);
        for (double& c : p.cax) {
            std::getline(row, field, ',');
            c = std::stod(field);
        }
        out.push_back(p);
    }
    return out;
}

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"sse", "ca50", "ca80", "ca90", "ca95", "ca99"};
    return names;
}

double metric_value(const MetricPoint& p, std::size_t metric) {
    return metric == 0 ? p.sse : p.cax.at(metric - 1);
}

bool lower_is_better(std::size_t metric) noexcept { return metric == 0; }

}  // namespace sbs::metrics
