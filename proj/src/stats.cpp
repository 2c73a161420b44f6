#include "sbs/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "sbs/core.hpp"

namespace sbs::stats {

SampleStats describe(const std::vector<double>& values) {
    SampleStats s;
    s.n = values.size();
    if (s.n == 0) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

double welch_margin_test(const SampleStats& a, const SampleStats& b, double relative_margin, Better direction) {
    if (a.n < 2 || b.n < 2) throw ValidationError("welch test needs n >= 2 in both samples");
    if (a.sd < 0.0 || b.sd < 0.0) throw ValidationError("standard deviations must be non-negative");

    // Shift b by the margin and orient the difference so positive = a better.
    const double scale = direction == Better::lower ? 1.0 - relative_margin : 1.0 + relative_margin;
    const double diff = direction == Better::lower ? scale * b.mean - a.mean : a.mean - scale * b.mean;
    const double va = a.sd * a.sd / static_cast<double>(a.n);
    const double vb = scale * scale * b.sd * b.sd / static_cast<double>(b.n);
    const double se2 = va + vb;
    if (se2 <= 0.0) {
        if (diff > 0.0) return 0.0;
        if (diff < 0.0) return 1.0;
        return 0.5;
    }
    const double t = diff / std::sqrt(se2);
    const double df = se2 * se2 /
                      ((va > 0 ? va * va / static_cast<double>(a.n - 1) : 0.0) +
                       (vb > 0 ? vb * vb / static_cast<double>(b.n - 1) : 0.0));
    const boost::math::students_t dist(df);
    return boost::math::cdf(boost::math::complement(dist, t));
}

std::vector<bool> bh_adjust(const std::vector<double>& p_values, double alpha) {
    const std::size_t m = p_values.size();
    std::vector<bool> reject(m, false);
    if (m == 0) return reject;
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return p_values[x] < p_values[y]; });
    std::size_t k_star = 0;
    for (std::size_t k = 1; k <= m; ++k) {
        if (p_values[order[k - 1]] <= static_cast<double>(k) * alpha / static_cast<double>(m)) k_star = k;
    }
    for (std::size_t k = 0; k < k_star; ++k) reject[order[k]] = true;
    return reject;
}

SampleStats pooled_stats(const std::vector<SampleStats>& groups) {
    if (groups.empty()) throw ValidationError("no groups to pool");
    SampleStats out;
    double var_sum = 0.0;
    for (const auto& g : groups) {
        if (g.n != groups.front().n) throw ValidationError("pooled stats require equal group sizes");
        out.n += g.n;
        out.mean += g.mean;
        var_sum += g.sd * g.sd;
    }
    const double k = static_cast<double>(groups.size());
    out.mean /= k;
    out.sd = std::sqrt(var_sum / k);
    return out;
}

}  // namespace sbs::stats
