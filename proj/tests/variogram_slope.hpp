#pragma once

#include <cmath>
#include <vector>

#include "sbs/core.hpp"

namespace test {

// Least-squares slope of log(gamma) against log(h) over axis-aligned lags
// 1..max_lag, gamma taken over every row and column pair of the full grid.
inline double small_lag_slope(const sbs::GridMap& m, int max_lag = 4) {
    const auto& s = m.spec();
    std::vector<double> xs, ys;
    for (int h = 1; h <= max_lag; ++h) {
        double sum = 0.0;
        long n = 0;
        for (int r = 0; r < s.rows; ++r) {
            for (int c = 0; c + h < s.cols; ++c) {
                const double d = m.at({r, c + h}) - m.at({r, c});
                sum += d * d;
                ++n;
            }
        }
        for (int r = 0; r + h < s.rows; ++r) {
            for (int c = 0; c < s.cols; ++c) {
                const double d = m.at({r + h, c}) - m.at({r, c});
                sum += d * d;
                ++n;
            }
        }
        xs.push_back(std::log(static_cast<double>(h)));
        ys.push_back(std::log(sum / (2.0 * n)));
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return sxy / sxx;
}

}  // namespace test
