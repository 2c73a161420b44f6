#pragma once

#include <cstddef>
#include <vector>

namespace sbs::stats {

struct SampleStats {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
};

SampleStats describe(const std::vector<double>& values);

enum class Better { lower, higher };

/// One-sided Welch test on summary statistics.
/// H0: a does not beat b by at least `relative_margin`, where beating means
/// mean_a <= (1 - margin) * mean_b for Better::lower and
/// mean_a >= (1 + margin) * mean_b for Better::higher. Returns the p-value.
/// With zero variance on both sides the p-value is 0, 0.5 or 1 according to
/// the sign of the shifted difference.
double welch_margin_test(const SampleStats& a, const SampleStats& b, double relative_margin, Better direction);

/// Benjamini-Hochberg step-up; reject flags in input order.
std::vector<bool> bh_adjust(const std::vector<double>& p_values, double alpha);

/// Mean of means and mean of variances over equal-n groups; n is summed.
SampleStats pooled_stats(const std::vector<SampleStats>& groups);

}  // namespace sbs::stats
