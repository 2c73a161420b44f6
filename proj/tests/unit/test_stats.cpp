#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sbs/core.hpp"
#include "sbs/stats.hpp"

using namespace sbs::stats;

TEST_CASE("describe uses the unbiased sd") {
    const auto s = describe({1.0, 2.0, 3.0, 4.0});
    CHECK(s.n == 4);
    CHECK(s.mean == 2.5);
    CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(describe({}).n == 0);
    CHECK(describe({3.0}).sd == 0.0);
}

TEST_CASE("t tail oracle sanity") {
    CHECK(oracle::t_upper(0.0, 7.0) == doctest::Approx(0.5));
    // Cauchy: P(T > 1) = 1/4 for one degree of freedom.
    CHECK(oracle::t_upper(1.0, 1.0) == doctest::Approx(0.25).epsilon(1e-12));
    // Two degrees of freedom have a closed-form tail.
    for (double t : {-2.0, 0.5, 3.0}) {
        CHECK(oracle::t_upper(t, 2.0) == doctest::Approx(0.5 - t / (2.0 * std::sqrt(2.0 + t * t))).epsilon(1e-12));
    }
}

TEST_CASE("welch margin test matches the closed-form oracle") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> mean(1.0, 100.0), sd(0.1, 30.0), margin(0.0, 0.3);
    std::uniform_int_distribution<int> n(2, 200);
    for (int i = 0; i < 200; ++i) {
        const SampleStats a{static_cast<std::size_t>(n(rng)), mean(rng), sd(rng)};
        const SampleStats b{static_cast<std::size_t>(n(rng)), mean(rng), sd(rng)};
        const double m = margin(rng);
        for (auto dir : {Better::lower, Better::higher}) {
            const double want = oracle::welch_margin_p(a.mean, a.sd, a.n, b.mean, b.sd, b.n, m, dir == Better::lower);
            CHECK(welch_margin_test(a, b, m, dir) == doctest::Approx(want).epsilon(1e-9));
        }
    }
}

TEST_CASE("welch examples") {
    const SampleStats same{100, 50.0, 10.0};
    CHECK(welch_margin_test(same, same, 0.10, Better::lower) > 0.05);
    CHECK(welch_margin_test(same, same, 0.10, Better::higher) > 0.05);
    CHECK(welch_margin_test(same, same, 0.0, Better::lower) == doctest::Approx(0.5));
    const SampleStats better{100, 30.0, 10.0};
    CHECK(welch_margin_test(better, same, 0.10, Better::lower) < 1e-6);
    CHECK(welch_margin_test(SampleStats{5, 1.0, 0.0}, SampleStats{5, 2.0, 0.0}, 0.0, Better::lower) == 0.0);
    CHECK(welch_margin_test(SampleStats{5, 3.0, 0.0}, SampleStats{5, 2.0, 0.0}, 0.0, Better::lower) == 1.0);
    CHECK(welch_margin_test(SampleStats{5, 2.0, 0.0}, SampleStats{5, 2.0, 0.0}, 0.0, Better::lower) == 0.5);
    CHECK_THROWS_AS(welch_margin_test(SampleStats{1, 2.0, 0.0}, same, 0.0, Better::lower), sbs::ValidationError);
}

TEST_CASE("benjamini-hochberg") {
    CHECK(bh_adjust({0.01, 0.02, 0.03, 0.04}, 0.05) == std::vector<bool>{true, true, true, true});
    CHECK(bh_adjust({0.04, 0.01, 0.5, 0.03}, 0.05) == std::vector<bool>{false, true, false, false});
    // Step-up: a larger p can be rejected through a later rank.
    CHECK(bh_adjust({0.011, 0.04, 0.039, 0.9}, 0.08) == std::vector<bool>{true, true, true, false});
    CHECK(bh_adjust({}, 0.05).empty());
    CHECK(bh_adjust({0.5, 0.6}, 0.05) == std::vector<bool>{false, false});
}

TEST_CASE("pooled stats") {
    const auto p = pooled_stats({{10, 1.0, 3.0}, {10, 3.0, 4.0}});
    CHECK(p.n == 20);
    CHECK(p.mean == 2.0);
    CHECK(p.sd == doctest::Approx(std::sqrt(12.5)));
    CHECK_THROWS_AS(pooled_stats({{10, 1.0, 1.0}, {5, 1.0, 1.0}}), sbs::ValidationError);
}
