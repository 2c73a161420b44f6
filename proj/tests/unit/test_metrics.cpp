#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "sbs/metrics.hpp"

using namespace sbs;
using namespace sbs::metrics;

TEST_CASE("sse examples") {
    GridSpec s(2, 2);
    GridMap a(s, MapKind::estimate, std::vector<double>{1.0, 2.0, 3.0, 4.0});
    GridMap b(s, MapKind::truth, std::vector<double>{1.0, 0.0, 3.0, 1.0});
    CHECK(sse(a, b, ObstacleMask(s)) == 13.0);
    CHECK(sse(b, a, ObstacleMask(s)) == 13.0);
    CHECK(sse(a, a, ObstacleMask(s)) == 0.0);
    CHECK(sse(a, b, ObstacleMask(s, {false, false, false, true})) == 4.0);
    CHECK_THROWS_AS(sse(a, GridMap(GridSpec(2, 3), MapKind::truth), ObstacleMask(s)), ValidationError);
}

TEST_CASE("blocked cells are ignored even when NaN") {
    GridSpec s(2, 2);
    ObstacleMask m(s, {true, false, false, false});
    GridMap est(s, MapKind::estimate, std::vector<double>{std::nan(""), 0.2, 0.4, 0.9});
    GridMap truth(s, MapKind::truth, std::vector<double>{0.5, 0.2, 0.4, 0.9});
    CHECK(sse(est, truth, m) == 0.0);
    CHECK(cax(est, truth, 50.0, m).cax == 1.0);
}

TEST_CASE("nearest-rank threshold") {
    GridSpec s(2, 5);
    std::vector<double> v{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    GridMap t(s, MapKind::truth, v);
    CHECK(truth_threshold(t, 50.0, ObstacleMask(s)) == 0.5);
    CHECK(truth_threshold(t, 90.0, ObstacleMask(s)) == 0.9);
    CHECK(truth_threshold(t, 99.0, ObstacleMask(s)) == 1.0);
    CHECK(truth_threshold(t, 1.0, ObstacleMask(s)) == 0.1);
    CHECK_THROWS_AS(truth_threshold(t, 0.0, ObstacleMask(s)), ValidationError);
    CHECK_THROWS_AS(truth_threshold(t, 100.0, ObstacleMask(s)), ValidationError);
}

TEST_CASE("cax counts") {
    GridSpec s(2, 5);
    GridMap t(s, MapKind::truth, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
    // threshold at 50% = 0.5; truth positives are the last five cells.
    GridMap e(s, MapKind::estimate, std::vector<double>{0.9, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.1, 0.0});
    const auto st = cax(e, t, 50.0, ObstacleMask(s));
    CHECK(st.threshold == 0.5);
    CHECK(st.tp == 3);
    CHECK(st.fp == 1);
    CHECK(st.fn == 2);
    CHECK(st.cax == doctest::Approx(0.5));
}

TEST_CASE("perfect reconstruction scores one at every percentile") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GridSpec s(30, 30);
    std::vector<double> v(s.size());
    for (auto& x : v) x = u(rng);
    GridMap t(s, MapKind::truth, v);
    const auto p = evaluate(7, t, t, ObstacleMask(s));
    CHECK(p.round == 7);
    CHECK(p.sse == 0.0);
    for (double c : p.cax) CHECK(c == 1.0);
}

TEST_CASE("constant truth has no positives") {
    GridSpec s(3, 3);
    GridMap t(s, MapKind::truth, 0.5);
    GridMap e(s, MapKind::estimate, 0.2);
    CHECK(cax(e, t, 90.0, ObstacleMask(s)).cax == 1.0);
}

TEST_CASE("timeline csv round trip") {
    MetricTimeline tl{{0, 12.5, {1.0, 0.5, 0.25, 1.0 / 3.0, 0.0}}, {3, 0.1, {0.9, 0.8, 0.7, 0.6, 0.5}}};
    std::stringstream ss;
    write_timeline_csv(ss, tl);
    const auto back = read_timeline_csv(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0].round == 0);
    CHECK(back[0].sse == 12.5);
    CHECK(back[0].cax == tl[0].cax);
    CHECK(back[1].cax == tl[1].cax);
}

TEST_CASE("metric table helpers") {
    CHECK(metric_names().size() == 6);
    CHECK(lower_is_better(0));
    CHECK_FALSE(lower_is_better(3));
    MetricPoint p{0, 2.0, {0.1, 0.2, 0.3, 0.4, 0.5}};
    CHECK(metric_value(p, 0) == 2.0);
    CHECK(metric_value(p, 5) == 0.5);
}
