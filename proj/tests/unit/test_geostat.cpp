#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "sbs/geostat.hpp"

using namespace sbs;
using namespace sbs::geostat;

namespace {

std::vector<SamplePoint> random_points(const GridSpec& s, std::size_t n, std::mt19937_64& rng) {
    std::set<Cell> used;
    std::uniform_int_distribution<int> rr(0, s.rows - 1), cc(0, s.cols - 1);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    std::vector<SamplePoint> pts;
    while (pts.size() < n) {
        const Cell c{rr(rng), cc(rng)};
        if (!used.insert(c).second) continue;
        pts.push_back({c, val(rng)});
    }
    return pts;
}

}  // namespace

TEST_CASE("dedupe averages repeats and keeps first-appearance order") {
    MeasurementLog log;
    log.append({0, Cell{2, 2}, 1.0, 1});
    log.append({0, Cell{0, 1}, 4.0, 2});
    log.append({1, Cell{2, 2}, 3.0, 1});
    const auto pts = dedupe_measurements(log);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0] == SamplePoint{Cell{2, 2}, 2.0});
    CHECK(pts[1] == SamplePoint{Cell{0, 1}, 4.0});
}

TEST_CASE("variogram examples") {
    GridSpec s(5, 5);
    const auto two = empirical_variogram({{Cell{0, 0}, 0.0}, {Cell{0, 1}, 1.0}}, s, 15);
    REQUIRE(two.size() == 1);
    CHECK(two[0].semivariance == 0.5);
    CHECK(two[0].lag == 1.0);
    CHECK(two[0].pair_count == 1);

    const auto flat =
        empirical_variogram({{Cell{0, 0}, 3.0}, {Cell{1, 3}, 3.0}, {Cell{4, 4}, 3.0}, {Cell{2, 0}, 3.0}}, s, 4);
    for (const auto& b : flat) CHECK(b.semivariance == 0.0);

    CHECK_THROWS_AS(empirical_variogram({{Cell{0, 0}, 1.0}}, s, 3), ValidationError);
    CHECK_THROWS_AS(empirical_variogram({{Cell{0, 0}, 1.0}, {Cell{0, 0}, 2.0}}, s, 3), ValidationError);
}

TEST_CASE("variogram matches the all-pairs oracle") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        GridSpec s(12, 15, trial % 2 ? 10.0 : 1.0);
        const auto pts = random_points(s, 4 + trial, rng);
        const int bins = 3 + trial % 13;
        const auto got = empirical_variogram(pts, s, bins);
        const auto want = oracle::variogram(pts, s, bins);
        REQUIRE(got.size() == want.size());
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].pair_count == want[i].pair_count);
            CHECK(got[i].lag == doctest::Approx(want[i].lag).epsilon(1e-12));
            CHECK(got[i].semivariance == doctest::Approx(want[i].semivariance).epsilon(1e-12));
            pairs += got[i].pair_count;
        }
        CHECK(pairs == pts.size() * (pts.size() - 1) / 2);
    }
}

TEST_CASE("spherical model shape") {
    VariogramModel m{0.2, 1.0, 10.0};
    CHECK(m.gamma(0.0) == 0.0);
    CHECK(m.gamma(10.0) == 1.0);
    CHECK(m.gamma(50.0) == 1.0);
    CHECK(m.gamma(5.0) == doctest::Approx(0.2 + 0.8 * (0.75 - 0.0625)));
    CHECK(m.covariance(0.0) == 1.0);
    CHECK(m.covariance(20.0) == 0.0);
}

TEST_CASE("fit recovers a noiseless spherical variogram") {
    std::vector<VariogramBin> bins;
    const VariogramModel truth{0.0, 1.0, 20.0};
    for (int i = 1; i <= 15; ++i) {
        const double h = 2.0 * i;
        bins.push_back({h, truth.gamma(h), 100});
    }
    const auto fit = fit_spherical(bins);
    REQUIRE(fit);
    CHECK(fit->nugget == doctest::Approx(0.0).epsilon(0.01));
    CHECK(std::abs(fit->nugget) <= 0.01);
    CHECK(fit->sill == doctest::Approx(1.0).epsilon(0.01));
    CHECK(fit->range_m == doctest::Approx(20.0).epsilon(0.01));
}

TEST_CASE("fit with a nugget") {
    std::vector<VariogramBin> bins;
    const VariogramModel truth{0.3, 1.3, 12.0};
    for (int i = 1; i <= 12; ++i) bins.push_back({1.5 * i, truth.gamma(1.5 * i), static_cast<std::size_t>(10 + i)});
    const auto fit = fit_spherical(bins);
    REQUIRE(fit);
    CHECK(fit->nugget == doctest::Approx(0.3).epsilon(0.01));
    CHECK(fit->sill == doctest::Approx(1.3).epsilon(0.01));
    CHECK(fit->range_m == doctest::Approx(12.0).epsilon(0.01));
}

TEST_CASE("fit edge cases") {
    CHECK_FALSE(fit_spherical({{1.0, 0.5, 1}, {2.0, 0.6, 1}}));
    const auto zero = fit_spherical({{1.0, 0.0, 3}, {2.0, 0.0, 3}, {3.0, 0.0, 3}});
    REQUIRE(zero);
    CHECK(zero->sill == kMinSill);
    CHECK(zero->nugget == 0.0);
}

TEST_CASE("fallback model") {
    GridSpec s(30, 40);
    const auto m = fallback_model({{Cell{0, 0}, 0.0}, {Cell{1, 1}, 2.0}}, s);
    CHECK(m.nugget == 0.0);
    CHECK(m.sill == 1.0);
    CHECK(m.range_m == doctest::Approx(12.5));
    CHECK(fallback_model({{Cell{0, 0}, 1.0}, {Cell{1, 1}, 1.0}}, s).sill == kMinSill);
}

TEST_CASE("kriging honours data exactly with zero nugget") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        GridSpec s(20, 20);
        const auto pts = random_points(s, 5 + trial, rng);
        const VariogramModel m{0.0, 0.05 + 0.02 * trial, 3.0 + trial};
        const auto r = krige(pts, m, s, ObstacleMask(s));
        for (const auto& p : pts) {
            CHECK(std::abs(r.estimate.at(p.cell) - p.value) <= 1e-6);
            CHECK(r.uncertainty.at(p.cell) <= 1e-6);
        }
        CHECK(r.n_measurements_used == pts.size());
        CHECK_FALSE(r.burn_in);
    }
}

TEST_CASE("kriging matches the dense semivariance oracle") {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 8; ++trial) {
        GridSpec s(10, 12, trial % 2 ? 10.0 : 1.0);
        const auto pts = random_points(s, 6 + 2 * trial, rng);
        const double scale = s.cell_size_m;
        const VariogramModel m{0.05 * (trial % 3), 0.5 + 0.1 * trial, scale * (2.0 + trial)};
        const auto r = krige(pts, m, s, ObstacleMask(s));
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto want = oracle::krige_point(pts, m, s, cell_at(s, i));
            CHECK(std::abs(r.estimate[i] - want.estimate) <= 1e-8);
            CHECK(std::abs(r.uncertainty[i] - std::max(want.variance, 0.0)) <= 1e-8);
        }
    }
}

TEST_CASE("kriging weights sum to one and reproduce the estimate") {
    std::mt19937_64 rng(5);
    GridSpec s(9, 9);
    const auto pts = random_points(s, 12, rng);
    const VariogramModel m{0.0, 1.0, 5.0};
    const auto r = krige(pts, m, s, ObstacleMask(s));
    for (const Cell c : {Cell{0, 0}, Cell{4, 4}, Cell{8, 3}}) {
        const auto w = kriging_weights(pts, m, s, c);
        double sum = 0.0, est = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            sum += w.lambda[i];
            est += w.lambda[i] * pts[i].value;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        CHECK(std::abs(est - r.estimate.at(c)) <= 1e-8);
    }
}

TEST_CASE("constant data krige to the constant") {
    GridSpec s(8, 8);
    const std::vector<SamplePoint> pts{{Cell{0, 0}, 0.4}, {Cell{7, 7}, 0.4}, {Cell{3, 5}, 0.4}, {Cell{6, 1}, 0.4}};
    const auto r = krige(pts, VariogramModel{0.0, 1.0, 4.0}, s, ObstacleMask(s));
    for (double v : r.estimate.values()) CHECK(std::abs(v - 0.4) <= 1e-9);
}

TEST_CASE("kriging is invariant to point order") {
    std::mt19937_64 rng(23);
    GridSpec s(15, 15);
    auto pts = random_points(s, 20, rng);
    const VariogramModel m{0.01, 0.2, 6.0};
    const auto a = krige(pts, m, s, ObstacleMask(s));
    std::shuffle(pts.begin(), pts.end(), rng);
    const auto b = krige(pts, m, s, ObstacleMask(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(std::abs(a.estimate[i] - b.estimate[i]) <= 1e-9);
        CHECK(std::abs(a.uncertainty[i] - b.uncertainty[i]) <= 1e-9);
    }
}

TEST_CASE("kriging on a masked grid") {
    GridSpec s(6, 6);
    std::vector<bool> blocked(s.size(), false);
    blocked[cell_index(s, Cell{2, 2})] = true;
    blocked[cell_index(s, Cell{2, 3})] = true;
    ObstacleMask mask(s, blocked);
    const std::vector<SamplePoint> pts{{Cell{0, 0}, 0.1}, {Cell{5, 5}, 0.9}, {Cell{0, 5}, 0.5}};
    const auto r = krige(pts, VariogramModel{0.0, 1.0, 4.0}, s, mask);
    CHECK(std::isnan(r.estimate.at(Cell{2, 2})));
    double max_free = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (mask.free(i)) max_free = std::max(max_free, r.uncertainty[i]);
    }
    CHECK(r.uncertainty.at(Cell{2, 3}) == max_free);
}

TEST_CASE("kriging needs three distinct points") {
    GridSpec s(4, 4);
    CHECK_THROWS_AS(krige({{Cell{0, 0}, 1.0}, {Cell{1, 1}, 2.0}}, VariogramModel{}, s, ObstacleMask(s)),
                    ValidationError);
}

TEST_CASE("burn-in surrogate") {
    GridSpec s(3, 3);
    MeasurementLog log;
    log.append({0, Cell{0, 0}, 0.2, 1});
    log.append({0, Cell{1, 1}, 0.6, 2});
    const auto r = burn_in_surrogate(log, s, ObstacleMask(s));
    CHECK(r.burn_in);
    CHECK(r.n_measurements_used == 2);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(r.estimate[i] == doctest::Approx(0.4));
    CHECK(r.uncertainty.at(Cell{0, 0}) == 0.0);
    CHECK(r.uncertainty.at(Cell{1, 1}) == 0.0);
    CHECK(r.uncertainty.at(Cell{2, 2}) == 1.0);

    const auto empty = burn_in_surrogate(MeasurementLog{}, s, ObstacleMask(s));
    for (double v : empty.estimate.values()) CHECK(v == 0.0);
    for (double v : empty.uncertainty.values()) CHECK(v == 1.0);
}

TEST_CASE("reconstructor switches from burn-in to kriging") {
    GridSpec s(10, 10);
    Reconstructor rec(s, ObstacleMask(s));
    MeasurementLog log;
    log.append({0, Cell{0, 0}, 0.1, 1});
    log.append({0, Cell{0, 0}, 0.3, 2});
    log.append({0, Cell{5, 5}, 0.5, 3});
    CHECK(rec.reconstruct(log).burn_in);
    log.append({0, Cell{9, 2}, 0.9, 4});
    const auto r = rec.reconstruct(log);
    CHECK_FALSE(r.burn_in);
    CHECK(r.n_measurements_used == 3);
    CHECK(std::abs(r.estimate.at(Cell{0, 0}) - 0.2) <= 1e-6);
}
