#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sbs/planner.hpp"

using namespace sbs;
using namespace sbs::planner;

namespace {

geostat::ReconstructedMap recon_from(const GridSpec& s, std::vector<double> est, std::vector<double> unc) {
    return {GridMap(s, MapKind::estimate, std::move(est)), GridMap(s, MapKind::uncertainty, std::move(unc)), 5,
            false};
}

}  // namespace

TEST_CASE("weight defaults depend on team size") {
    CHECK(ScoreWeights::defaults_for(1).prefer_current_goal == 10.0);
    CHECK(ScoreWeights::defaults_for(2).prefer_current_goal == 10.0);
    CHECK(ScoreWeights::defaults_for(3).prefer_current_goal == 1.0);
    const auto w = ScoreWeights::defaults_for(4);
    CHECK(w.expected_value == 1.0);
    CHECK(w.uncertainty == 10.0);
    CHECK(w.prefer_center == 0.1);
    CHECK(w.prefer_closeness == 0.1);
    CHECK(w.step_cost == 0.01);
}

TEST_CASE("weights parse, validate and round trip") {
    const auto w = parse_weights("# tuned\nweight_uncertainty = 3.5\n\nweight_step_cost=0.2  # note\n");
    CHECK(w.uncertainty == 3.5);
    CHECK(w.step_cost == 0.2);
    CHECK(w.expected_value == 1.0);
    CHECK(parse_weights(format_weights(w)) == w);
    CHECK_THROWS_AS(parse_weights("weight_bogus=1"), ValidationError);
    CHECK_THROWS_AS(parse_weights("weight_uncertainty=abc"), ValidationError);
    CHECK_THROWS_AS(parse_weights("weight_uncertainty"), ValidationError);
    CHECK_THROWS_AS(parse_weights("weight_uncertainty=-1"), ValidationError);
    CHECK_THROWS_AS(parse_weights("weight_step_cost=0"), ValidationError);
    CHECK_THROWS_AS(parse_weights("weight_expected_value=0\nweight_uncertainty=0\nweight_prefer_center=0\n"
                                  "weight_prefer_closeness=0\nweight_prefer_current_goal=0"),
                    ValidationError);
}

TEST_CASE("normalize01") {
    GridSpec s(2, 2);
    ObstacleMask m(s, {false, false, false, true});
    const auto n = normalize01(GridMap(s, MapKind::score, std::vector<double>{2.0, 4.0, 3.0, 100.0}), m);
    CHECK(n.values() == std::vector<double>{0.0, 1.0, 0.5, 0.0});
    const auto c = normalize01(GridMap(s, MapKind::score, 7.0), ObstacleMask(s));
    for (double v : c.values()) CHECK(v == 0.0);
}

TEST_CASE("score matches the term-by-term oracle") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        GridSpec s(5 + trial % 3, 5 + trial % 4);
        auto blocked = oracle::random_blocked(s, 0.2, rng);
        const Cell pos{1, 1};
        blocked[cell_index(s, pos)] = false;
        ObstacleMask mask(s, blocked);
        std::vector<double> est(s.size()), unc(s.size());
        for (auto& v : est) v = u(rng);
        for (auto& v : unc) v = u(rng);
        ScoreWeights w{u(rng), u(rng) * 10, u(rng), u(rng), u(rng) * 10, 0.01};
        AgentState agent{0, pos};
        const Cell goal{s.rows - 1, s.cols - 2};
        if (trial % 2) agent.goal = goal;
        const auto got = compute_score(recon_from(s, est, unc), agent, {agent}, w, s, mask);
        const auto want = oracle::score(est, unc, s, blocked, pos, trial % 2 ? &goal : nullptr, w);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(got.score[i] - want[i]) <= 1e-12);
    }
}

TEST_CASE("score is invariant to affine rescaling of the estimate") {
    GridSpec s(6, 6);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> est(s.size()), est2(s.size()), unc(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        est[i] = u(rng);
        est2[i] = 3.0 * est[i] + 7.0;
        unc[i] = u(rng);
    }
    const AgentState a{0, Cell{2, 3}};
    const auto w = ScoreWeights::defaults_for(1);
    const auto x = compute_score(recon_from(s, est, unc), a, {a}, w, s, ObstacleMask(s));
    const auto y = compute_score(recon_from(s, est2, unc), a, {a}, w, s, ObstacleMask(s));
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(x.score[i] - y.score[i]) <= 1e-12);
}

TEST_CASE("voronoi examples and tie rule") {
    GridSpec s(2, 10);
    const std::vector<AgentState> agents{{0, Cell{0, 0}}, {1, Cell{0, 9}}};
    const auto own = voronoi_partition(agents, s, ObstacleMask(s));
    for (int c = 0; c < 10; ++c) {
        CHECK(own[cell_index(s, Cell{0, c})] == (c <= 4 ? 0 : 1));
        CHECK(own[cell_index(s, Cell{1, c})] == (c <= 4 ? 0 : 1));
    }
    // Equidistant cell goes to the lower id regardless of input order.
    GridSpec t(3, 3);
    const auto tie = voronoi_partition({{5, Cell{0, 2}}, {2, Cell{0, 0}}}, t, ObstacleMask(t));
    CHECK(tie[cell_index(t, Cell{1, 1})] == 2);
    CHECK(tie[cell_index(t, Cell{2, 2})] == 5);
    CHECK_THROWS_AS(voronoi_partition({}, t, ObstacleMask(t)), ValidationError);
}

TEST_CASE("voronoi is a disjoint cover of free cells") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        GridSpec s(10, 12);
        auto blocked = oracle::random_blocked(s, 0.25, rng);
        std::vector<AgentState> agents;
        const int n = 1 + trial % 16;
        std::uniform_int_distribution<int> rr(0, s.rows - 1), cc(0, s.cols - 1);
        for (int k = 0; k < n; ++k) {
            Cell c{rr(rng), cc(rng)};
            blocked[cell_index(s, c)] = false;
            agents.push_back({k, c});
        }
        ObstacleMask mask(s, blocked);
        const auto own = voronoi_partition(agents, s, mask);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (mask.blocked(i)) {
                CHECK(own[i] == kNoOwner);
                continue;
            }
            REQUIRE(own[i] >= 0);
            REQUIRE(own[i] < n);
            const Cell c = cell_at(s, i);
            const double d = oracle::dist(s, c, agents[static_cast<std::size_t>(own[i])].position);
            for (const auto& a : agents) {
                const double e = oracle::dist(s, c, a.position);
                CHECK(d <= e);
                if (e == d) CHECK(own[i] <= a.id);
            }
        }
    }
}

TEST_CASE("select_goal picks the best owned cell, lowest index on ties, never its own cell") {
    GridSpec s(2, 3);
    ScoreMap sm{GridMap(s, MapKind::score, std::vector<double>{9.0, 1.0, 5.0, 2.0, 5.0, 0.0}),
                VoronoiOwners{0, 0, 0, 0, 0, 1}};
    const AgentState a{0, Cell{0, 0}};
    CHECK(select_goal(sm, a, ObstacleMask(s)) == Cell{0, 2});
    const AgentState lone{1, Cell{1, 2}};
    CHECK(select_goal(sm, lone, ObstacleMask(s)) == Cell{1, 2});
    CHECK_THROWS_AS(select_goal(sm, AgentState{2, Cell{0, 1}}, ObstacleMask(s)), ValidationError);
}

TEST_CASE("astar equals dijkstra on random weighted grids") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.05, 3.0);
    int compared = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<int> dim(2, 20);
        GridSpec s(dim(rng), dim(rng));
        auto blocked = oracle::random_blocked(s, trial % 2 ? 0.3 : 0.0, rng);
        std::uniform_int_distribution<int> rr(0, s.rows - 1), cc(0, s.cols - 1);
        const Cell a{rr(rng), cc(rng)}, b{rr(rng), cc(rng)};
        blocked[cell_index(s, a)] = false;
        blocked[cell_index(s, b)] = false;
        ObstacleMask mask(s, blocked);
        std::vector<double> w(s.size());
        for (auto& x : w) x = u(rng);
        double wmin = *std::min_element(w.begin(), w.end());
        auto cost = [&](Cell to, double len) { return w[cell_index(s, to)] * len; };
        const double want = oracle::dijkstra(s, blocked, a, b, cost);
        if (!std::isfinite(want)) {
            CHECK_THROWS_AS(astar(a, b, mask, cost, wmin), NoPathError);
            continue;
        }
        const auto r = astar(a, b, mask, cost, wmin);
        CHECK(r.cost == want);
        CHECK(r.cells.front() == a);
        CHECK(r.cells.back() == b);
        CHECK(is_8_connected(r.cells));
        for (const auto& c : r.cells) CHECK(mask.free(c));
        ++compared;
    }
    CHECK(compared > 50);
}

TEST_CASE("shortest route through a corridor") {
    // ##########
    // ....#.....
    // ##.....###
    GridSpec s(3, 10);
    std::vector<bool> b(s.size(), false);
    for (int c = 0; c < 10; ++c) b[cell_index(s, Cell{0, c})] = true;
    b[cell_index(s, Cell{1, 4})] = true;
    for (int c : {0, 1, 7, 8, 9}) b[cell_index(s, Cell{2, c})] = true;
    ObstacleMask mask(s, b);
    const auto r = route_shortest(Cell{1, 0}, Cell{1, 9}, mask);
    CHECK(r.cost == doctest::Approx(7.0 + 2.0 * std::numbers::sqrt2));
    CHECK(is_8_connected(r.cells));
    for (const auto& c : r.cells) CHECK(mask.free(c));
}

TEST_CASE("no path and blocked endpoints") {
    GridSpec s(3, 3);
    ObstacleMask wall(s, {false, true, false, false, true, false, false, true, false});
    CHECK_THROWS_AS(route_shortest(Cell{0, 0}, Cell{0, 2}, wall), NoPathError);
    CHECK_THROWS_AS(route_shortest(Cell{0, 0}, Cell{0, 1}, wall), NoPathError);
    const auto same = route_shortest(Cell{1, 0}, Cell{1, 0}, wall);
    CHECK(same.cells.size() == 1);
    CHECK(same.cost == 0.0);
}

TEST_CASE("score-biased route prefers high-score cells") {
    GridSpec s(3, 5);
    std::vector<double> sc(s.size(), 0.0);
    for (int c = 0; c < 5; ++c) sc[cell_index(s, Cell{2, c})] = 1.0;
    ScoreMap sm{GridMap(s, MapKind::score, sc), VoronoiOwners(s.size(), 0)};
    const auto r = route_astar(Cell{1, 0}, Cell{1, 4}, sm, ScoreWeights{}, ObstacleMask(s));
    int on_high = 0;
    for (const auto& c : r.cells) on_high += c.row == 2;
    CHECK(on_high >= 3);
    const double want = oracle::dijkstra(s, std::vector<bool>(s.size(), false), Cell{1, 0}, Cell{1, 4},
                                         [&](Cell to, double len) {
                                             return 0.01 * len + 1.0 / (sc[cell_index(s, to)] + 0.1);
                                         });
    CHECK(r.cost == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("co-located agents: the higher id owns nothing") {
    GridSpec s(4, 4);
    const std::vector<AgentState> agents{{0, Cell{1, 1}}, {1, Cell{1, 1}}, {2, Cell{3, 3}}};
    const auto own = voronoi_partition(agents, s, ObstacleMask(s));
    CHECK(owns_any(own, 0));
    CHECK_FALSE(owns_any(own, 1));
    CHECK(owns_any(own, 2));
}
