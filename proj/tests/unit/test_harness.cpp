#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <set>
#include <sstream>

#include "sbs/harness.hpp"

using namespace sbs;
using namespace sbs::harness;

TEST_CASE("derived seeds are stable and distinct") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    std::set<std::uint64_t> seen;
    for (std::uint64_t m = 0; m < 20; ++m) {
        for (std::uint64_t s = 0; s < 5; ++s) seen.insert(derive_seed(7, m, s));
    }
    CHECK(seen.size() == 100);
    CHECK(derive_seed(0, 1, 2) != derive_seed(0, 2, 1));
}

TEST_CASE("parallel_for runs every index once") {
    for (int workers : {1, 3, 8}) {
        std::vector<std::atomic<int>> hits(37);
        parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
        for (auto& h : hits) CHECK(h.load() == 1);
    }
}

TEST_CASE("milestone rounds") {
    CHECK(milestone_round(0.25, 200) == 50);
    CHECK(milestone_round(0.5, 266) == 133);
    CHECK(milestone_round(1.0, 266) == 266);
    CHECK(milestone_round(0.25, 50) == 12);
}

TEST_CASE("map sets are reproducible and written in order") {
    MapSetParams p{3, GridSpec(8, 8), 0.7, 5};
    const auto a = generate_maps(p);
    const auto b = generate_maps(p);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a[i].values() == b[i].values());
    CHECK(a[0].values() != a[1].values());
    const auto dir = std::filesystem::temp_directory_path() / "sbs_harness_maps";
    std::filesystem::remove_all(dir);
    write_maps(a, dir);
    const auto back = load_maps(dir);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(back[i].values() == a[i].values());
    std::filesystem::remove_all(dir);
}

namespace {

ExperimentPlan tiny_plan(int parallelism) {
    ExperimentPlan plan;
    plan.maps = generate_maps(MapSetParams{4, GridSpec(10, 10), 0.7, 2});
    for (auto k : {strategies::StrategyKind::sbs, strategies::StrategyKind::wandering}) {
        strategies::StrategyConfig c;
        c.kind = k;
        c.total_step_budget = 12;
        c.num_agents = 2;
        c.weights = planner::ScoreWeights::defaults_for(2);
        plan.strategies.push_back({std::string(strategies::to_string(k)), c});
    }
    plan.master_seed = 9;
    plan.parallelism = parallelism;
    return plan;
}

}  // namespace

TEST_CASE("plans aggregate identically regardless of parallelism") {
    const auto a = run_plan(tiny_plan(1));
    const auto b = run_plan(tiny_plan(3));
    REQUIRE(a.episodes.size() == 8);
    REQUIRE(a.table.size() == 6);
    std::ostringstream x, y;
    write_aggregate_csv(x, a.table);
    write_aggregate_csv(y, b.table);
    CHECK(x.str() == y.str());
    for (const auto& e : a.episodes) {
        CHECK(e.ok());
        CHECK(e.timeline.size() == 7);
    }
    CHECK(a.table[0].round == 1);
    CHECK(a.table[2].round == 6);
}

TEST_CASE("aggregate csv round trip") {
    const auto r = run_plan(tiny_plan(1));
    std::stringstream ss;
    write_aggregate_csv(ss, r.table);
    const auto back = read_aggregate_csv(ss);
    REQUIRE(back.size() == r.table.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].strategy == r.table[i].strategy);
        CHECK(back[i].agents == r.table[i].agents);
        CHECK(back[i].round == r.table[i].round);
        CHECK(back[i].n == r.table[i].n);
        for (std::size_t k = 0; k < back[i].metric.size(); ++k) {
            CHECK(back[i].metric[k].mean == r.table[i].metric[k].mean);
            CHECK(back[i].metric[k].sd == r.table[i].metric[k].sd);
        }
    }
    std::istringstream bad("header\nfoo,1,2\n");
    CHECK_THROWS_AS(read_aggregate_csv(bad), ValidationError);
}

TEST_CASE("compare flags a clearly better table") {
    AggregateTable a, b;
    AggregateRow ra{"x", 1, 1.0, 10, 50, {}}, rb{"y", 1, 1.0, 10, 50, {}};
    for (std::size_t k = 0; k < metrics::metric_names().size(); ++k) {
        ra.metric.push_back(k == 0 ? stats::SampleStats{50, 10.0, 1.0} : stats::SampleStats{50, 0.9, 0.05});
        rb.metric.push_back(k == 0 ? stats::SampleStats{50, 20.0, 1.0} : stats::SampleStats{50, 0.5, 0.05});
    }
    a.push_back(ra);
    b.push_back(rb);
    const auto rows = compare(a, b, 0.1, 0.05);
    REQUIRE(rows.size() == metrics::metric_names().size());
    for (const auto& r : rows) CHECK(r.reject);
    const auto reverse = compare(b, a, 0.1, 0.05);
    for (const auto& r : reverse) CHECK_FALSE(r.reject);
}

TEST_CASE("plan validation") {
    auto plan = tiny_plan(1);
    plan.strategies[1].config.total_step_budget = 20;
    CHECK_THROWS_AS(plan.validate(), ValidationError);
    ExperimentPlan empty;
    CHECK_THROWS_AS(empty.validate(), ValidationError);
}

TEST_CASE("sweep combinations enumerate the grid and skip all-zero weights") {
    SweepSpec spec;
    spec.grid = {0.0, 1.0};
    std::size_t skipped = 0;
    const auto combos = sweep_combinations(spec, &skipped);
    CHECK(skipped == 1);
    CHECK(combos.size() == 31);
    CHECK(combos.front().prefer_current_goal == 1.0);
    CHECK(combos.front().expected_value == 0.0);
    CHECK(combos.back().expected_value == 1.0);
    spec.varied = {"weight_uncertainty"};
    spec.grid = {0.0, 0.5, 2.0};
    const auto one = sweep_combinations(spec);
    REQUIRE(one.size() == 3);
    CHECK(one[2].uncertainty == 2.0);
    CHECK(one[2].expected_value == spec.base.expected_value);
}

TEST_CASE("sweep spec parsing") {
    const auto s = parse_sweep_spec(R"({"grid":[1,2],"varied":["weight_uncertainty"],"replicates":2,
        "rows":12,"cols":12,"budget":20,"base":{"weight_step_cost":0.5}})");
    CHECK(s.grid == std::vector<double>{1.0, 2.0});
    CHECK(s.replicates == 2);
    CHECK(s.spec.rows == 12);
    CHECK(s.base.step_cost == 0.5);
    CHECK_THROWS_AS(parse_sweep_spec(R"({"varied":["weight_nope"]})"), ValidationError);
}

TEST_CASE("small sweep ranks its rows") {
    auto s = parse_sweep_spec(R"({"grid":[0.1,10],"varied":["weight_uncertainty"],"replicates":2,
        "rows":10,"cols":10,"budget":15,"seed":4})");
    const auto r = run_sweep(s);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].rank == 1);
    CHECK(r.rows[1].rank == 2);
    CHECK(r.rows[0].mean_final_sse <= r.rows[1].mean_final_sse);
    CHECK(r.environments.size() == 2);
}
