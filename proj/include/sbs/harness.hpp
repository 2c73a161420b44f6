#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sbs/core.hpp"
#include "sbs/envgen.hpp"
#include "sbs/metrics.hpp"
#include "sbs/planner.hpp"
#include "sbs/stats.hpp"
#include "sbs/strategies.hpp"

namespace sbs::harness {

/// splitmix64-based mix of (master, map, strategy): reproducible regardless of
/// scheduling order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t map_id, std::uint64_t strategy_id) noexcept;

/// Runs job(i) for i in [0, count) on `workers` threads. Results are indexed,
/// so reduction order never depends on completion order.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& job);

struct MapSetParams {
    int count = 100;
    GridSpec spec{100, 100, 1.0};
    double hurst = 0.7;
    std::uint64_t seed = 0;
};

/// FBF maps; a degenerate draw is retried with the next derived seed.
std::vector<GridMap> generate_maps(const MapSetParams& params);
/// Writes map_0000.json ... into `dir`; returns the paths.
std::vector<std::filesystem::path> write_maps(const std::vector<GridMap>& maps, const std::filesystem::path& dir);
/// Loads every *.json map in `dir` in lexicographic filename order.
std::vector<GridMap> load_maps(const std::filesystem::path& dir);

struct StrategyEntry {
    std::string label;
    strategies::StrategyConfig config;
};

struct ExperimentPlan {
    std::vector<GridMap> maps;
    std::optional<ObstacleMask> mask;  // all-free when absent
    std::vector<StrategyEntry> strategies;
    std::vector<double> milestones{0.25, 0.50, 1.00};
    std::uint64_t master_seed = 0;
    int parallelism = 1;
    bool keep_traces = false;

    void validate() const;
};

struct EpisodeResult {
    std::size_t map_id = 0;
    std::size_t strategy_id = 0;
    std::uint64_t seed = 0;
    metrics::MetricTimeline timeline;
    std::optional<strategies::StepTrace> trace;
    std::string error;  // non-empty when the episode aborted

    bool ok() const noexcept { return error.empty(); }
};

/// One row per (strategy, milestone): mean and sd of every metric over maps.
struct AggregateRow {
    std::string strategy;
    int agents = 1;
    double milestone = 1.0;
    int round = 0;
    std::size_t n = 0;
    std::vector<stats::SampleStats> metric;  // metrics::metric_names() order
};

using AggregateTable = std::vector<AggregateRow>;

struct PlanResult {
    std::vector<EpisodeResult> episodes;  // strategy-major, map-minor
    AggregateTable table;
    std::vector<std::vector<std::size_t>> map_sequence;  // per strategy
};

int milestone_round(double fraction, int steps_per_agent) noexcept;

PlanResult run_plan(const ExperimentPlan& plan);

AggregateTable aggregate(const std::vector<EpisodeResult>& episodes, const ExperimentPlan& plan);

void write_aggregate_csv(std::ostream& out, const AggregateTable& table);
AggregateTable read_aggregate_csv(std::istream& in);

/// Writes aggregate.csv, one timeline CSV per episode and, when kept, traces.
void write_plan_outputs(const std::filesystem::path& dir, const ExperimentPlan& plan, const PlanResult& result);

struct ComparisonRow {
    int agents = 1;
    double milestone = 1.0;
    std::string metric;
    stats::SampleStats a;
    stats::SampleStats b;
    double p_value = 1.0;
    bool reject = false;
};

/// Per (agents, milestone, metric) margin test of "a beats b", BH-adjusted
/// across all cells. Rows are matched on (agents, milestone).
std::vector<ComparisonRow> compare(const AggregateTable& a, const AggregateTable& b, double margin, double alpha);
void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);

struct SweepSpec {
    std::vector<double> grid{0.0, 0.1, 1.0, 10.0, 100.0};
    /// Config keys of the weights varied; others stay at `base`.
    std::vector<std::string> varied{"weight_expected_value", "weight_uncertainty", "weight_prefer_center",
                                    "weight_prefer_closeness", "weight_prefer_current_goal"};
    planner::ScoreWeights base;
    int replicates = 20;
    GridSpec spec{50, 50, 1.0};
    int budget = 200;
    double hurst = 0.7;
    double threshold_min = 0.1;
    double threshold_max = 0.9;
    double curve_power_min = 0.5;
    double curve_power_max = 8.0;
    std::uint64_t seed = 0;
    int parallelism = 1;

    void validate() const;
};

SweepSpec parse_sweep_spec(const std::string& json_text);

struct SweepRow {
    planner::ScoreWeights weights;
    double mean_final_sse = 0.0;
    double mean_final_ca90 = 0.0;
    std::size_t episodes = 0;
    int rank = 0;  // 1 = best
};

struct SweepResult {
    std::vector<SweepRow> rows;  // sorted by rank
    std::size_t skipped = 0;     // all-zero score weights
    std::vector<std::pair<envgen::SCurveParams, std::uint64_t>> environments;
};

/// Enumerates the factorial grid over `varied` weights in lexicographic order.
std::vector<planner::ScoreWeights> sweep_combinations(const SweepSpec& spec, std::size_t* skipped = nullptr);

/// Single-agent SBS on S-curve attenuated FBF environments; ranked by mean
/// final SSE, ties broken by higher mean final CA90.
SweepResult run_sweep(const SweepSpec& spec);
void write_sweep_csv(std::ostream& out, const SweepResult& result);

}  // namespace sbs::harness
