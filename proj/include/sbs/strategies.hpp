#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "sbs/core.hpp"
#include "sbs/geostat.hpp"
#include "sbs/planner.hpp"

namespace sbs::strategies {

enum class StrategyKind { sbs, ptp, spiral, wandering };
enum class Placement { center, edges, random, explicit_cells };

std::string_view to_string(StrategyKind kind) noexcept;
StrategyKind strategy_from_string(std::string_view name);
std::string_view to_string(Placement placement) noexcept;
Placement placement_from_string(std::string_view name);

struct StrategyConfig {
    StrategyKind kind = StrategyKind::sbs;
    planner::ScoreWeights weights;
    int total_step_budget = 800;
    int num_agents = 1;
    Placement placement = Placement::center;
    std::vector<Cell> explicit_cells;
    std::uint64_t rng_seed = 0;
    double sensor_noise_sigma = 0.0;

    int steps_per_agent() const noexcept { return num_agents > 0 ? total_step_budget / num_agents : 0; }
    void validate() const;
};

/// Distinct free starting cells for `count` agents.
std::vector<Cell> initial_positions(Placement placement, int count, const ObstacleMask& mask, std::mt19937_64& rng,
                                    const std::vector<Cell>& explicit_cells = {});

struct AgentSnapshot {
    AgentId id = 0;
    Cell position;
    std::optional<Cell> goal;
};

struct RoundRecord {
    int round = 0;
    std::vector<AgentSnapshot> agents;
    std::vector<Measurement> measurements;
};

struct StepTrace {
    std::vector<RoundRecord> rounds;  // rounds[0] holds the initial samples

    int movement_rounds() const noexcept { return rounds.empty() ? 0 : static_cast<int>(rounds.size()) - 1; }
    std::size_t total_measurements() const noexcept;
    std::size_t movement_samples() const noexcept;
};

/// One JSON object per round.
void write_trace_jsonl(std::ostream& out, const StepTrace& trace);

/// Called after every round's samples with the reconstruction built from all
/// measurements so far (round 0 = initial samples).
using RoundObserver =
    std::function<void(int round, const geostat::ReconstructedMap& recon, const MeasurementLog& log)>;

struct EpisodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

StepTrace run_episode(const GridMap& truth, const ObstacleMask& mask, const StrategyConfig& config,
                      const RoundObserver& observer = {});

/// Shared goal selection for SBS and PtP.
Cell choose_goal(const geostat::ReconstructedMap& recon, const AgentState& agent,
                 const planner::VoronoiOwners& owners, const planner::ScoreWeights& weights,
                 const ObstacleMask& mask);

/// Re-plans goal and score-biased route; updates agent.goal and
/// agent.planned_route and returns the next cell.
Cell sbs_policy(AgentState& agent, const geostat::ReconstructedMap& recon, const std::vector<AgentState>& all_agents,
                const planner::ScoreWeights& weights, const ObstacleMask& mask);
Cell sbs_policy(AgentState& agent, const geostat::ReconstructedMap& recon, const planner::VoronoiOwners& owners,
                const planner::ScoreWeights& weights, const ObstacleMask& mask);

/// Keeps the goal until it is reached, then picks a new one with the SBS
/// scoring; routes by pure distance.
Cell ptp_policy(AgentState& agent, const geostat::ReconstructedMap& recon, const std::vector<AgentState>& all_agents,
                const planner::ScoreWeights& weights, const ObstacleMask& mask);
Cell ptp_policy(AgentState& agent, const geostat::ReconstructedMap& recon, const planner::VoronoiOwners& owners,
                const planner::ScoreWeights& weights, const ObstacleMask& mask);

/// Cells visited by the outward Archimedean spiral, index 0 = centre,
/// index `budget` = final position on the inscribed radius.
std::vector<Cell> spiral_path(const GridSpec& spec, int budget);
Cell spiral_center(const GridSpec& spec) noexcept;
double spiral_inscribed_radius(const GridSpec& spec) noexcept;

/// Random free goal, walked by shortest path; a new goal once reached.
Cell wandering_policy(AgentState& agent, const ObstacleMask& mask, std::mt19937_64& rng);

}  // namespace sbs::strategies
