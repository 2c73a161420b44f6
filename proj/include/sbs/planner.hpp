#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sbs/core.hpp"
#include "sbs/geostat.hpp"

namespace sbs::planner {

/// The five score weights plus the routing step cost.
struct ScoreWeights {
    double expected_value = 1.0;
    double uncertainty = 10.0;
    double prefer_center = 0.1;
    double prefer_closeness = 0.1;
    double prefer_current_goal = 10.0;
    double step_cost = 0.01;

    /// Defaults with prefer_current_goal = 10 for up to 2 agents, 1 otherwise.
    static ScoreWeights defaults_for(int num_agents);

    /// Throws ValidationError on negative weights, non-positive step cost or
    /// all five score weights zero.
    void validate() const;

    bool operator==(const ScoreWeights&) const = default;
};

/// Config keys: weight_expected_value, weight_uncertainty, weight_prefer_center,
/// weight_prefer_closeness, weight_prefer_current_goal, weight_step_cost.
/// Unspecified keys keep the values already in `base`.
ScoreWeights parse_weights(const std::string& text, ScoreWeights base = {});
ScoreWeights load_weights(const std::filesystem::path& path, ScoreWeights base = {});
std::string format_weights(const ScoreWeights& w);
/// Sets one weight by config key; returns false for an unknown key.
bool set_weight(ScoreWeights& w, const std::string& key, double value);

/// Min-max over free cells; constant input maps to zeros. Blocked cells are 0.
GridMap normalize01(const GridMap& map, const ObstacleMask& mask);

using VoronoiOwners = std::vector<AgentId>;  // per cell; kNoOwner on blocked cells
inline constexpr AgentId kNoOwner = -1;

/// Nearest agent position (Euclidean) for every free cell, ties to the lower id.
VoronoiOwners voronoi_partition(const std::vector<AgentState>& agents, const GridSpec& spec,
                                const ObstacleMask& mask);

/// False when co-located agents leave `agent` without any cell (ties go to
/// the lower id).
bool owns_any(const VoronoiOwners& owners, AgentId agent) noexcept;

struct ScoreMap {
    GridMap score;
    VoronoiOwners owner;
};

ScoreMap compute_score(const geostat::ReconstructedMap& recon, const AgentState& agent,
                       const std::vector<AgentState>& all_agents, const ScoreWeights& weights,
                       const GridSpec& spec, const ObstacleMask& mask);

/// Score computation with a precomputed partition (shared across agents in a round).
ScoreMap compute_score(const geostat::ReconstructedMap& recon, const AgentState& agent, VoronoiOwners owners,
                       const ScoreWeights& weights, const GridSpec& spec, const ObstacleMask& mask);

/// Highest-scoring free cell owned by the agent, lowest index on ties, never
/// the agent's own cell unless it is the only one it owns.
Cell select_goal(const ScoreMap& score, const AgentState& agent, const ObstacleMask& mask);

struct NoPathError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Cost of stepping into `to` along a move of length `step_length`.
using StepCost = std::function<double(Cell to, double step_length)>;

struct Route {
    std::vector<Cell> cells;  // includes start and goal
    double cost = 0.0;
};

/// A* over neighbors8 with heuristic chebyshev * min_step_cost, which must not
/// exceed the cheapest possible single move. Throws NoPathError.
Route astar(Cell start, Cell goal, const ObstacleMask& mask, const StepCost& cost, double min_step_cost);

inline constexpr double kScoreFloor = 0.1;

/// Score-biased route: step into c costs step_cost * length + 1 / (normalized score(c) + 0.1).
Route route_astar(Cell start, Cell goal, const ScoreMap& score, const ScoreWeights& weights,
                  const ObstacleMask& mask);

/// Pure shortest path (cost = step length).
Route route_shortest(Cell start, Cell goal, const ObstacleMask& mask);

}  // namespace sbs::planner
