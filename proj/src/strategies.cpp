#include "sbs/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

namespace sbs::strategies {

std::string_view to_string(StrategyKind kind) noexcept {
    switch (kind) {
        case StrategyKind::sbs: return "sbs";
        case StrategyKind::ptp: return "ptp";
        case StrategyKind::spiral: return "spiral";
        case StrategyKind::wandering: return "wandering";
    }
    return "sbs";
}

StrategyKind strategy_from_string(std::string_view name) {
    for (auto k : {StrategyKind::sbs, StrategyKind::ptp, StrategyKind::spiral, StrategyKind::wandering}) {
        if (to_string(k) == name) return k;
    }
    throw ValidationError("unknown strategy '" + std::string(name) + "'");
}

std::string_view to_string(Placement placement) noexcept {
    switch (placement) {
        case Placement::center: return "center";
        case Placement::edges: return "edges";
        case Placement::random: return "random";
        case Placement::explicit_cells: return "explicit";
    }
    return "center";
}

Placement placement_from_string(std::string_view name) {
    for (auto p : {Placement::center, Placement::edges, Placement::random, Placement::explicit_cells}) {
        if (to_string(p) == name) return p;
    }
    throw ValidationError("unknown placement '" + std::string(name) + "'");
}

void StrategyConfig::validate() const {
    if (num_agents < 1) throw ValidationError("num_agents must be positive");
    if (total_step_budget < 1) throw ValidationError("total_step_budget must be positive");
    if (steps_per_agent() < 1) throw ValidationError("budget leaves no steps per agent");
    if (sensor_noise_sigma < 0.0) throw ValidationError("sensor noise sigma must be >= 0");
    if (kind == StrategyKind::spiral && num_agents != 1) {
        throw ValidationError("spiral strategy supports a single agent only");
    }
    if (kind == StrategyKind::spiral && placement != Placement::center) {
        throw ValidationError("spiral strategy starts at the centre");
    }
    if (placement == Placement::explicit_cells && static_cast<int>(explicit_cells.size()) != num_agents) {
        throw ValidationError("explicit placement needs one cell per agent");
    }
    if (kind == StrategyKind::sbs || kind == StrategyKind::ptp) weights.validate();
}

std::size_t StepTrace::total_measurements() const noexcept {
    std::size_t n = 0;
    for (const auto& r : rounds) n += r.measurements.size();
    return n;
}

std::size_t StepTrace::movement_samples() const noexcept {
    return rounds.empty() ? 0 : total_measurements() - rounds.front().measurements.size();
}

Cell spiral_center(const GridSpec& spec) noexcept { return Cell{(spec.rows - 1) / 2, (spec.cols - 1) / 2}; }

std::vector<Cell> initial_positions(Placement placement, int count, const ObstacleMask& mask, std::mt19937_64& rng,
                                    const std::vector<Cell>& explicit_cells) {
    const GridSpec& spec = mask.spec();
    if (count < 1) throw ValidationError("need at least one agent");
    if (static_cast<std::size_t>(count) > mask.free_count()) throw ValidationError("more agents than free cells");
    std::vector<Cell> out;
    switch (placement) {
        case Placement::center: {
            // Centre cell first, then its rings outward.
            const Cell c = spiral_center(spec);
            std::vector<std::size_t> order;
            for (std::size_t i = 0; i < spec.size(); ++i) {
                if (mask.free(i)) order.push_back(i);
            }
            auto key = [&](std::size_t i) {
                const Cell x = cell_at(spec, i);
                const int ring = std::max(std::abs(x.row - c.row), std::abs(x.col - c.col));
                const int d2 = (x.row - c.row) * (x.row - c.row) + (x.col - c.col) * (x.col - c.col);
                return std::tuple{ring, d2, i};
            };
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
            for (int k = 0; k < count; ++k) out.push_back(cell_at(spec, order[k]));
            break;
        }
        case Placement::edges: {
            std::vector<Cell> perimeter;
            for (int c = 0; c < spec.cols; ++c) perimeter.push_back({0, c});
            for (int r = 1; r < spec.rows; ++r) perimeter.push_back({r, spec.cols - 1});
            for (int c = spec.cols - 2; c >= 0; --c) perimeter.push_back({spec.rows - 1, c});
            for (int r = spec.rows - 2; r >= 1; --r) perimeter.push_back({r, 0});
            std::vector<bool> taken(perimeter.size(), false);
            for (int k = 0; k < count; ++k) {
                std::size_t idx = (static_cast<std::size_t>(k) * perimeter.size()) / static_cast<std::size_t>(count);
                std::size_t tries = 0;
                while ((taken[idx] || mask.blocked(perimeter[idx])) && tries < perimeter.size()) {
                    idx = (idx + 1) % perimeter.size();
                    ++tries;
                }
                if (tries == perimeter.size()) throw ValidationError("not enough free boundary cells for edge placement");
                taken[idx] = true;
                out.push_back(perimeter[idx]);
            }
            break;
        }
        case Placement::random: {
            std::vector<std::size_t> free_cells;
            for (std::size_t i = 0; i < spec.size(); ++i) {
                if (mask.free(i)) free_cells.push_back(i);
            }
            for (int k = 0; k < count; ++k) {
                std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), free_cells.size() - 1);
                std::swap(free_cells[static_cast<std::size_t>(k)], free_cells[pick(rng)]);
                out.push_back(cell_at(spec, free_cells[static_cast<std::size_t>(k)]));
            }
            break;
        }
        case Placement::explicit_cells: {
            if (static_cast<int>(explicit_cells.size()) != count) {
                throw ValidationError("explicit placement needs one cell per agent");
            }
            for (const Cell& c : explicit_cells) {
                if (!in_bounds(spec, c) || mask.blocked(c)) throw ValidationError("explicit start cell is not free");
            }
            out = explicit_cells;
            break;
        }
    }
    return out;
}

Cell choose_goal(const geostat::ReconstructedMap& recon, const AgentState& agent,
                 const planner::VoronoiOwners& owners, const planner::ScoreWeights& weights,
                 const ObstacleMask& mask) {
    const auto score = planner::compute_score(recon, agent, owners, weights, mask.spec(), mask);
    return planner::select_goal(score, agent, mask);
}

namespace {

Cell next_on_route(const AgentState& agent) {
    if (!agent.planned_route || agent.planned_route->size() < 2) return agent.position;
    return (*agent.planned_route)[1];
}

// An agent sharing a cell with a lower id owns nothing this round; it waits
// while the other one moves off.
Cell hold(AgentState& agent) {
    agent.goal = agent.position;
    agent.planned_route = std::vector<Cell>{agent.position};
    return agent.position;
}

// Drops the cell just left from a stored route.
void advance_route(AgentState& agent, Cell next) {
    if (!agent.planned_route || agent.planned_route->size() < 2) return;
    auto& route = *agent.planned_route;
    if (route[1] == next) route.erase(route.begin());
}

}  // namespace

Cell sbs_policy(AgentState& agent, const geostat::ReconstructedMap& recon, const planner::VoronoiOwners& owners,
                const planner::ScoreWeights& weights, const ObstacleMask& mask) {
    if (!planner::owns_any(owners, agent.id)) return hold(agent);
    const auto score = planner::compute_score(recon, agent, owners, weights, mask.spec(), mask);
    const Cell goal = planner::select_goal(score, agent, mask);
    agent.goal = goal;
    agent.planned_route = planner::route_astar(agent.position, goal, score, weights, mask).cells;
    return next_on_route(agent);
}

Cell sbs_policy(AgentState& agent, const geostat::ReconstructedMap& recon, const std::vector<AgentState>& all_agents,
                const planner::ScoreWeights& weights, const ObstacleMask& mask) {
    return sbs_policy(agent, recon, planner::voronoi_partition(all_agents, mask.spec(), mask), weights, mask);
}

Cell ptp_policy(AgentState& agent, const geostat::ReconstructedMap& recon, const planner::VoronoiOwners& owners,
                const planner::ScoreWeights& weights, const ObstacleMask& mask) {
    const bool need_goal = !agent.goal || *agent.goal == agent.position || !agent.planned_route ||
                           agent.planned_route->empty() || agent.planned_route->front() != agent.position;
    if (need_goal) {
        if (!planner::owns_any(owners, agent.id)) return hold(agent);
        const Cell goal = choose_goal(recon, agent, owners, weights, mask);
        agent.goal = goal;
        agent.planned_route = planner::route_shortest(agent.position, goal, mask).cells;
    }
    return next_on_route(agent);
}

Cell ptp_policy(AgentState& agent, const geostat::ReconstructedMap& recon, const std::vector<AgentState>& all_agents,
                const planner::ScoreWeights& weights, const ObstacleMask& mask) {
    return ptp_policy(agent, recon, planner::voronoi_partition(all_agents, mask.spec(), mask), weights, mask);
}

double spiral_inscribed_radius(const GridSpec& spec) noexcept {
    return 0.5 * std::min(spec.rows, spec.cols) - 1.0;
}

namespace {

// Arc length of r = b*theta from 0 to theta.
double spiral_arc(double b, double theta) {
    return 0.5 * b * (theta * std::sqrt(1.0 + theta * theta) + std::asinh(theta));
}

}  // namespace

std::vector<Cell> spiral_path(const GridSpec& spec, int budget) {
    if (budget < 1) throw ValidationError("spiral budget must be positive");
    const double radius = spiral_inscribed_radius(spec);
    if (!(radius > 0.0)) throw ValidationError("grid too small for a spiral");
    if (static_cast<double>(budget) <= radius) {
        throw ValidationError("spiral budget must exceed the inscribed radius");
    }
    // Arc length to the rim decreases monotonically in the pitch b; bisect on
    // log b until the rim is reached after exactly `budget` unit steps.
    auto arc_to_rim = [&](double b) { return spiral_arc(b, radius / b); };
    double lo = 1e-6;
    double hi = radius;
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (arc_to_rim(mid) > budget) lo = mid; else hi = mid;
    }
    const double b = std::sqrt(lo * hi);
    const double theta_end = radius / b;

    const Cell centre = spiral_center(spec);
    std::vector<Cell> out;
    out.reserve(static_cast<std::size_t>(budget) + 1);
    double theta = 0.0;
    for (int step = 0; step <= budget; ++step) {
        const double target = static_cast<double>(step);
        // Newton on arc(theta) = target; ds/dtheta = b*sqrt(1+theta^2).
        for (int it = 0; it < 60; ++it) {
            const double f = spiral_arc(b, theta) - target;
            const double d = b * std::sqrt(1.0 + theta * theta);
            const double next = std::max(0.0, theta - f / d);
            if (std::abs(next - theta) < 1e-13 * std::max(1.0, theta)) {
                theta = next;
                break;
            }
            theta = next;
        }
        if (step == budget) theta = theta_end;
        const double r = std::min(b * theta, radius);
        const int row = static_cast<int>(std::floor(centre.row + r * std::sin(theta) + 0.5));
        const int col = static_cast<int>(std::floor(centre.col + r * std::cos(theta) + 0.5));
        out.push_back(Cell{std::clamp(row, 0, spec.rows - 1), std::clamp(col, 0, spec.cols - 1)});
    }
    return out;
}

Cell wandering_policy(AgentState& agent, const ObstacleMask& mask, std::mt19937_64& rng) {
    const bool need_goal = !agent.goal || *agent.goal == agent.position || !agent.planned_route ||
                           agent.planned_route->empty() || agent.planned_route->front() != agent.position;
    if (need_goal) {
        const GridSpec& spec = mask.spec();
        if (mask.free_count() < 2) return agent.position;
        std::uniform_int_distribution<std::size_t> pick(0, spec.size() - 1);
        std::size_t idx = pick(rng);
        while (mask.blocked(idx) || cell_at(spec, idx) == agent.position) idx = pick(rng);
        agent.goal = cell_at(spec, idx);
        agent.planned_route = planner::route_shortest(agent.position, *agent.goal, mask).cells;
    }
    return next_on_route(agent);
}

namespace {

bool legal_move(const ObstacleMask& mask, Cell from, Cell to) {
    if (!in_bounds(mask.spec(), to) || mask.blocked(to)) return false;
    if (from == to) return true;
    for (const auto& nb : neighbors8(mask.spec(), mask, from)) {
        if (nb.cell == to) return true;
    }
    return false;
}

}  // namespace

StepTrace run_episode(const GridMap& truth, const ObstacleMask& mask, const StrategyConfig& config,
                      const RoundObserver& observer) {
    config.validate();
    const GridSpec& spec = truth.spec();
    if (!(mask.spec() == spec)) throw ValidationError("truth and mask grids differ");
    if (config.kind == StrategyKind::spiral && mask.any_blocked()) {
        throw ValidationError("spiral strategy does not support obstacles");
    }

    std::mt19937_64 rng(config.rng_seed);
    std::normal_distribution<double> noise(0.0, config.sensor_noise_sigma > 0 ? config.sensor_noise_sigma : 1.0);

    const auto starts = initial_positions(config.placement, config.num_agents, mask, rng, config.explicit_cells);
    std::vector<AgentState> agents;
    for (int i = 0; i < config.num_agents; ++i) agents.push_back(AgentState{i, starts[static_cast<std::size_t>(i)]});

    const int rounds = config.steps_per_agent();
    std::vector<Cell> spiral;
    if (config.kind == StrategyKind::spiral) spiral = spiral_path(spec, config.total_step_budget);

    MeasurementLog log;
    geostat::Reconstructor reconstructor(spec, mask);
    StepTrace trace;
    std::int64_t sequence = 0;

    auto sample_all = [&](int round) {
        RoundRecord rec;
        rec.round = round;
        for (const auto& a : agents) {
            double v = truth.at(a.position);
            if (config.sensor_noise_sigma > 0.0) v += noise(rng);
            Measurement m{a.id, a.position, v, sequence++, std::nullopt};
            log.append(m);
            rec.measurements.push_back(m);
            rec.agents.push_back(AgentSnapshot{a.id, a.position, a.goal});
        }
        trace.rounds.push_back(std::move(rec));
    };

    const bool plans_on_map = config.kind == StrategyKind::sbs || config.kind == StrategyKind::ptp;
    std::optional<geostat::ReconstructedMap> recon;
    auto refresh = [&](int round) {
        if (!plans_on_map && !observer) return;
        recon = reconstructor.reconstruct(log);
        if (observer) observer(round, *recon, log);
    };

    sample_all(0);
    refresh(0);

    for (int round = 1; round <= rounds; ++round) {
        planner::VoronoiOwners owners;
        if (plans_on_map) owners = planner::voronoi_partition(agents, spec, mask);
        for (auto& agent : agents) {
            Cell next = agent.position;
            switch (config.kind) {
                case StrategyKind::sbs: next = sbs_policy(agent, *recon, owners, config.weights, mask); break;
                case StrategyKind::ptp: next = ptp_policy(agent, *recon, owners, config.weights, mask); break;
                case StrategyKind::spiral: next = spiral[static_cast<std::size_t>(round)]; break;
                case StrategyKind::wandering: next = wandering_policy(agent, mask, rng); break;
            }
            if (!legal_move(mask, agent.position, next)) {
                throw EpisodeError("agent " + std::to_string(agent.id) + " produced an illegal move at round " +
                                   std::to_string(round));
            }
            advance_route(agent, next);
            agent.position = next;
            ++agent.steps_taken;
        }
        sample_all(round);
        refresh(round);
    }
    return trace;
}

void write_trace_jsonl(std::ostream& out, const StepTrace& trace) {
    using nlohmann::json;
    auto pos = [](Cell c) { return json::array({c.row, c.col}); };
    for (const auto& r : trace.rounds) {
        json rec;
        rec["round"] = r.round;
        json agents = json::array();
        for (const auto& a : r.agents) {
            agents.push_back({{"id", a.id}, {"pos", pos(a.position)}, {"goal", a.goal ? pos(*a.goal) : json(nullptr)}});
        }
        json ms = json::array();
        for (const auto& m : r.measurements) {
            ms.push_back({{"agent", m.agent_id}, {"pos", pos(m.cell)}, {"value", m.value}});
        }
        rec["agents"] = std::move(agents);
        rec["measurements"] = std::move(ms);
        out << rec.dump() << '\n';
    }
}

}  // namespace sbs::strategies
