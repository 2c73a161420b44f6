#include "sbs/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

namespace sbs::planner {

ScoreWeights ScoreWeights::defaults_for(int num_agents) {
    ScoreWeights w;
    w.prefer_current_goal = num_agents <= 2 ? 10.0 : 1.0;
    return w;
}

void ScoreWeights::validate() const {
    for (double v : {expected_value, uncertainty, prefer_center, prefer_closeness, prefer_current_goal}) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("score weights must be finite and >= 0");
    }
    if (!(step_cost > 0.0) || !std::isfinite(step_cost)) throw ValidationError("weight_step_cost must be > 0");
    if (expected_value + uncertainty + prefer_center + prefer_closeness + prefer_current_goal <= 0.0) {
        throw ValidationError("at least one score weight must be positive");
    }
}

bool set_weight(ScoreWeights& w, const std::string& key, double value) {
    if (key == "weight_expected_value") w.expected_value = value;
    else if (key == "weight_uncertainty") w.uncertainty = value;
    else if (key == "weight_prefer_center") w.prefer_center = value;
    else if (key == "weight_prefer_closeness") w.prefer_closeness = value;
    else if (key == "weight_prefer_current_goal") w.prefer_current_goal = value;
    else if (key == "weight_step_cost") w.step_cost = value;
    else return false;
    return true;
}

ScoreWeights parse_weights(const std::string& text, ScoreWeights base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        if (eq == std::string::npos) {
            if (!trim(line).empty()) throw ValidationError("weights line " + std::to_string(lineno) + ": expected key=value");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        double value = 0.0;
        try {
            std::size_t used = 0;
            value = std::stod(raw, &used);
            if (used != raw.size()) throw std::invalid_argument(raw);
        } catch (const std::exception&) {
            throw ValidationError("weights line " + std::to_string(lineno) + ": bad number '" + raw + "'");
        }
        if (!set_weight(base, key, value)) {
            throw ValidationError("weights line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    base.validate();
    return base;
}

ScoreWeights load_weights(const std::filesystem::path& path, ScoreWeights base) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open weights file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_weights(ss.str(), base);
}

std::string format_weights(const ScoreWeights& w) {
    std::ostringstream out;
    out.precision(17);
    out << "weight_expected_value=" << w.expected_value << "\n"
        << "weight_uncertainty=" << w.uncertainty << "\n"
        << "weight_prefer_center=" << w.prefer_center << "\n"
        << "weight_prefer_closeness=" << w.prefer_closeness << "\n"
        << "weight_prefer_current_goal=" << w.prefer_current_goal << "\n"
        << "weight_step_cost=" << w.step_cost << "\n";
    return out.str();
}

GridMap normalize01(const GridMap& map, const ObstacleMask& mask) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (mask.blocked(i)) continue;
        lo = std::min(lo, map[i]);
        hi = std::max(hi, map[i]);
    }
    GridMap out(map.spec(), map.kind(), 0.0);
    if (!(hi > lo)) return out;
    const double span = hi - lo;
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (mask.free(i)) out[i] = (map[i] - lo) / span;
    }
    return out;
}

VoronoiOwners voronoi_partition(const std::vector<AgentState>& agents, const GridSpec& spec,
                                const ObstacleMask& mask) {
    if (agents.empty()) throw ValidationError("voronoi partition needs at least one agent");
    VoronoiOwners owner(spec.size(), kNoOwner);
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (mask.blocked(i)) continue;
        const Cell c = cell_at(spec, i);
        double best = std::numeric_limits<double>::infinity();
        AgentId best_id = kNoOwner;
        for (const auto& a : agents) {
            // Squared integer distance keeps the tie test exact.
            const long dr = c.row - a.position.row;
            const long dc = c.col - a.position.col;
            const double d = static_cast<double>(dr * dr + dc * dc);
            if (d < best || (d == best && a.id < best_id)) {
                best = d;
                best_id = a.id;
            }
        }
        owner[i] = best_id;
    }
    return owner;
}

bool owns_any(const VoronoiOwners& owners, AgentId agent) noexcept {
    return std::find(owners.begin(), owners.end(), agent) != owners.end();
}

namespace {

GridMap distance_map(const GridSpec& spec, double row, double col) {
    GridMap out(spec, MapKind::score, 0.0);
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            out[static_cast<std::size_t>(r) * spec.cols + c] = std::hypot(r - row, c - col);
        }
    }
    return out;
}

}  // namespace

ScoreMap compute_score(const geostat::ReconstructedMap& recon, const AgentState& agent,
                       const std::vector<AgentState>& all_agents, const ScoreWeights& weights,
                       const GridSpec& spec, const ObstacleMask& mask) {
    return compute_score(recon, agent, voronoi_partition(all_agents, spec, mask), weights, spec, mask);
}

ScoreMap compute_score(const geostat::ReconstructedMap& recon, const AgentState& agent, VoronoiOwners owners,
                       const ScoreWeights& weights, const GridSpec& spec, const ObstacleMask& mask) {
    GridMap score(spec, MapKind::score, 0.0);
    auto add_term = [&](double weight, const GridMap& raw, bool invert) {
        if (weight == 0.0) return;
        const GridMap norm = normalize01(raw, mask);
        for (std::size_t i = 0; i < score.size(); ++i) {
            if (mask.blocked(i)) continue;
            score[i] += weight * (invert ? 1.0 - norm[i] : norm[i]);
        }
    };
    add_term(weights.expected_value, recon.estimate, false);
    add_term(weights.uncertainty, recon.uncertainty, false);
    add_term(weights.prefer_center, distance_map(spec, 0.5 * (spec.rows - 1), 0.5 * (spec.cols - 1)), true);
    add_term(weights.prefer_closeness, distance_map(spec, agent.position.row, agent.position.col), true);
    if (agent.goal) add_term(weights.prefer_current_goal, distance_map(spec, agent.goal->row, agent.goal->col), true);
    return ScoreMap{std::move(score), std::move(owners)};
}

Cell select_goal(const ScoreMap& score, const AgentState& agent, const ObstacleMask& mask) {
    const GridSpec& spec = score.score.spec();
    const std::size_t own = cell_index(spec, agent.position);
    std::size_t best = spec.size();
    bool owns_own_cell = false;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (mask.blocked(i) || score.owner[i] != agent.id) continue;
        if (i == own) {
            owns_own_cell = true;
            continue;
        }
        if (best == spec.size() || score.score[i] > score.score[best]) best = i;
    }
    if (best != spec.size()) return cell_at(spec, best);
    if (owns_own_cell) return agent.position;
    throw ValidationError("agent " + std::to_string(agent.id) + " owns no cells");
}

Route astar(Cell start, Cell goal, const ObstacleMask& mask, const StepCost& cost, double min_step_cost) {
    const GridSpec& spec = mask.spec();
    if (mask.blocked(start) || mask.blocked(goal)) throw NoPathError("route endpoint is blocked");
    if (start == goal) return Route{{start}, 0.0};

    const std::size_t n = spec.size();
    const std::size_t start_i = cell_index(spec, start);
    const std::size_t goal_i = cell_index(spec, goal);
    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::vector<double> g(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> parent(n, kNone);

    auto heuristic = [&](Cell c) {
        return static_cast<double>(std::max(std::abs(c.row - goal.row), std::abs(c.col - goal.col))) *
               min_step_cost;
    };
    struct Entry {
        double f;
        double g;
        std::size_t index;
        bool operator>(const Entry& o) const {
            if (f != o.f) return f > o.f;
            return index > o.index;
        }
    };
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    g[start_i] = 0.0;
    open.push({heuristic(start), 0.0, start_i});

    while (!open.empty()) {
        const Entry top = open.top();
        open.pop();
        if (top.g > g[top.index]) continue;
        if (top.index == goal_i) break;
        const Cell cur = cell_at(spec, top.index);
        for (const auto& nb : neighbors8(spec, mask, cur)) {
            const std::size_t j = cell_index(spec, nb.cell);
            const double cand = top.g + cost(nb.cell, nb.step_length);
            if (cand < g[j]) {
                g[j] = cand;
                parent[j] = top.index;
                open.push({cand + heuristic(nb.cell), cand, j});
            }
        }
    }
    if (!std::isfinite(g[goal_i])) {
        throw NoPathError("no path from (" + std::to_string(start.row) + "," + std::to_string(start.col) + ") to (" +
                          std::to_string(goal.row) + "," + std::to_string(goal.col) + ")");
    }
    Route route;
    route.cost = g[goal_i];
    for (std::size_t i = goal_i; i != kNone; i = parent[i]) route.cells.push_back(cell_at(spec, i));
    std::reverse(route.cells.begin(), route.cells.end());
    return route;
}

Route route_astar(Cell start, Cell goal, const ScoreMap& score, const ScoreWeights& weights,
                  const ObstacleMask& mask) {
    const GridMap norm = normalize01(score.score, mask);
    const GridSpec& spec = mask.spec();
    const double step = weights.step_cost;
    auto cost = [&](Cell to, double length) {
        return step * length + 1.0 / (norm[cell_index(spec, to)] + kScoreFloor);
    };
    return astar(start, goal, mask, cost, step + 1.0 / (1.0 + kScoreFloor));
}

Route route_shortest(Cell start, Cell goal, const ObstacleMask& mask) {
    return astar(start, goal, mask, [](Cell, double length) { return length; }, 1.0);
}

}  // namespace sbs::planner
