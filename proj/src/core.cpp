#include "sbs/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace sbs {

GridSpec::GridSpec(int rows_, int cols_, double cell_size) : rows(rows_), cols(cols_), cell_size_m(cell_size) {
    if (rows < 2 || cols < 2) {
        throw ValidationError("grid must have at least 2 rows and 2 cols, got " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    }
    if (!(cell_size_m > 0.0) || !std::isfinite(cell_size_m)) {
        throw ValidationError("cell_size_m must be positive");
    }
}

double GridSpec::diagonal_m() const noexcept {
    return std::hypot(rows * cell_size_m, cols * cell_size_m);
}

bool in_bounds(const GridSpec& spec, Cell cell) noexcept {
    return cell.row >= 0 && cell.row < spec.rows && cell.col >= 0 && cell.col < spec.cols;
}

std::size_t cell_index(const GridSpec& spec, Cell cell) {
    if (!in_bounds(spec, cell)) {
        throw BoundsError("cell (" + std::to_string(cell.row) + "," + std::to_string(cell.col) +
                          ") outside " + std::to_string(spec.rows) + "x" + std::to_string(spec.cols) + " grid");
    }
    return static_cast<std::size_t>(cell.row) * static_cast<std::size_t>(spec.cols) +
           static_cast<std::size_t>(cell.col);
}

Cell cell_at(const GridSpec& spec, std::size_t index) {
    if (index >= spec.size()) throw BoundsError("cell index " + std::to_string(index) + " out of range");
    return Cell{static_cast<int>(index / static_cast<std::size_t>(spec.cols)),
                static_cast<int>(index % static_cast<std::size_t>(spec.cols))};
}

double cell_distance(const GridSpec& spec, Cell a, Cell b) noexcept {
    return std::hypot(static_cast<double>(a.row - b.row), static_cast<double>(a.col - b.col)) * spec.cell_size_m;
}

std::string_view to_string(MapKind kind) noexcept {
    switch (kind) {
        case MapKind::truth: return "truth";
        case MapKind::estimate: return "estimate";
        case MapKind::uncertainty: return "uncertainty";
        case MapKind::score: return "score";
    }
    return "truth";
}

MapKind map_kind_from_string(std::string_view name) {
    if (name == "truth") return MapKind::truth;
    if (name == "estimate") return MapKind::estimate;
    if (name == "uncertainty") return MapKind::uncertainty;
    if (name == "score") return MapKind::score;
    throw ValidationError("unknown map kind '" + std::string(name) + "'");
}

GridMap::GridMap(GridSpec spec, MapKind kind, double fill) : spec_(spec), kind_(kind), values_(spec.size(), fill) {}

GridMap::GridMap(GridSpec spec, MapKind kind, std::vector<double> values)
    : spec_(spec), kind_(kind), values_(std::move(values)) {
    if (values_.size() != spec_.size()) {
        throw ValidationError("map has " + std::to_string(values_.size()) + " values, expected " +
                              std::to_string(spec_.size()));
    }
}

ObstacleMask::ObstacleMask(GridSpec spec) : spec_(spec), blocked_(spec.size(), false) {}

ObstacleMask::ObstacleMask(GridSpec spec, std::vector<bool> blocked) : spec_(spec), blocked_(std::move(blocked)) {
    if (blocked_.size() != spec_.size()) {
        throw ValidationError("mask has " + std::to_string(blocked_.size()) + " cells, expected " +
                              std::to_string(spec_.size()));
    }
    if (free_count() == 0) throw ValidationError("mask has no free cell");
}

std::size_t ObstacleMask::free_count() const noexcept {
    return static_cast<std::size_t>(std::count(blocked_.begin(), blocked_.end(), false));
}

bool ObstacleMask::any_blocked() const noexcept {
    return std::find(blocked_.begin(), blocked_.end(), true) != blocked_.end();
}

std::vector<Neighbor> neighbors8(const GridSpec& spec, const ObstacleMask& mask, Cell cell) {
    static constexpr double kDiagonal = 1.4142135623730951;
    std::vector<Neighbor> out;
    out.reserve(8);
    auto open = [&](int r, int c) { return in_bounds(spec, {r, c}) && mask.free(Cell{r, c}); };
    for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const Cell next{cell.row + dr, cell.col + dc};
            if (!open(next.row, next.col)) continue;
            if (dr != 0 && dc != 0) {
                if (!open(cell.row + dr, cell.col) && !open(cell.row, cell.col + dc)) continue;
                out.push_back({next, kDiagonal});
            } else {
                out.push_back({next, 1.0});
            }
        }
    }
    return out;
}

void MeasurementLog::append(Measurement m) {
    if (!std::isfinite(m.value)) throw ValidationError("measurement value must be finite");
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->agent_id == m.agent_id) {
            if (m.sequence <= it->sequence) {
                throw ValidationError("measurement sequence must increase per agent");
            }
            break;
        }
    }
    entries_.push_back(m);
}

bool is_8_connected(const std::vector<Cell>& path) {
    for (std::size_t i = 1; i < path.size(); ++i) {
        const int dr = std::abs(path[i].row - path[i - 1].row);
        const int dc = std::abs(path[i].col - path[i - 1].col);
        if (std::max(dr, dc) != 1) return false;
    }
    return true;
}

}  // namespace sbs
