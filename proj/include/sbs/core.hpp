#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sbs {

// Error types shared across modules. Each carries a plain message; callers
// distinguish failure classes by type.
struct BoundsError : std::out_of_range {
    using std::out_of_range::out_of_range;
};
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using AgentId = int;

struct GridSpec {
    int rows = 0;
    int cols = 0;
    double cell_size_m = 1.0;

    GridSpec() = default;
    GridSpec(int rows_, int cols_, double cell_size = 1.0);

    std::size_t size() const noexcept { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
    double diagonal_m() const noexcept;

    bool operator==(const GridSpec&) const = default;
};

struct Cell {
    int row = 0;
    int col = 0;

    bool operator==(const Cell&) const = default;
    auto operator<=>(const Cell&) const = default;
};

bool in_bounds(const GridSpec& spec, Cell cell) noexcept;

/// Row-major linear index; throws BoundsError outside the grid.
std::size_t cell_index(const GridSpec& spec, Cell cell);
Cell cell_at(const GridSpec& spec, std::size_t index);

/// Euclidean distance between cell centres in metres (cell units when
/// cell_size_m == 1).
double cell_distance(const GridSpec& spec, Cell a, Cell b) noexcept;

enum class MapKind { truth, estimate, uncertainty, score };

std::string_view to_string(MapKind kind) noexcept;
MapKind map_kind_from_string(std::string_view name);

class GridMap {
public:
    GridMap() = default;
    GridMap(GridSpec spec, MapKind kind, double fill = 0.0);
    GridMap(GridSpec spec, MapKind kind, std::vector<double> values);

    const GridSpec& spec() const noexcept { return spec_; }
    MapKind kind() const noexcept { return kind_; }
    void set_kind(MapKind kind) noexcept { kind_ = kind; }

    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double at(Cell cell) const { return values_[cell_index(spec_, cell)]; }
    double& at(Cell cell) { return values_[cell_index(spec_, cell)]; }

    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

private:
    GridSpec spec_{};
    MapKind kind_ = MapKind::truth;
    std::vector<double> values_;
};

class ObstacleMask {
public:
    ObstacleMask() = default;
    /// All-free mask.
    explicit ObstacleMask(GridSpec spec);
    /// Throws ValidationError if the length is wrong or no cell is free.
    ObstacleMask(GridSpec spec, std::vector<bool> blocked);

    const GridSpec& spec() const noexcept { return spec_; }
    bool blocked(Cell cell) const { return blocked_[cell_index(spec_, cell)]; }
    bool blocked(std::size_t i) const noexcept { return blocked_[i]; }
    bool free(Cell cell) const { return !blocked(cell); }
    bool free(std::size_t i) const noexcept { return !blocked_[i]; }
    const std::vector<bool>& cells() const noexcept { return blocked_; }

    std::size_t free_count() const noexcept;
    bool any_blocked() const noexcept;

private:
    GridSpec spec_{};
    std::vector<bool> blocked_;
};

struct Neighbor {
    Cell cell;
    double step_length;
};

/// Free cells among the 8 surrounding `cell`. Diagonal steps are dropped when
/// both orthogonal cells they pass between are blocked.
std::vector<Neighbor> neighbors8(const GridSpec& spec, const ObstacleMask& mask, Cell cell);

struct Measurement {
    AgentId agent_id = 0;
    Cell cell;
    double value = 0.0;
    std::int64_t sequence = 0;
    std::optional<std::int64_t> timestamp_ms;
};

class MeasurementLog {
public:
    /// Enforces finite values and strictly increasing sequence per agent.
    void append(Measurement m);
    const std::vector<Measurement>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

private:
    std::vector<Measurement> entries_;
};

struct AgentState {
    AgentId id = 0;
    Cell position;
    std::optional<Cell> goal;
    int steps_taken = 0;
    std::optional<std::vector<Cell>> planned_route;
};

/// True when consecutive cells are distinct 8-neighbours.
bool is_8_connected(const std::vector<Cell>& path);

}  // namespace sbs
