#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sbs/core.hpp"
#include "sbs/geostat.hpp"
#include "sbs/metrics.hpp"
#include "sbs/planner.hpp"
#include "sbs/server/geo.hpp"

namespace sbs::server {

using nlohmann::json;

enum class FieldStrategy { sbs, wandering };
enum class PlacementMode { center, edges, user_choice };

struct SessionConfig {
    GeoPoint origin{40.76, -74.17};
    double extent_ns_m = 150.0;
    double extent_ew_m = 150.0;
    double cell_size_m = 10.0;
    FieldStrategy strategy = FieldStrategy::sbs;
    planner::ScoreWeights weights = planner::ScoreWeights::defaults_for(4);
    PlacementMode placement_mode = PlacementMode::center;
    int reading_target = 80;
    int min_measurements_for_kriging = 3;
    int expected_agents = 4;  // spacing of edge start waypoints
    std::uint64_t seed = 0;

    /// Throws ValidationError when the extent is not a whole number of cells.
    GridSpec grid() const;
    void validate() const;
};

json to_json(const SessionConfig& c);
SessionConfig session_config_from_json(const json& j);

struct GeoFix {
    GeoPoint point;
    double accuracy_m = 0.0;
};

struct FieldReading {
    GeoFix fix;
    double vwc = 0.0;
    std::optional<double> ec;
    std::optional<double> temp_c;
    std::string token;
};

struct Directive {
    AgentId agent_id = 0;
    std::optional<Cell> goal;
    std::optional<GeoPoint> goal_center;
    std::optional<double> bearing_deg;
    bool within_goal_cell = false;
    int readings = 0;
    int reading_target = 0;
    bool complete = false;
    bool burn_in = true;
    std::optional<std::int64_t> seq;  // event produced by the request, if any

    bool operator==(const Directive&) const = default;
};

json to_json(const Directive& d);
Directive directive_from_json(const json& j);

struct Event {
    std::int64_t seq = 0;
    std::int64_t ts_ms = 0;
    std::string type;
    json payload;
};

json to_json(const Event& e);
Event event_from_json(const json& j);

struct SessionClosedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnknownAgentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CorruptLogError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Out-of-field fix; carries the agent's last valid directive.
struct OutOfFieldFixError : OutOfFieldError {
    OutOfFieldFixError(const std::string& what, Directive last) : OutOfFieldError(what), directive(std::move(last)) {}
    Directive directive;
};

struct AgentRecord {
    AgentId id = 0;
    PlacementMode placement = PlacementMode::center;
    std::optional<GeoFix> last_fix;
    std::optional<Cell> cell;  // from the last fix or reading
    std::optional<Cell> goal;
    int readings = 0;
};

/// Single-writer field session. Every mutating call appends events; replaying
/// those events through a fresh Session reproduces its state exactly.
/// Callers serialise access.
class Session {
public:
    using Clock = std::function<std::int64_t()>;
    using EventSink = std::function<void(const Event&)>;

    Session(std::string id, SessionConfig config, Clock clock = {}, EventSink sink = {});

    const std::string& id() const noexcept { return id_; }
    const SessionConfig& config() const noexcept { return config_; }
    const GridSpec& grid() const noexcept { return spec_; }
    const FieldFrame& frame() const noexcept { return frame_; }

    struct JoinResult {
        AgentId agent_id;
        Directive directive;
    };
    JoinResult join(std::optional<PlacementMode> placement = std::nullopt, std::optional<GeoFix> fix = std::nullopt);
    Directive report_fix(AgentId agent, const GeoFix& fix);
    Directive submit_reading(AgentId agent, const FieldReading& reading);

    /// Reference map for per-reading SSE/CAX timelines (analysis mode).
    void attach_truth(GridMap truth);

    json snapshot() const;

    bool complete() const noexcept { return complete_; }
    int readings() const noexcept { return reading_count_; }
    const geostat::ReconstructedMap& reconstruction() const noexcept { return recon_; }
    const std::vector<Event>& events() const noexcept { return events_; }
    const std::map<AgentId, AgentRecord>& agents() const noexcept { return agents_; }
    const MeasurementLog& measurements() const noexcept { return log_; }
    const metrics::MetricTimeline& timeline() const noexcept { return timeline_; }
    Directive directive_for(AgentId agent) const;

    /// Rebuilds a session from its event log. Throws CorruptLogError on a
    /// sequence gap, a missing SessionCreated header or a derived event that
    /// does not match the recomputed one.
    static Session replay(const std::vector<Event>& events, EventSink sink = {},
                          std::optional<GridMap> truth = std::nullopt);

private:
    std::int64_t emit(std::string type, json payload);
    void assign_goal(AgentRecord& agent, Cell goal);
    void reassign_after_reading(AgentId submitter);
    Cell start_waypoint(PlacementMode mode, int ordinal) const;
    Cell random_goal(Cell exclude);

    std::string id_;
    SessionConfig config_;
    GridSpec spec_;
    FieldFrame frame_;
    ObstacleMask mask_;
    Clock clock_;
    EventSink sink_;

    std::vector<Event> events_;
    std::int64_t now_ms_ = 0;
    std::map<AgentId, AgentRecord> agents_;
    int joins_by_mode_[3] = {0, 0, 0};
    MeasurementLog log_;
    geostat::Reconstructor reconstructor_;
    geostat::ReconstructedMap recon_;
    int reading_count_ = 0;
    bool complete_ = false;
    std::map<std::string, Directive> tokens_;
    std::mt19937_64 rng_;
    std::optional<GridMap> truth_;
    metrics::MetricTimeline timeline_;

    // Set during replay: derived events are checked against these instead of
    // being trusted.
    const std::vector<Event>* expected_ = nullptr;
};

std::string_view to_string(FieldStrategy s) noexcept;
std::string_view to_string(PlacementMode p) noexcept;
FieldStrategy field_strategy_from_string(std::string_view s);
PlacementMode placement_mode_from_string(std::string_view s);

}  // namespace sbs::server
