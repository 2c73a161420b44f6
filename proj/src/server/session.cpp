#include "sbs/server/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "sbs/io.hpp"
#include "sbs/strategies.hpp"

namespace sbs::server {

std::string_view to_string(FieldStrategy s) noexcept { return s == FieldStrategy::sbs ? "sbs" : "wandering"; }

std::string_view to_string(PlacementMode p) noexcept {
    switch (p) {
        case PlacementMode::center: return "center";
        case PlacementMode::edges: return "edges";
        case PlacementMode::user_choice: return "user_choice";
    }
    return "center";
}

FieldStrategy field_strategy_from_string(std::string_view s) {
    if (s == "sbs") return FieldStrategy::sbs;
    if (s == "wandering") return FieldStrategy::wandering;
    throw ValidationError("unknown field strategy '" + std::string(s) + "'");
}

PlacementMode placement_mode_from_string(std::string_view s) {
    if (s == "center") return PlacementMode::center;
    if (s == "edges") return PlacementMode::edges;
    if (s == "user_choice") return PlacementMode::user_choice;
    throw ValidationError("unknown placement mode '" + std::string(s) + "'");
}

GridSpec SessionConfig::grid() const {
    if (!(cell_size_m > 0.0) || !(extent_ns_m > 0.0) || !(extent_ew_m > 0.0)) {
        throw ValidationError("field extent and cell size must be positive");
    }
    const double rows = extent_ns_m / cell_size_m;
    const double cols = extent_ew_m / cell_size_m;
    if (std::abs(rows - std::round(rows)) > 1e-9 || std::abs(cols - std::round(cols)) > 1e-9) {
        throw ValidationError("field extent is not a whole number of cells");
    }
    return GridSpec(static_cast<int>(std::round(rows)), static_cast<int>(std::round(cols)), cell_size_m);
}

void SessionConfig::validate() const {
    (void)grid();
    weights.validate();
    if (reading_target < 1) throw ValidationError("reading_target must be positive");
    if (min_measurements_for_kriging < 3) throw ValidationError("kriging needs at least 3 measurements");
    if (expected_agents < 1) throw ValidationError("expected_agents must be positive");
    if (!(std::abs(origin.lat) < 89.0) || !(std::abs(origin.lon) <= 180.0)) throw ValidationError("invalid origin");
}

json to_json(const SessionConfig& c) {
    json weights;
    weights["weight_expected_value"] = c.weights.expected_value;
    weights["weight_uncertainty"] = c.weights.uncertainty;
    weights["weight_prefer_center"] = c.weights.prefer_center;
    weights["weight_prefer_closeness"] = c.weights.prefer_closeness;
    weights["weight_prefer_current_goal"] = c.weights.prefer_current_goal;
    weights["weight_step_cost"] = c.weights.step_cost;
    return json{{"origin", {{"lat", c.origin.lat}, {"lon", c.origin.lon}}},
                {"field_extent_m", {c.extent_ns_m, c.extent_ew_m}},
                {"cell_size_m", c.cell_size_m},
                {"strategy", std::string(to_string(c.strategy))},
                {"weights", weights},
                {"placement_mode", std::string(to_string(c.placement_mode))},
                {"reading_target", c.reading_target},
                {"min_measurements_for_kriging", c.min_measurements_for_kriging},
                {"expected_agents", c.expected_agents},
                {"seed", c.seed}};
}

SessionConfig session_config_from_json(const json& j) {
    SessionConfig c;
    try {
        if (j.contains("origin")) c.origin = {j["origin"].at("lat").get<double>(), j["origin"].at("lon").get<double>()};
        if (j.contains("field_extent_m")) {
            c.extent_ns_m = j["field_extent_m"].at(0).get<double>();
            c.extent_ew_m = j["field_extent_m"].at(1).get<double>();
        }
        c.cell_size_m = j.value("cell_size_m", c.cell_size_m);
        if (j.contains("strategy")) c.strategy = field_strategy_from_string(j["strategy"].get<std::string>());
        if (j.contains("placement_mode")) {
            c.placement_mode = placement_mode_from_string(j["placement_mode"].get<std::string>());
        }
        c.reading_target = j.value("reading_target", c.reading_target);
        c.min_measurements_for_kriging = j.value("min_measurements_for_kriging", c.min_measurements_for_kriging);
        c.expected_agents = j.value("expected_agents", c.expected_agents);
        c.seed = j.value("seed", c.seed);
        if (j.contains("weights")) {
            for (const auto& [key, value] : j["weights"].items()) {
                if (!planner::set_weight(c.weights, key, value.get<double>())) {
                    throw ValidationError("unknown weight '" + key + "'");
                }
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed session config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

json cell_json(Cell c) { return json::array({c.row, c.col}); }

Cell cell_from_json(const json& j) { return Cell{j.at(0).get<int>(), j.at(1).get<int>()}; }

json fix_json(const GeoFix& f) {
    return json{{"lat", f.point.lat}, {"lon", f.point.lon}, {"accuracy_m", f.accuracy_m}};
}

GeoFix fix_from_json(const json& j) {
    return GeoFix{{j.at("lat").get<double>(), j.at("lon").get<double>()}, j.value("accuracy_m", 0.0)};
}

std::int64_t wall_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

json to_json(const Directive& d) {
    json j;
    j["agent_id"] = d.agent_id;
    j["goal"] = d.goal ? cell_json(*d.goal) : json(nullptr);
    j["goal_center"] = d.goal_center ? json{{"lat", d.goal_center->lat}, {"lon", d.goal_center->lon}} : json(nullptr);
    j["bearing_deg"] = d.bearing_deg ? json(*d.bearing_deg) : json(nullptr);
    j["within_goal_cell"] = d.within_goal_cell;
    j["readings"] = d.readings;
    j["reading_target"] = d.reading_target;
    j["complete"] = d.complete;
    j["burn_in"] = d.burn_in;
    j["seq"] = d.seq ? json(*d.seq) : json(nullptr);
    return j;
}

Directive directive_from_json(const json& j) {
    Directive d;
    d.agent_id = j.at("agent_id").get<AgentId>();
    if (!j.at("goal").is_null()) d.goal = cell_from_json(j["goal"]);
    if (!j.at("goal_center").is_null()) {
        d.goal_center = GeoPoint{j["goal_center"].at("lat").get<double>(), j["goal_center"].at("lon").get<double>()};
    }
    if (!j.at("bearing_deg").is_null()) d.bearing_deg = j["bearing_deg"].get<double>();
    d.within_goal_cell = j.at("within_goal_cell").get<bool>();
    d.readings = j.at("readings").get<int>();
    d.reading_target = j.at("reading_target").get<int>();
    d.complete = j.at("complete").get<bool>();
    d.burn_in = j.at("burn_in").get<bool>();
    if (j.contains("seq") && !j["seq"].is_null()) d.seq = j["seq"].get<std::int64_t>();
    return d;
}

json to_json(const Event& e) { return json{{"seq", e.seq}, {"ts", e.ts_ms}, {"type", e.type}, {"payload", e.payload}}; }

Event event_from_json(const json& j) {
    try {
        return Event{j.at("seq").get<std::int64_t>(), j.at("ts").get<std::int64_t>(), j.at("type").get<std::string>(),
                     j.at("payload")};
    } catch (const json::exception& e) {
        throw CorruptLogError(std::string("malformed event: ") + e.what());
    }
}

Session::Session(std::string id, SessionConfig config, Clock clock, EventSink sink)
    : id_(std::move(id)),
      config_(std::move(config)),
      spec_(config_.grid()),
      frame_(config_.origin, spec_),
      mask_(spec_),
      clock_(clock ? std::move(clock) : Clock(wall_clock_ms)),
      sink_(std::move(sink)),
      reconstructor_(spec_, mask_),
      recon_(geostat::burn_in_surrogate(MeasurementLog{}, spec_, mask_)),
      rng_(config_.seed) {
    config_.validate();
    now_ms_ = clock_();
    emit("SessionCreated", json{{"session_id", id_}, {"config", to_json(config_)}});
}

std::int64_t Session::emit(std::string type, json payload) {
    Event e{static_cast<std::int64_t>(events_.size()), now_ms_, std::move(type), std::move(payload)};
    if (expected_) {
        const auto idx = static_cast<std::size_t>(e.seq);
        if (idx >= expected_->size()) {
            // Truncated log: derived events past the end are recomputed.
        } else {
            const Event& want = (*expected_)[idx];
            if (want.type != e.type || want.payload != e.payload) {
                throw CorruptLogError("replay diverged at seq " + std::to_string(e.seq) + ": expected " + want.type +
                                      " " + want.payload.dump() + ", recomputed " + e.type + " " + e.payload.dump());
            }
            e.ts_ms = want.ts_ms;
        }
    }
    events_.push_back(e);
    if (sink_) sink_(events_.back());
    return e.seq;
}

void Session::attach_truth(GridMap truth) {
    if (!(truth.spec().rows == spec_.rows && truth.spec().cols == spec_.cols)) {
        throw ValidationError("truth map grid does not match the session grid");
    }
    truth = GridMap(spec_, MapKind::truth, truth.values());
    truth_ = std::move(truth);
}

Cell Session::start_waypoint(PlacementMode mode, int ordinal) const {
    std::mt19937_64 unused(0);
    if (mode == PlacementMode::center) {
        const auto cells = strategies::initial_positions(strategies::Placement::center, ordinal + 1, mask_, unused);
        return cells.back();
    }
    const int slots = std::max(config_.expected_agents, ordinal + 1);
    const auto cells = strategies::initial_positions(strategies::Placement::edges, slots, mask_, unused);
    return cells[static_cast<std::size_t>(ordinal)];
}

Cell Session::random_goal(Cell exclude) {
    std::uniform_int_distribution<std::size_t> pick(0, spec_.size() - 1);
    for (;;) {
        const Cell c = cell_at(spec_, pick(rng_));
        if (!(c == exclude)) return c;
    }
}

void Session::assign_goal(AgentRecord& agent, Cell goal) {
    if (agent.goal && *agent.goal == goal) return;
    agent.goal = goal;
    emit("GoalAssigned", json{{"agent_id", agent.id}, {"goal", cell_json(goal)}});
}

Directive Session::directive_for(AgentId id) const {
    const auto it = agents_.find(id);
    if (it == agents_.end()) throw UnknownAgentError("unknown agent " + std::to_string(id));
    const AgentRecord& a = it->second;
    Directive d;
    d.agent_id = id;
    d.goal = a.goal;
    if (a.goal) {
        d.goal_center = frame_.cell_center(*a.goal);
        if (a.last_fix) {
            d.bearing_deg = bearing_deg(frame_.to_local(a.last_fix->point), frame_.cell_center_local(*a.goal));
        }
        d.within_goal_cell = a.cell && *a.cell == *a.goal;
    }
    d.readings = reading_count_;
    d.reading_target = config_.reading_target;
    d.complete = complete_;
    d.burn_in = recon_.burn_in;
    return d;
}

Session::JoinResult Session::join(std::optional<PlacementMode> placement, std::optional<GeoFix> fix) {
    if (complete_) throw SessionClosedError("session " + id_ + " is complete");
    now_ms_ = clock_();
    const PlacementMode mode = placement.value_or(config_.placement_mode);
    std::optional<Cell> fix_cell;
    if (fix) fix_cell = frame_.to_cell(fix->point);

    const AgentId id = static_cast<AgentId>(agents_.size());
    json payload{{"agent_id", id}, {"placement", std::string(to_string(mode))}};
    payload["fix"] = fix ? fix_json(*fix) : json(nullptr);
    const auto seq = emit("AgentJoined", payload);

    AgentRecord rec;
    rec.id = id;
    rec.placement = mode;
    rec.last_fix = fix;
    rec.cell = fix_cell;
    auto& agent = agents_.emplace(id, rec).first->second;
    const int ordinal = joins_by_mode_[static_cast<int>(mode)]++;
    if (mode != PlacementMode::user_choice) assign_goal(agent, start_waypoint(mode, ordinal));

    Directive d = directive_for(id);
    d.seq = seq;
    return {id, d};
}

Directive Session::report_fix(AgentId id, const GeoFix& fix) {
    auto it = agents_.find(id);
    if (it == agents_.end()) throw UnknownAgentError("unknown agent " + std::to_string(id));
    Cell cell;
    try {
        cell = frame_.to_cell(fix.point);
    } catch (const OutOfFieldError& e) {
        throw OutOfFieldFixError(e.what(), directive_for(id));
    }
    now_ms_ = clock_();
    it->second.last_fix = fix;
    it->second.cell = cell;
    json payload = fix_json(fix);
    payload["agent_id"] = id;
    payload["cell"] = cell_json(cell);
    const auto seq = emit("FixReported", payload);
    Directive d = directive_for(id);
    d.seq = seq;
    return d;
}

Directive Session::submit_reading(AgentId id, const FieldReading& reading) {
    if (!reading.token.empty()) {
        if (auto cached = tokens_.find(reading.token); cached != tokens_.end()) return cached->second;
    }
    auto it = agents_.find(id);
    if (it == agents_.end()) throw UnknownAgentError("unknown agent " + std::to_string(id));
    if (complete_) throw SessionClosedError("session " + id_ + " is complete");
    if (!(reading.vwc >= 0.0 && reading.vwc <= 1.0)) throw ValidationError("vwc must lie in [0,1]");
    if (!(reading.fix.accuracy_m >= 0.0)) throw ValidationError("accuracy_m must be >= 0");
    Cell cell;
    try {
        cell = frame_.to_cell(reading.fix.point);
    } catch (const OutOfFieldError& e) {
        throw OutOfFieldFixError(e.what(), directive_for(id));
    }
    now_ms_ = clock_();
    AgentRecord& agent = it->second;

    json payload = fix_json(reading.fix);
    payload["agent_id"] = id;
    payload["vwc"] = reading.vwc;
    payload["ec"] = reading.ec ? json(*reading.ec) : json(nullptr);
    payload["temp_c"] = reading.temp_c ? json(*reading.temp_c) : json(nullptr);
    payload["token"] = reading.token;
    payload["cell"] = cell_json(cell);
    payload["goal_at_submit"] = agent.goal ? cell_json(*agent.goal) : json(nullptr);
    const auto seq = emit("ReadingAccepted", payload);

    agent.last_fix = reading.fix;
    agent.cell = cell;
    ++agent.readings;
    log_.append(Measurement{id, cell, reading.vwc, agent.readings, now_ms_});
    ++reading_count_;

    const auto distinct = geostat::dedupe_measurements(log_).size();
    if (distinct < static_cast<std::size_t>(config_.min_measurements_for_kriging)) {
        recon_ = geostat::burn_in_surrogate(log_, spec_, mask_);
    } else {
        recon_ = reconstructor_.reconstruct(log_);
    }
    if (truth_) timeline_.push_back(metrics::evaluate(reading_count_, recon_.estimate, *truth_, mask_));

    if (reading_count_ >= config_.reading_target) {
        complete_ = true;
        emit("SessionCompleted", json{{"readings", reading_count_}});
    } else {
        reassign_after_reading(id);
    }

    Directive d = directive_for(id);
    d.seq = seq;
    if (!reading.token.empty()) tokens_.emplace(reading.token, d);
    return d;
}

void Session::reassign_after_reading(AgentId submitter) {
    auto pending_start = [](const AgentRecord& a) {
        return a.readings == 0 && a.placement != PlacementMode::user_choice && a.goal.has_value();
    };
    if (config_.strategy == FieldStrategy::wandering) {
        AgentRecord& a = agents_.at(submitter);
        assign_goal(a, random_goal(a.cell.value_or(Cell{-1, -1})));
        return;
    }

    std::vector<AgentState> planning;
    for (const auto& [id, a] : agents_) {
        const std::optional<Cell> pos = a.cell ? a.cell : a.goal;
        if (!pos) continue;
        planning.push_back(AgentState{id, *pos, a.goal});
    }
    if (planning.empty()) return;
    const auto owners = planner::voronoi_partition(planning, spec_, mask_);
    for (const auto& st : planning) {
        AgentRecord& a = agents_.at(st.id);
        if (pending_start(a) || !planner::owns_any(owners, st.id)) continue;
        const auto score = planner::compute_score(recon_, st, owners, config_.weights, spec_, mask_);
        assign_goal(a, planner::select_goal(score, st, mask_));
    }
}

json Session::snapshot() const {
    json agents = json::array();
    for (const auto& [id, a] : agents_) {
        json entry{{"id", id}, {"placement", std::string(to_string(a.placement))}, {"readings", a.readings}};
        entry["position"] = a.cell ? cell_json(*a.cell) : json(nullptr);
        entry["goal"] = a.goal ? cell_json(*a.goal) : json(nullptr);
        entry["last_fix"] = a.last_fix ? fix_json(*a.last_fix) : json(nullptr);
        agents.push_back(std::move(entry));
    }
    std::size_t reading_events = 0;
    for (const auto& e : events_) reading_events += e.type == "ReadingAccepted" ? 1 : 0;
    json j{{"session_id", id_},
           {"config", to_json(config_)},
           {"rows", spec_.rows},
           {"cols", spec_.cols},
           {"readings", reading_count_},
           {"reading_target", config_.reading_target},
           {"reading_events", reading_events},
           {"events", events_.size()},
           {"complete", complete_},
           {"burn_in", recon_.burn_in},
           {"estimate", io::to_json(recon_.estimate)},
           {"uncertainty", io::to_json(recon_.uncertainty)},
           {"agents", std::move(agents)}};
    if (truth_) {
        json timeline = json::array();
        for (const auto& p : timeline_) {
            timeline.push_back({{"reading", p.round}, {"sse", p.sse}, {"ca50", p.cax[0]}, {"ca80", p.cax[1]},
                                {"ca90", p.cax[2]}, {"ca95", p.cax[3]}, {"ca99", p.cax[4]}});
        }
        j["timeline"] = std::move(timeline);
    }
    return j;
}

Session Session::replay(const std::vector<Event>& events, EventSink sink, std::optional<GridMap> truth) {
    if (events.empty() || events.front().type != "SessionCreated") {
        throw CorruptLogError("event log must start with SessionCreated");
    }
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (events[i].seq != static_cast<std::int64_t>(i)) {
            throw CorruptLogError("sequence gap: expected seq " + std::to_string(i) + ", found " +
                                  std::to_string(events[i].seq));
        }
    }
    std::int64_t ts = events.front().ts_ms;
    Session s(events.front().payload.at("session_id").get<std::string>(),
              session_config_from_json(events.front().payload.at("config")), [&ts] { return ts; }, std::move(sink));
    if (truth) s.attach_truth(std::move(*truth));
    s.expected_ = &events;

    for (std::size_t i = 1; i < events.size(); ++i) {
        const Event& e = events[i];
        if (static_cast<std::size_t>(s.events_.size()) > i) continue;  // derived event already re-emitted
        ts = e.ts_ms;
        const json& p = e.payload;
        try {
            if (e.type == "AgentJoined") {
                std::optional<GeoFix> fix;
                if (!p.at("fix").is_null()) fix = fix_from_json(p["fix"]);
                s.join(placement_mode_from_string(p.at("placement").get<std::string>()), fix);
            } else if (e.type == "FixReported") {
                s.report_fix(p.at("agent_id").get<AgentId>(), fix_from_json(p));
            } else if (e.type == "ReadingAccepted") {
                FieldReading r;
                r.fix = fix_from_json(p);
                r.vwc = p.at("vwc").get<double>();
                if (!p.at("ec").is_null()) r.ec = p["ec"].get<double>();
                if (!p.at("temp_c").is_null()) r.temp_c = p["temp_c"].get<double>();
                r.token = p.at("token").get<std::string>();
                s.submit_reading(p.at("agent_id").get<AgentId>(), r);
            } else {
                throw CorruptLogError("unexpected " + e.type + " event at seq " + std::to_string(e.seq));
            }
        } catch (const json::exception& ex) {
            throw CorruptLogError("malformed " + e.type + " payload at seq " + std::to_string(e.seq) + ": " + ex.what());
        }
        if (s.events_.size() <= i) {
            throw CorruptLogError("event at seq " + std::to_string(e.seq) + " was not reproduced");
        }
    }
    s.expected_ = nullptr;
    s.clock_ = wall_clock_ms;
    return s;
}

}  // namespace sbs::server
