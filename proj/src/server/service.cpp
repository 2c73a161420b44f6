#include "sbs/server/service.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>

#include "sbs/io.hpp"

namespace sbs::server {

struct SessionManager::Entry {
    std::mutex mutex;
    std::ofstream log;
    std::optional<std::filesystem::path> log_path;
    std::unique_ptr<Session> session;
};

namespace {

std::uint64_t splitmix(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

SessionManager::SessionManager(std::optional<std::filesystem::path> log_dir)
    : log_dir_(std::move(log_dir)), id_state_(std::random_device{}()) {
    id_state_ = (id_state_ << 32) ^ std::random_device{}();
    if (log_dir_) std::filesystem::create_directories(*log_dir_);
}

SessionManager::~SessionManager() = default;

std::string SessionManager::create(const SessionConfig& config, std::optional<GridMap> truth) {
    config.validate();
    std::string sid;
    {
        std::lock_guard lock(id_mutex_);
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(splitmix(id_state_)));
        sid = buf;
    }
    auto entry = std::make_shared<Entry>();
    if (log_dir_) {
        entry->log_path = *log_dir_ / ("session_" + sid + ".jsonl");
        entry->log.open(*entry->log_path, std::ios::out | std::ios::trunc);
        if (!entry->log) throw std::runtime_error("cannot open event log " + entry->log_path->string());
    }
    Entry* raw = entry.get();
    Session::EventSink sink;
    if (log_dir_) {
        sink = [raw](const Event& e) {
            raw->log << to_json(e).dump() << '\n';
            raw->log.flush();
        };
    }
    entry->session = std::make_unique<Session>(sid, config, Session::Clock{}, std::move(sink));
    if (truth) entry->session->attach_truth(std::move(*truth));
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(sid, std::move(entry));
    return sid;
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& sid) const {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(sid);
    if (it == sessions_.end()) throw UnknownSessionError("unknown session " + sid);
    return it->second;
}

Session::JoinResult SessionManager::join(const std::string& sid, std::optional<PlacementMode> placement,
                                         std::optional<GeoFix> fix) {
    auto e = find(sid);
    std::lock_guard lock(e->mutex);
    return e->session->join(placement, fix);
}

Directive SessionManager::report_fix(const std::string& sid, AgentId agent, const GeoFix& fix) {
    auto e = find(sid);
    std::lock_guard lock(e->mutex);
    return e->session->report_fix(agent, fix);
}

Directive SessionManager::submit_reading(const std::string& sid, AgentId agent, const FieldReading& reading) {
    auto e = find(sid);
    std::lock_guard lock(e->mutex);
    return e->session->submit_reading(agent, reading);
}

json SessionManager::snapshot(const std::string& sid) const {
    auto e = find(sid);
    std::lock_guard lock(e->mutex);
    return e->session->snapshot();
}

std::vector<Event> SessionManager::events(const std::string& sid) const {
    auto e = find(sid);
    std::lock_guard lock(e->mutex);
    return e->session->events();
}

std::optional<std::filesystem::path> SessionManager::log_path(const std::string& sid) const {
    return find(sid)->log_path;
}

std::vector<Event> read_event_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open event log " + path.string());
    std::vector<Event> events;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw CorruptLogError("line " + std::to_string(lineno) + " is not JSON: " + e.what());
        }
        events.push_back(event_from_json(j));
    }
    return events;
}

const std::string& default_index_html() {
    static const std::string html = R"HTML(<!doctype html>
<html>
<head>
<meta charset="utf-8">
<meta name="viewport" content="width=device-width, initial-scale=1">
<title>Field session</title>
<style>
body { font-family: sans-serif; margin: 1rem; max-width: 32rem; }
button { font-size: 1.1rem; padding: .5rem 1rem; margin: .25rem 0; }
#arrow { font-size: 3rem; display: inline-block; }
.status { margin: .5rem 0; }
</style>
</head>
<body>
<h1>Field session</h1>
<div class="status">Session: <span id="sid"></span> Agent: <span id="aid">-</span></div>
<button id="join">Join</button>
<div class="status">Goal: <span id="goal">-</span> <span id="arrow">&#8593;</span></div>
<div class="status">In goal cell: <span id="inside">no</span></div>
<div class="status">Readings: <span id="count">0</span> / <span id="target">0</span></div>
<label>VWC <input id="vwc" type="number" step="0.001" min="0" max="1"></label>
<button id="submit" disabled>Submit reading</button>
<pre id="log"></pre>
<script>
const sid = new URLSearchParams(location.search).get('session') || '';
document.getElementById('sid').textContent = sid || '(none)';
let agent = null, fix = null;
function show(d) {
  document.getElementById('goal').textContent = d.goal ? d.goal.join(',') : '-';
  document.getElementById('inside').textContent = d.within_goal_cell ? 'yes' : 'no';
  document.getElementById('count').textContent = d.readings;
  document.getElementById('target').textContent = d.reading_target;
  if (d.bearing_deg !== null) document.getElementById('arrow').style.transform = 'rotate(' + d.bearing_deg + 'deg)';
  document.getElementById('submit').disabled = d.complete;
}
async function post(path, body) {
  const r = await fetch(path, {method: 'POST', headers: {'Content-Type': 'application/json'}, body: JSON.stringify(body)});
  const j = await r.json();
  if (!r.ok) { document.getElementById('log').textContent = j.error || r.status; if (j.directive) show(j.directive); return null; }
  return j;
}
document.getElementById('join').onclick = async () => {
  const j = await post('/api/sessions/' + sid + '/agents', fix || {});
  if (!j) return;
  agent = j.agent_id;
  document.getElementById('aid').textContent = agent;
  show(j.directive);
  document.getElementById('submit').disabled = false;
};
if (navigator.geolocation) {
  navigator.geolocation.watchPosition(async p => {
    fix = {lat: p.coords.latitude, lon: p.coords.longitude, accuracy_m: p.coords.accuracy};
    if (agent === null) return;
    const j = await post('/api/sessions/' + sid + '/agents/' + agent + '/fix', fix);
    if (j) show(j.directive);
  }, null, {enableHighAccuracy: true});
}
document.getElementById('submit').onclick = async () => {
  if (agent === null || !fix) return;
  const body = Object.assign({vwc: parseFloat(document.getElementById('vwc').value), token: crypto.randomUUID()}, fix);
  const j = await post('/api/sessions/' + sid + '/agents/' + agent + '/reading', body);
  if (j) show(j.directive);
};
</script>
</body>
</html>
)HTML";
    return html;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body);  // json::parse_error maps to 400
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
}

GeoFix parse_fix(const json& j) {
    GeoFix f;
    f.point = {j.at("lat").get<double>(), j.at("lon").get<double>()};
    f.accuracy_m = j.value("accuracy_m", 0.0);
    if (!std::isfinite(f.point.lat) || !std::isfinite(f.point.lon)) throw ValidationError("lat/lon must be finite");
    if (!(f.accuracy_m >= 0.0)) throw ValidationError("accuracy_m must be >= 0");
    return f;
}

std::optional<double> optional_number(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const OutOfFieldFixError& e) {
        send_json(res, 422, json{{"error", e.what()}, {"directive", to_json(e.directive)}});
    } catch (const OutOfFieldError& e) {
        send_error(res, 422, e.what());
    } catch (const UnknownSessionError& e) {
        send_error(res, 404, e.what());
    } catch (const UnknownAgentError& e) {
        send_error(res, 404, e.what());
    } catch (const SessionClosedError& e) {
        send_error(res, 409, e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed request: ") + e.what());
    } catch (const std::invalid_argument& e) {
        send_error(res, 400, e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

AgentId parse_agent(const std::string& s) {
    try {
        return static_cast<AgentId>(std::stoi(s));
    } catch (const std::exception&) {
        throw ValidationError("invalid agent id");
    }
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& sessions, std::optional<std::filesystem::path> ui_dir) {
    // Small JSON replies otherwise stall on delayed ACKs.
    server.set_tcp_nodelay(true);
    if (ui_dir) {
        server.set_mount_point("/", ui_dir->string());
    } else {
        server.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(default_index_html(), "text/html; charset=utf-8");
        });
    }

    server.Post("/api/sessions", [&sessions](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = parse_body(req);
            json cfg = body.contains("config") ? body["config"] : body;
            std::optional<GridMap> truth;
            if (cfg.is_object() && cfg.contains("truth")) cfg.erase("truth");
            if (body.contains("truth")) truth = io::map_from_json(body["truth"]);
            const SessionConfig config = session_config_from_json(cfg);
            const std::string sid = sessions.create(config, std::move(truth));
            std::string host = req.get_header_value("Host");
            if (host.empty()) host = "localhost";
            send_json(res, 201, json{{"session_id", sid}, {"join_url", "http://" + host + "/?session=" + sid}});
        });
    });

    server.Post(R"(/api/sessions/([0-9a-zA-Z_-]+)/agents)", [&sessions](const httplib::Request& req,
                                                                        httplib::Response& res) {
        guarded(res, [&] {
            const std::string sid = req.matches[1];
            const json body = parse_body(req);
            std::optional<PlacementMode> placement;
            if (body.contains("placement") && !body["placement"].is_null()) {
                placement = placement_mode_from_string(body["placement"].get<std::string>());
            }
            std::optional<GeoFix> fix;
            if (body.contains("lat")) fix = parse_fix(body);
            const auto joined = sessions.join(sid, placement, fix);
            send_json(res, 201, json{{"agent_id", joined.agent_id}, {"directive", to_json(joined.directive)}});
        });
    });

    server.Post(R"(/api/sessions/([0-9a-zA-Z_-]+)/agents/(-?\d+)/fix)", [&sessions](const httplib::Request& req,
                                                                                  httplib::Response& res) {
        guarded(res, [&] {
            const std::string sid = req.matches[1];
            const AgentId agent = parse_agent(req.matches[2]);
            const GeoFix fix = parse_fix(parse_body(req));
            send_json(res, 200, json{{"directive", to_json(sessions.report_fix(sid, agent, fix))}});
        });
    });

    server.Post(R"(/api/sessions/([0-9a-zA-Z_-]+)/agents/(-?\d+)/reading)", [&sessions](const httplib::Request& req,
                                                                                      httplib::Response& res) {
        guarded(res, [&] {
            const std::string sid = req.matches[1];
            const AgentId agent = parse_agent(req.matches[2]);
            const json body = parse_body(req);
            FieldReading r;
            r.fix = parse_fix(body);
            r.vwc = body.at("vwc").get<double>();
            r.ec = optional_number(body, "ec");
            r.temp_c = optional_number(body, "temp_c");
            r.token = body.value("token", std::string{});
            send_json(res, 200, json{{"directive", to_json(sessions.submit_reading(sid, agent, r))}});
        });
    });

    server.Get(R"(/api/sessions/([0-9a-zA-Z_-]+)/state)", [&sessions](const httplib::Request& req,
                                                                      httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, sessions.snapshot(req.matches[1])); });
    });
}

}  // namespace sbs::server
