#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "sbs/server/session.hpp"

namespace httplib {
class Server;
}

namespace sbs::server {

struct UnknownSessionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Owns all live sessions. Each session has its own mutex so ingestion is
/// serialised per session while distinct sessions proceed in parallel.
/// When a log directory is set, every event is appended to
/// <dir>/session_<id>.jsonl as it is produced.
class SessionManager {
public:
    explicit SessionManager(std::optional<std::filesystem::path> log_dir = std::nullopt);
    ~SessionManager();

    SessionManager(const SessionManager&) = delete;
    SessionManager& operator=(const SessionManager&) = delete;

    std::string create(const SessionConfig& config, std::optional<GridMap> truth = std::nullopt);

    Session::JoinResult join(const std::string& sid, std::optional<PlacementMode> placement,
                             std::optional<GeoFix> fix);
    Directive report_fix(const std::string& sid, AgentId agent, const GeoFix& fix);
    Directive submit_reading(const std::string& sid, AgentId agent, const FieldReading& reading);
    json snapshot(const std::string& sid) const;
    std::vector<Event> events(const std::string& sid) const;
    std::optional<std::filesystem::path> log_path(const std::string& sid) const;

private:
    struct Entry;
    std::shared_ptr<Entry> find(const std::string& sid) const;

    std::optional<std::filesystem::path> log_dir_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::mutex id_mutex_;
    std::uint64_t id_state_;
};

/// Reads a JSON-lines event log.
std::vector<Event> read_event_log(const std::filesystem::path& path);

/// Minimal operator console served at GET / when no UI bundle directory is given.
const std::string& default_index_html();

/// Registers the HTTP+JSON API (and GET /) on `server`.
void register_routes(httplib::Server& server, SessionManager& sessions,
                     std::optional<std::filesystem::path> ui_dir = std::nullopt);

}  // namespace sbs::server
