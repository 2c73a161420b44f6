#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sbs/server/session.hpp"

namespace sbs::fieldsim {

using server::Directive;
using server::FieldReading;
using server::GeoFix;
using server::json;

enum class Compliance { strict, sloppy };

struct OperatorModel {
    double speed_mps = 1.2;
    double gps_noise_sigma_m = 2.5;  // 2 sigma ~ 5 m
    Compliance compliance = Compliance::strict;
    double sloppy_radius_m = 5.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct UnreachableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The four coordinator calls an operator makes. Failures surface as the
/// session's own exception types (OutOfFieldFixError, SessionClosedError, ...).
class CoordinatorApi {
public:
    virtual ~CoordinatorApi() = default;
    virtual server::Session::JoinResult join(std::optional<GeoFix> fix) = 0;
    virtual Directive report_fix(AgentId agent, const GeoFix& fix) = 0;
    virtual Directive submit_reading(AgentId agent, const FieldReading& reading) = 0;
    virtual json state() = 0;
};

/// Talks to a running coord-server. Connection failures are retried
/// `retries` times before UnreachableError.
class HttpCoordinator : public CoordinatorApi {
public:
    HttpCoordinator(std::string base_url, std::string session_id, int retries = 5);
    ~HttpCoordinator() override;

    server::Session::JoinResult join(std::optional<GeoFix> fix) override;
    Directive report_fix(AgentId agent, const GeoFix& fix) override;
    Directive submit_reading(AgentId agent, const FieldReading& reading) override;
    json state() override;

private:
    json post(const std::string& path, const json& body);

    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string session_id_;
    int retries_;
};

/// Drives a Session directly. Calls are serialised on an internal mutex so
/// one instance may be shared by threads.
class InProcessCoordinator : public CoordinatorApi {
public:
    explicit InProcessCoordinator(server::Session& session) : session_(session) {}

    server::Session::JoinResult join(std::optional<GeoFix> fix) override;
    Directive report_fix(AgentId agent, const GeoFix& fix) override;
    Directive submit_reading(AgentId agent, const FieldReading& reading) override;
    json state() override;

private:
    server::Session& session_;
    std::mutex mutex_;
};

struct TranscriptEntry {
    double t_s = 0.0;  // simulated time of the request
    std::string op;    // join | fix | reading
    json request;
    json response;  // directive, or {"error": ...}
    std::optional<std::int64_t> seq;
};

struct ReadingRecord {
    AgentId agent = 0;
    std::optional<Cell> commanded;  // goal when the reading was taken
    Cell reported;                  // cell of the submitted fix
    Cell true_cell;
    double value = 0.0;
};

struct Transcript {
    int operator_index = 0;
    AgentId agent_id = -1;
    OperatorModel model;
    std::vector<TranscriptEntry> entries;
    std::vector<ReadingRecord> readings;
};

json to_json(const Transcript& t);
Transcript transcript_from_json(const json& j);

/// One simulated person walking the field in continuous metres.
class Operator {
public:
    Operator(int index, OperatorModel model, server::FieldFrame frame, GridMap truth,
             int polls_before_forced_reading = 10);

    void start(CoordinatorApi& api, double now_s);
    /// Walks for `dt_s`, reports a fix and submits a reading when standing at
    /// the goal. Returns false once the session is complete.
    bool step(CoordinatorApi& api, double now_s, double dt_s);

    bool done() const noexcept { return done_; }
    const Transcript& transcript() const noexcept { return transcript_; }
    server::LocalPoint position() const noexcept { return pos_; }

private:
    GeoFix noisy_fix();
    void follow(const Directive& d);
    void record(double t, std::string op, json request, const Directive& d);

    int index_;
    OperatorModel model_;
    server::FieldFrame frame_;
    GridMap truth_;
    int forced_after_;
    std::mt19937_64 rng_;
    server::LocalPoint pos_;
    std::optional<server::LocalPoint> target_;
    std::optional<Cell> goal_;
    std::optional<GeoFix> last_fix_;
    AgentId agent_ = -1;
    int polls_at_target_ = 0;
    int token_counter_ = 0;
    bool done_ = false;
    Transcript transcript_;
};

struct FleetParams {
    int count = 4;
    double speed_min_mps = 0.8;
    double speed_max_mps = 1.6;
    double gps_noise_sigma_m = 2.5;
    Compliance compliance = Compliance::strict;
    double sloppy_radius_m = 5.0;
    std::uint64_t seed = 0;
    double poll_interval_s = 1.0;
    int polls_before_forced_reading = 10;
    long max_polls = 1'000'000;

    void validate() const;
    /// Per-operator models with speeds drawn uniformly from the range.
    std::vector<OperatorModel> models() const;
};

struct FleetResult {
    std::vector<Transcript> transcripts;
    json final_state;
};

/// Deterministic scheduler on simulated time: the operator with the earliest
/// next action goes first, ties to the lower index. With the same session
/// config, truth and seeds the request sequence is identical across backends.
FleetResult run_lockstep(const std::vector<CoordinatorApi*>& apis, const FleetParams& params, const GridMap& truth);
FleetResult run_lockstep(CoordinatorApi& api, const FleetParams& params, const GridMap& truth);

/// Each operator on its own thread with its own coordinator; interleaving is
/// whatever the OS produces.
FleetResult run_concurrent(const std::vector<CoordinatorApi*>& apis, const FleetParams& params, const GridMap& truth);

/// Re-issues the requests recorded in transcripts, in server sequence order,
/// against a fresh session built from `config`.
server::Session replay_transcripts(const server::SessionConfig& config, const std::vector<Transcript>& transcripts,
                                   std::optional<GridMap> truth = std::nullopt);

void write_transcripts(const std::vector<Transcript>& transcripts, const std::filesystem::path& dir);
std::vector<Transcript> read_transcripts(const std::filesystem::path& dir);

std::string_view to_string(Compliance c) noexcept;
Compliance compliance_from_string(std::string_view s);

}  // namespace sbs::fieldsim
