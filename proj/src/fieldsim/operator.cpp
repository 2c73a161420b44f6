#include "sbs/fieldsim/operator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include <httplib.h>

#include "sbs/harness.hpp"
#include "sbs/io.hpp"

namespace sbs::fieldsim {

std::string_view to_string(Compliance c) noexcept { return c == Compliance::strict ? "strict" : "sloppy"; }

Compliance compliance_from_string(std::string_view s) {
    if (s == "strict") return Compliance::strict;
    if (s == "sloppy") return Compliance::sloppy;
    throw ValidationError("unknown compliance '" + std::string(s) + "'");
}

void OperatorModel::validate() const {
    if (!std::isfinite(speed_mps) || !(speed_mps > 0.0)) throw ValidationError("speed_mps must be finite and > 0");
    if (!std::isfinite(gps_noise_sigma_m) || gps_noise_sigma_m < 0.0) {
        throw ValidationError("gps_noise_sigma_m must be finite and >= 0");
    }
    if (!std::isfinite(sloppy_radius_m) || sloppy_radius_m < 0.0) {
        throw ValidationError("sloppy_radius_m must be finite and >= 0");
    }
}

// ---------------------------------------------------------------------------
// Coordinators

struct HttpCoordinator::Impl {
    explicit Impl(const std::string& url) : client(url) {
        client.set_connection_timeout(2, 0);
        client.set_read_timeout(30, 0);
        client.set_keep_alive(true);
        client.set_tcp_nodelay(true);
    }
    httplib::Client client;
};

HttpCoordinator::HttpCoordinator(std::string base_url, std::string session_id, int retries)
    : impl_(std::make_unique<Impl>(base_url)), session_id_(std::move(session_id)), retries_(retries) {
    if (retries_ < 0) throw ValidationError("retries must be >= 0");
}

HttpCoordinator::~HttpCoordinator() = default;

json HttpCoordinator::post(const std::string& path, const json& body) {
    const std::string payload = body.dump();
    for (int attempt = 0;; ++attempt) {
        auto res = impl_->client.Post(path, payload, "application/json");
        if (!res) {
            if (attempt >= retries_) {
                throw UnreachableError("coordinator unreachable: " + httplib::to_string(res.error()));
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
            continue;
        }
        json j = res->body.empty() ? json::object() : json::parse(res->body);
        if (res->status >= 200 && res->status < 300) return j;
        const std::string msg = j.value("error", "HTTP " + std::to_string(res->status));
        switch (res->status) {
            case 422:
                if (j.contains("directive")) {
                    throw server::OutOfFieldFixError(msg, server::directive_from_json(j["directive"]));
                }
                throw server::OutOfFieldError(msg);
            case 409: throw server::SessionClosedError(msg);
            case 404: throw server::UnknownAgentError(msg);
            case 400: throw ValidationError(msg);
            default: throw std::runtime_error(msg);
        }
    }
}

namespace {

json fix_body(const GeoFix& f) { return json{{"lat", f.point.lat}, {"lon", f.point.lon}, {"accuracy_m", f.accuracy_m}}; }

json reading_body(const FieldReading& r) {
    json j = fix_body(r.fix);
    j["vwc"] = r.vwc;
    if (r.ec) j["ec"] = *r.ec;
    if (r.temp_c) j["temp_c"] = *r.temp_c;
    j["token"] = r.token;
    return j;
}

}  // namespace

server::Session::JoinResult HttpCoordinator::join(std::optional<GeoFix> fix) {
    const json j = post("/api/sessions/" + session_id_ + "/agents", fix ? fix_body(*fix) : json::object());
    return {j.at("agent_id").get<AgentId>(), server::directive_from_json(j.at("directive"))};
}

Directive HttpCoordinator::report_fix(AgentId agent, const GeoFix& fix) {
    const json j = post("/api/sessions/" + session_id_ + "/agents/" + std::to_string(agent) + "/fix", fix_body(fix));
    return server::directive_from_json(j.at("directive"));
}

Directive HttpCoordinator::submit_reading(AgentId agent, const FieldReading& reading) {
    const json j =
        post("/api/sessions/" + session_id_ + "/agents/" + std::to_string(agent) + "/reading", reading_body(reading));
    return server::directive_from_json(j.at("directive"));
}

json HttpCoordinator::state() {
    for (int attempt = 0;; ++attempt) {
        auto res = impl_->client.Get("/api/sessions/" + session_id_ + "/state");
        if (!res) {
            if (attempt >= retries_) {
                throw UnreachableError("coordinator unreachable: " + httplib::to_string(res.error()));
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
            continue;
        }
        json j = json::parse(res->body);
        if (res->status == 404) throw server::UnknownAgentError(j.value("error", "unknown session"));
        if (res->status != 200) throw std::runtime_error(j.value("error", "HTTP " + std::to_string(res->status)));
        return j;
    }
}

server::Session::JoinResult InProcessCoordinator::join(std::optional<GeoFix> fix) {
    std::lock_guard lock(mutex_);
    return session_.join(std::nullopt, fix);
}

Directive InProcessCoordinator::report_fix(AgentId agent, const GeoFix& fix) {
    std::lock_guard lock(mutex_);
    return session_.report_fix(agent, fix);
}

Directive InProcessCoordinator::submit_reading(AgentId agent, const FieldReading& reading) {
    std::lock_guard lock(mutex_);
    return session_.submit_reading(agent, reading);
}

json InProcessCoordinator::state() {
    std::lock_guard lock(mutex_);
    return session_.snapshot();
}

// ---------------------------------------------------------------------------
// Transcripts

namespace {

json model_json(const OperatorModel& m) {
    return json{{"speed_mps", m.speed_mps},
                {"gps_noise_sigma_m", m.gps_noise_sigma_m},
                {"compliance", std::string(to_string(m.compliance))},
                {"sloppy_radius_m", m.sloppy_radius_m},
                {"seed", m.seed}};
}

OperatorModel model_from_json(const json& j) {
    OperatorModel m;
    m.speed_mps = j.at("speed_mps").get<double>();
    m.gps_noise_sigma_m = j.at("gps_noise_sigma_m").get<double>();
    m.compliance = compliance_from_string(j.at("compliance").get<std::string>());
    m.sloppy_radius_m = j.at("sloppy_radius_m").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
}

json cell_json(Cell c) { return json::array({c.row, c.col}); }
Cell cell_from_json(const json& j) { return Cell{j.at(0).get<int>(), j.at(1).get<int>()}; }

}  // namespace

json to_json(const Transcript& t) {
    json entries = json::array();
    for (const auto& e : t.entries) {
        entries.push_back(json{{"t", e.t_s},
                               {"op", e.op},
                               {"request", e.request},
                               {"response", e.response},
                               {"seq", e.seq ? json(*e.seq) : json(nullptr)}});
    }
    json readings = json::array();
    for (const auto& r : t.readings) {
        readings.push_back(json{{"agent_id", r.agent},
                                {"commanded", r.commanded ? cell_json(*r.commanded) : json(nullptr)},
                                {"reported", cell_json(r.reported)},
                                {"true_cell", cell_json(r.true_cell)},
                                {"value", r.value}});
    }
    return json{{"operator", t.operator_index},
                {"agent_id", t.agent_id},
                {"model", model_json(t.model)},
                {"entries", std::move(entries)},
                {"readings", std::move(readings)}};
}

Transcript transcript_from_json(const json& j) {
    Transcript t;
    t.operator_index = j.at("operator").get<int>();
    t.agent_id = j.at("agent_id").get<AgentId>();
    t.model = model_from_json(j.at("model"));
    for (const auto& e : j.at("entries")) {
        TranscriptEntry entry{e.at("t").get<double>(), e.at("op").get<std::string>(), e.at("request"),
                              e.at("response"), std::nullopt};
        if (!e.at("seq").is_null()) entry.seq = e["seq"].get<std::int64_t>();
        t.entries.push_back(std::move(entry));
    }
    for (const auto& r : j.at("readings")) {
        ReadingRecord rec;
        rec.agent = r.at("agent_id").get<AgentId>();
        if (!r.at("commanded").is_null()) rec.commanded = cell_from_json(r["commanded"]);
        rec.reported = cell_from_json(r.at("reported"));
        rec.true_cell = cell_from_json(r.at("true_cell"));
        rec.value = r.at("value").get<double>();
        t.readings.push_back(rec);
    }
    return t;
}

void write_transcripts(const std::vector<Transcript>& transcripts, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& t : transcripts) {
        char name[32];
        std::snprintf(name, sizeof name, "operator_%02d.json", t.operator_index);
        io::write_text(dir / name, to_json(t).dump(1) + "\n");
    }
}

std::vector<Transcript> read_transcripts(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.starts_with("operator_") && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Transcript> out;
    for (const auto& f : files) out.push_back(transcript_from_json(io::read_json(f)));
    return out;
}

// ---------------------------------------------------------------------------
// Operator

Operator::Operator(int index, OperatorModel model, server::FieldFrame frame, GridMap truth,
                   int polls_before_forced_reading)
    : index_(index),
      model_(model),
      frame_(frame),
      truth_(std::move(truth)),
      forced_after_(polls_before_forced_reading),
      rng_(model.seed) {
    model_.validate();
    if (truth_.spec().rows != frame_.spec().rows || truth_.spec().cols != frame_.spec().cols) {
        throw ValidationError("truth map grid does not match the field grid");
    }
    if (forced_after_ < 1) throw ValidationError("polls_before_forced_reading must be >= 1");
    const auto& spec = frame_.spec();
    std::uniform_real_distribution<double> north(0.0, spec.rows * spec.cell_size_m);
    std::uniform_real_distribution<double> east(0.0, spec.cols * spec.cell_size_m);
    pos_.north_m = north(rng_);
    pos_.east_m = east(rng_);
    transcript_.operator_index = index;
    transcript_.model = model_;
}

GeoFix Operator::noisy_fix() {
    server::LocalPoint p = pos_;
    if (model_.gps_noise_sigma_m > 0.0) {
        std::normal_distribution<double> noise(0.0, model_.gps_noise_sigma_m);
        p.north_m += noise(rng_);
        p.east_m += noise(rng_);
    }
    return GeoFix{frame_.to_geo(p), 2.0 * model_.gps_noise_sigma_m};
}

void Operator::follow(const Directive& d) {
    if (d.complete) done_ = true;
    if (d.goal == goal_ && (target_ || !goal_)) return;
    goal_ = d.goal;
    polls_at_target_ = 0;
    if (!goal_) {
        target_.reset();
        return;
    }
    server::LocalPoint t = frame_.cell_center_local(*goal_);
    if (model_.compliance == Compliance::sloppy && model_.sloppy_radius_m > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double r = model_.sloppy_radius_m * std::sqrt(u(rng_));
        const double th = 2.0 * std::numbers::pi * u(rng_);
        t.north_m += r * std::cos(th);
        t.east_m += r * std::sin(th);
    }
    target_ = t;
}

void Operator::record(double t, std::string op, json request, const Directive& d) {
    transcript_.entries.push_back(TranscriptEntry{t, std::move(op), std::move(request), server::to_json(d), d.seq});
}

void Operator::start(CoordinatorApi& api, double now_s) {
    const GeoFix fix = noisy_fix();
    last_fix_ = fix;
    json req = fix_body(fix);
    try {
        const auto joined = api.join(fix);
        agent_ = joined.agent_id;
        transcript_.agent_id = agent_;
        record(now_s, "join", req, joined.directive);
        follow(joined.directive);
    } catch (const server::SessionClosedError& e) {
        transcript_.entries.push_back(TranscriptEntry{now_s, "join", req, json{{"error", e.what()}}, std::nullopt});
        done_ = true;
    }
}

bool Operator::step(CoordinatorApi& api, double now_s, double dt_s) {
    if (done_) return false;
    if (agent_ < 0) throw std::logic_error("operator stepped before start");

    if (target_) {
        const double dn = target_->north_m - pos_.north_m;
        const double de = target_->east_m - pos_.east_m;
        const double dist = std::hypot(dn, de);
        const double reach = model_.speed_mps * dt_s;
        if (dist <= reach) {
            pos_ = *target_;
        } else {
            pos_.north_m += dn / dist * reach;
            pos_.east_m += de / dist * reach;
        }
    }

    const GeoFix fix = noisy_fix();
    last_fix_ = fix;
    json req = fix_body(fix);
    req["agent_id"] = agent_;
    Directive d;
    try {
        d = api.report_fix(agent_, fix);
        record(now_s, "fix", req, d);
    } catch (const server::OutOfFieldFixError& e) {
        transcript_.entries.push_back(TranscriptEntry{now_s, "fix", req,
                                                      json{{"error", e.what()}, {"directive", server::to_json(e.directive)}},
                                                      std::nullopt});
        follow(e.directive);
        return !done_;
    } catch (const server::SessionClosedError&) {
        done_ = true;
        return false;
    }
    follow(d);
    if (done_) return false;

    const bool arrived = !target_ || (pos_.north_m == target_->north_m && pos_.east_m == target_->east_m);
    if (!arrived) return true;
    ++polls_at_target_;
    if (goal_ && !d.within_goal_cell && polls_at_target_ < forced_after_) return true;

    const Cell true_cell = frame_.to_cell(pos_);
    FieldReading r;
    r.fix = fix;
    r.vwc = std::clamp(truth_.at(true_cell), 0.0, 1.0);
    r.token = "op" + std::to_string(index_) + "-" + std::to_string(token_counter_++);
    json rreq = reading_body(r);
    rreq["agent_id"] = agent_;
    const std::optional<Cell> commanded = goal_;
    try {
        const Directive after = api.submit_reading(agent_, r);
        record(now_s, "reading", rreq, after);
        transcript_.readings.push_back(ReadingRecord{agent_, commanded, frame_.to_cell(fix.point), true_cell, r.vwc});
        polls_at_target_ = 0;
        goal_.reset();  // force retarget even when the goal is unchanged
        target_.reset();
        follow(after);
    } catch (const server::OutOfFieldFixError& e) {
        transcript_.entries.push_back(TranscriptEntry{now_s, "reading", rreq,
                                                      json{{"error", e.what()}, {"directive", server::to_json(e.directive)}},
                                                      std::nullopt});
    } catch (const server::SessionClosedError&) {
        done_ = true;
    }
    return !done_;
}

// ---------------------------------------------------------------------------
// Fleets

void FleetParams::validate() const {
    if (count < 1) throw ValidationError("operator count must be >= 1");
    if (!(speed_min_mps > 0.0) || !(speed_max_mps >= speed_min_mps) || !std::isfinite(speed_max_mps)) {
        throw ValidationError("speed range must satisfy 0 < min <= max");
    }
    if (!std::isfinite(gps_noise_sigma_m) || gps_noise_sigma_m < 0.0) throw ValidationError("invalid GPS noise");
    if (!(poll_interval_s > 0.0)) throw ValidationError("poll interval must be > 0");
    if (polls_before_forced_reading < 1) throw ValidationError("polls_before_forced_reading must be >= 1");
}

std::vector<OperatorModel> FleetParams::models() const {
    validate();
    std::vector<OperatorModel> out;
    for (int i = 0; i < count; ++i) {
        std::mt19937_64 rng(harness::derive_seed(seed, static_cast<std::uint64_t>(i), 0xF1E1D));
        std::uniform_real_distribution<double> speed(speed_min_mps, speed_max_mps);
        OperatorModel m;
        m.speed_mps = speed_max_mps > speed_min_mps ? speed(rng) : speed_min_mps;
        m.gps_noise_sigma_m = gps_noise_sigma_m;
        m.compliance = compliance;
        m.sloppy_radius_m = sloppy_radius_m;
        m.seed = harness::derive_seed(seed, static_cast<std::uint64_t>(i), 0x0);
        out.push_back(m);
    }
    return out;
}

namespace {

std::vector<Operator> make_operators(CoordinatorApi& api, const FleetParams& params, const GridMap& truth) {
    const auto config = server::session_config_from_json(api.state().at("config"));
    const server::FieldFrame frame(config.origin, config.grid());
    std::vector<Operator> ops;
    const auto models = params.models();
    for (int i = 0; i < params.count; ++i) {
        ops.emplace_back(i, models[static_cast<std::size_t>(i)], frame, truth, params.polls_before_forced_reading);
    }
    return ops;
}

FleetResult collect(std::vector<Operator>& ops, CoordinatorApi& api) {
    FleetResult out;
    for (auto& op : ops) out.transcripts.push_back(op.transcript());
    out.final_state = api.state();
    return out;
}

}  // namespace

FleetResult run_lockstep(const std::vector<CoordinatorApi*>& apis, const FleetParams& params, const GridMap& truth) {
    if (apis.size() != static_cast<std::size_t>(params.count)) throw ValidationError("one coordinator per operator");
    auto ops = make_operators(*apis[0], params, truth);
    std::vector<double> next(ops.size(), 0.0);
    for (std::size_t i = 0; i < ops.size(); ++i) ops[i].start(*apis[i], 0.0);
    for (long polls = 0;; ++polls) {
        if (polls >= params.max_polls) throw std::runtime_error("field session did not complete within max_polls");
        std::size_t pick = ops.size();
        for (std::size_t i = 0; i < ops.size(); ++i) {
            if (ops[i].done()) continue;
            if (pick == ops.size() || next[i] < next[pick]) pick = i;
        }
        if (pick == ops.size()) break;
        next[pick] += params.poll_interval_s;
        ops[pick].step(*apis[pick], next[pick], params.poll_interval_s);
    }
    return collect(ops, *apis[0]);
}

FleetResult run_lockstep(CoordinatorApi& api, const FleetParams& params, const GridMap& truth) {
    return run_lockstep(std::vector<CoordinatorApi*>(static_cast<std::size_t>(params.count), &api), params, truth);
}

FleetResult run_concurrent(const std::vector<CoordinatorApi*>& apis, const FleetParams& params, const GridMap& truth) {
    if (apis.size() != static_cast<std::size_t>(params.count)) throw ValidationError("one coordinator per operator");
    auto ops = make_operators(*apis[0], params, truth);
    std::vector<std::exception_ptr> errors(ops.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        threads.emplace_back([&, i] {
            try {
                ops[i].start(*apis[i], 0.0);
                double t = 0.0;
                for (long polls = 0; !ops[i].done(); ++polls) {
                    if (polls >= params.max_polls) throw std::runtime_error("operator exceeded max_polls");
                    t += params.poll_interval_s;
                    ops[i].step(*apis[i], t, params.poll_interval_s);
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return collect(ops, *apis[0]);
}

server::Session replay_transcripts(const server::SessionConfig& config, const std::vector<Transcript>& transcripts,
                                   std::optional<GridMap> truth) {
    std::vector<const TranscriptEntry*> entries;
    for (const auto& t : transcripts) {
        for (const auto& e : t.entries) {
            if (e.seq) entries.push_back(&e);
        }
    }
    std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return *a->seq < *b->seq; });
    entries.erase(std::unique(entries.begin(), entries.end(), [](auto* a, auto* b) { return *a->seq == *b->seq; }),
                  entries.end());

    server::Session s("replay", config, [] { return std::int64_t{0}; });
    if (truth) s.attach_truth(std::move(*truth));
    auto fix_of = [](const json& j) {
        return GeoFix{{j.at("lat").get<double>(), j.at("lon").get<double>()}, j.value("accuracy_m", 0.0)};
    };
    for (const auto* e : entries) {
        const json& q = e->request;
        if (e->op == "join") {
            const auto joined = s.join(std::nullopt, q.contains("lat") ? std::optional(fix_of(q)) : std::nullopt);
            if (joined.agent_id != e->response.at("agent_id").get<AgentId>()) {
                throw server::CorruptLogError("transcript join order does not reproduce agent ids");
            }
        } else if (e->op == "fix") {
            s.report_fix(q.at("agent_id").get<AgentId>(), fix_of(q));
        } else if (e->op == "reading") {
            FieldReading r;
            r.fix = fix_of(q);
            r.vwc = q.at("vwc").get<double>();
            if (q.contains("ec")) r.ec = q["ec"].get<double>();
            if (q.contains("temp_c")) r.temp_c = q["temp_c"].get<double>();
            r.token = q.value("token", std::string{});
            s.submit_reading(q.at("agent_id").get<AgentId>(), r);
        } else {
            throw server::CorruptLogError("unknown transcript op " + e->op);
        }
    }
    return s;
}

}  // namespace sbs::fieldsim
