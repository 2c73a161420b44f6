// sbs: map generation, simulation, sweeps, analysis, coordination server and
// simulated field operators.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "sbs/envgen.hpp"
#include "sbs/fieldsim/operator.hpp"
#include "sbs/harness.hpp"
#include "sbs/io.hpp"
#include "sbs/metrics.hpp"
#include "sbs/server/service.hpp"

namespace fs = std::filesystem;
using namespace sbs;

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

ObstacleMask resolve_obstacles(const std::string& name, const GridSpec& spec) {
    if (name.empty() || name == "none") return ObstacleMask(spec);
    if (fs::exists(name)) {
        ObstacleMask m = io::read_mask(name);
        if (m.spec().rows != spec.rows || m.spec().cols != spec.cols) {
            throw ValidationError("obstacle mask " + name + " does not match the map grid");
        }
        return m;
    }
    return envgen::obstacle_layout(envgen::layout_from_string(name), spec);
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Score-biased adaptive sampling toolkit"};
    app.require_subcommand(1);

    // gen-maps
    auto* gen = app.add_subcommand("gen-maps", "Generate fractional Brownian field maps");
    harness::MapSetParams gen_params;
    int gen_rows = 100, gen_cols = 100;
    std::string gen_out;
    gen->add_option("--count", gen_params.count, "Number of maps")->check(CLI::PositiveNumber);
    gen->add_option("--rows", gen_rows)->check(CLI::Range(2, 100000));
    gen->add_option("--cols", gen_cols)->check(CLI::Range(2, 100000));
    gen->add_option("--hurst", gen_params.hurst)->check(CLI::Range(0.0, 1.0));
    gen->add_option("--seed", gen_params.seed);
    gen->add_option("--out", gen_out)->required();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run one strategy over a map set");
    std::string sim_maps, sim_strategy = "sbs", sim_weights, sim_obstacles = "none", sim_out, sim_placement = "center";
    int sim_agents = 1, sim_budget = 800, sim_parallel = 1;
    std::uint64_t sim_seed = 0;
    double sim_noise = 0.0;
    bool sim_traces = false;
    std::vector<double> sim_milestones{0.25, 0.5, 1.0};
    sim->add_option("--maps", sim_maps)->required()->check(CLI::ExistingDirectory);
    sim->add_option("--strategy", sim_strategy)->check(CLI::IsMember({"sbs", "ptp", "spiral", "wandering"}));
    sim->add_option("--agents", sim_agents)->check(CLI::PositiveNumber);
    sim->add_option("--budget", sim_budget)->check(CLI::PositiveNumber);
    sim->add_option("--weights", sim_weights, "key=value weights file")->check(CLI::ExistingFile);
    sim->add_option("--obstacles", sim_obstacles, "Layout name or mask JSON file");
    sim->add_option("--placement", sim_placement)->check(CLI::IsMember({"center", "edges", "random"}));
    sim->add_option("--seed", sim_seed);
    sim->add_option("--noise-sigma", sim_noise, "Gaussian sensor noise")->check(CLI::NonNegativeNumber);
    sim->add_option("--milestones", sim_milestones);
    sim->add_option("--parallelism", sim_parallel)->check(CLI::PositiveNumber);
    sim->add_flag("--traces", sim_traces, "Write per-round traces");
    sim->add_option("--out", sim_out)->required();

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Factorial weight sweep");
    std::string sweep_spec, sweep_out;
    sweep->add_option("--spec", sweep_spec)->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", sweep_out)->required();

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Margin tests of run A against run B");
    std::string an_a, an_b, an_out;
    double an_margin = 0.10, an_alpha = 0.05;
    analyze->add_option("--a", an_a)->required();
    analyze->add_option("--b", an_b)->required();
    analyze->add_option("--margin", an_margin)->check(CLI::Range(0.0, 1.0));
    analyze->add_option("--alpha", an_alpha)->check(CLI::Range(0.0, 1.0));
    analyze->add_option("--out", an_out)->required();

    // serve
    auto* serve = app.add_subcommand("serve", "Run the coordination server");
    int serve_port = 8080;
    std::string serve_host = "0.0.0.0", serve_logs = "sessions", serve_ui;
    serve->add_option("--port", serve_port)->check(CLI::Range(1, 65535));
    serve->add_option("--host", serve_host);
    serve->add_option("--log-dir", serve_logs);
    serve->add_option("--ui-dir", serve_ui)->check(CLI::ExistingDirectory);

    // replay
    auto* replay = app.add_subcommand("replay", "Rebuild a session from its event log");
    std::string rp_log, rp_truth, rp_out;
    replay->add_option("--log", rp_log)->required()->check(CLI::ExistingFile);
    replay->add_option("--truth", rp_truth)->check(CLI::ExistingFile);
    replay->add_option("--out", rp_out)->required();

    // operator-sim
    auto* opsim = app.add_subcommand("operator-sim", "Simulated field operators against a server");
    std::string op_server, op_session, op_truth, op_out, op_compliance = "strict", op_config;
    fieldsim::FleetParams fleet;
    bool op_concurrent = false;
    opsim->add_option("--server", op_server)->required();
    opsim->add_option("--session", op_session, "Existing session id; a new one is created when omitted");
    opsim->add_option("--config", op_config, "Session config JSON used when creating a session")
        ->check(CLI::ExistingFile);
    opsim->add_option("--count", fleet.count)->check(CLI::PositiveNumber);
    opsim->add_option("--truth", op_truth)->required()->check(CLI::ExistingFile);
    opsim->add_option("--noise-sigma", fleet.gps_noise_sigma_m, "GPS noise sigma (m)")->check(CLI::NonNegativeNumber);
    opsim->add_option("--speed-min", fleet.speed_min_mps);
    opsim->add_option("--speed-max", fleet.speed_max_mps);
    opsim->add_option("--compliance", op_compliance)->check(CLI::IsMember({"strict", "sloppy"}));
    opsim->add_option("--radius", fleet.sloppy_radius_m, "Sloppy compliance radius (m)");
    opsim->add_option("--poll-interval", fleet.poll_interval_s);
    opsim->add_option("--seed", fleet.seed);
    opsim->add_flag("--concurrent", op_concurrent, "One thread per operator instead of the lockstep scheduler");
    opsim->add_option("--out", op_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            gen_params.spec = GridSpec(gen_rows, gen_cols);
            const auto maps = harness::generate_maps(gen_params);
            const auto paths = harness::write_maps(maps, gen_out);
            std::cout << "wrote " << paths.size() << " maps to " << gen_out << "\n";
        } else if (*sim) {
            harness::ExperimentPlan plan;
            plan.maps = harness::load_maps(sim_maps);
            if (plan.maps.empty()) throw ValidationError("no maps in " + sim_maps);
            plan.mask = resolve_obstacles(sim_obstacles, plan.maps.front().spec());
            strategies::StrategyConfig cfg;
            cfg.kind = strategies::strategy_from_string(sim_strategy);
            cfg.weights = planner::ScoreWeights::defaults_for(sim_agents);
            if (!sim_weights.empty()) cfg.weights = planner::load_weights(sim_weights, cfg.weights);
            cfg.total_step_budget = sim_budget;
            cfg.num_agents = sim_agents;
            cfg.placement = strategies::placement_from_string(sim_placement);
            cfg.sensor_noise_sigma = sim_noise;
            plan.strategies.push_back({sim_strategy, cfg});
            plan.milestones = sim_milestones;
            plan.master_seed = sim_seed;
            plan.parallelism = sim_parallel;
            plan.keep_traces = sim_traces;
            const auto result = harness::run_plan(plan);
            harness::write_plan_outputs(sim_out, plan, result);
            std::size_t failed = 0;
            for (const auto& e : result.episodes) failed += e.ok() ? 0 : 1;
            harness::write_aggregate_csv(std::cout, result.table);
            if (failed) {
                std::cerr << failed << " episode(s) aborted; see episodes.csv\n";
                return 2;
            }
        } else if (*sweep) {
            std::ifstream in(sweep_spec);
            std::stringstream text;
            text << in.rdbuf();
            const auto spec = harness::parse_sweep_spec(text.str());
            const auto result = harness::run_sweep(spec);
            fs::create_directories(sweep_out);
            auto out = open_out(fs::path(sweep_out) / "sweep.csv");
            harness::write_sweep_csv(out, result);
            if (!result.rows.empty()) {
                io::write_text(fs::path(sweep_out) / "best_weights.txt", planner::format_weights(result.rows.front().weights));
                std::cout << "best:\n" << planner::format_weights(result.rows.front().weights);
            }
            std::cout << result.rows.size() << " combinations ranked, " << result.skipped << " skipped\n";
        } else if (*analyze) {
            auto load = [](const std::string& p) {
                fs::path path(p);
                if (fs::is_directory(path)) path /= "aggregate.csv";
                std::ifstream in(path);
                if (!in) throw std::runtime_error("cannot read " + path.string());
                return harness::read_aggregate_csv(in);
            };
            const auto rows = harness::compare(load(an_a), load(an_b), an_margin, an_alpha);
            auto out = open_out(an_out);
            harness::write_comparison_csv(out, rows);
            harness::write_comparison_csv(std::cout, rows);
        } else if (*serve) {
            server::SessionManager sessions{fs::path(serve_logs)};
            httplib::Server srv;
            server::register_routes(srv, sessions,
                                    serve_ui.empty() ? std::nullopt : std::optional<fs::path>(serve_ui));
            g_server = &srv;
            std::signal(SIGINT, stop_server);
            std::signal(SIGTERM, stop_server);
            std::cout << "listening on " << serve_host << ":" << serve_port << ", logs in " << serve_logs << std::endl;
            if (!srv.listen(serve_host, serve_port)) {
                std::cerr << "cannot listen on " << serve_host << ":" << serve_port << "\n";
                return 1;
            }
        } else if (*replay) {
            std::optional<GridMap> truth;
            if (!rp_truth.empty()) truth = io::read_map(rp_truth);
            const auto events = server::read_event_log(rp_log);
            const auto session = server::Session::replay(events, {}, truth);
            const fs::path out(rp_out);
            fs::create_directories(out);
            io::write_map(out / "estimate.json", session.reconstruction().estimate);
            io::write_map(out / "uncertainty.json", session.reconstruction().uncertainty);
            io::write_text(out / "state.json", session.snapshot().dump(1) + "\n");
            if (truth) {
                auto csv = open_out(out / "timeline.csv");
                metrics::write_timeline_csv(csv, session.timeline());
            }
            std::cout << "replayed " << events.size() << " events, " << session.readings() << " readings\n";
        } else if (*opsim) {
            fleet.compliance = fieldsim::compliance_from_string(op_compliance);
            const GridMap truth = io::read_map(op_truth);
            std::string sid = op_session;
            if (sid.empty()) {
                httplib::Client client(op_server);
                server::json body = op_config.empty() ? server::json::object() : io::read_json(op_config);
                auto res = client.Post("/api/sessions", body.dump(), "application/json");
                if (!res || res->status != 201) throw std::runtime_error("could not create a session");
                sid = server::json::parse(res->body).at("session_id").get<std::string>();
                std::cout << "created session " << sid << "\n";
            }
            std::vector<std::unique_ptr<fieldsim::HttpCoordinator>> owned;
            std::vector<fieldsim::CoordinatorApi*> apis;
            for (int i = 0; i < fleet.count; ++i) {
                owned.push_back(std::make_unique<fieldsim::HttpCoordinator>(op_server, sid));
                apis.push_back(owned.back().get());
            }
            const auto result = op_concurrent ? fieldsim::run_concurrent(apis, fleet, truth)
                                              : fieldsim::run_lockstep(apis, fleet, truth);
            fieldsim::write_transcripts(result.transcripts, op_out);
            io::write_text(fs::path(op_out) / "final_state.json", result.final_state.dump(1) + "\n");
            std::cout << "session " << sid << ": " << result.final_state.at("readings").get<int>() << " readings\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
