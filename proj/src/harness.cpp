#include "sbs/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "sbs/io.hpp"

namespace sbs::harness {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::string map_filename(std::size_t i) {
    std::ostringstream name;
    name << "map_" << std::setw(4) << std::setfill('0') << i << ".json";
    return name.str();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t map_id, std::uint64_t strategy_id) noexcept {
    return splitmix64(splitmix64(splitmix64(master) ^ map_id) ^ (strategy_id * 0xD1B54A32D192ED03ULL));
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& job) {
    const auto n_threads = static_cast<std::size_t>(std::max(1, workers));
    if (n_threads == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, count); ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<GridMap> generate_maps(const MapSetParams& params) {
    if (params.count < 0) throw ValidationError("map count must be non-negative");
    std::vector<GridMap> maps;
    maps.reserve(static_cast<std::size_t>(params.count));
    for (int i = 0; i < params.count; ++i) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            try {
                maps.push_back(envgen::generate_fbf(
                    {params.hurst, derive_seed(params.seed, static_cast<std::uint64_t>(i), attempt), params.spec}));
                break;
            } catch (const NumericalError&) {
                if (attempt > 16) throw;
            }
        }
    }
    return maps;
}

std::vector<std::filesystem::path> write_maps(const std::vector<GridMap>& maps, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        paths.push_back(dir / map_filename(i));
        io::write_map(paths.back(), maps[i]);
    }
    return paths;
}

std::vector<GridMap> load_maps(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<GridMap> maps;
    for (const auto& f : files) maps.push_back(io::read_map(f));
    if (maps.empty()) throw ValidationError("no maps found in " + dir.string());
    return maps;
}

void ExperimentPlan::validate() const {
    if (maps.empty()) throw ValidationError("plan has no maps");
    if (strategies.empty()) throw ValidationError("plan has no strategies");
    const GridSpec spec = maps.front().spec();
    for (const auto& m : maps) {
        if (!(m.spec() == spec)) throw ValidationError("plan maps must share one grid");
    }
    if (mask && !(mask->spec() == spec)) throw ValidationError("obstacle mask grid differs from the maps");
    const int budget = strategies.front().config.total_step_budget;
    for (const auto& s : strategies) {
        s.config.validate();
        if (s.config.total_step_budget != budget) {
            throw ValidationError("all strategies in a plan must share one total step budget");
        }
    }
    for (double f : milestones) {
        if (!(f > 0.0 && f <= 1.0)) throw ValidationError("milestones must lie in (0,1]");
    }
}

int milestone_round(double fraction, int steps_per_agent) noexcept {
    return static_cast<int>(std::floor(fraction * steps_per_agent + 1e-9));
}

PlanResult run_plan(const ExperimentPlan& plan) {
    plan.validate();
    const GridSpec spec = plan.maps.front().spec();
    const ObstacleMask mask = plan.mask ? *plan.mask : ObstacleMask(spec);
    const std::size_t n_maps = plan.maps.size();
    const std::size_t n_strategies = plan.strategies.size();

    PlanResult result;
    result.episodes.resize(n_maps * n_strategies);
    parallel_for(result.episodes.size(), plan.parallelism, [&](std::size_t job) {
        const std::size_t s = job / n_maps;
        const std::size_t m = job % n_maps;
        EpisodeResult& ep = result.episodes[job];
        ep.map_id = m;
        ep.strategy_id = s;
        ep.seed = derive_seed(plan.master_seed, m, s);
        strategies::StrategyConfig config = plan.strategies[s].config;
        config.rng_seed = ep.seed;
        const GridMap& truth = plan.maps[m];
        try {
            auto trace = strategies::run_episode(
                truth, mask, config,
                [&](int round, const geostat::ReconstructedMap& recon, const MeasurementLog&) {
                    ep.timeline.push_back(metrics::evaluate(round, recon.estimate, truth, mask));
                });
            if (plan.keep_traces) ep.trace = std::move(trace);
        } catch (const std::exception& e) {
            ep.error = e.what();
            ep.timeline.clear();
            std::cerr << "episode (map " << m << ", strategy " << plan.strategies[s].label << ") failed: " << e.what()
                      << "\n";
        }
    });

    result.map_sequence.assign(n_strategies, {});
    for (const auto& ep : result.episodes) result.map_sequence[ep.strategy_id].push_back(ep.map_id);
    for (const auto& seq : result.map_sequence) {
        if (seq != result.map_sequence.front()) throw std::logic_error("strategies consumed different map sequences");
    }
    result.table = aggregate(result.episodes, plan);
    return result;
}

AggregateTable aggregate(const std::vector<EpisodeResult>& episodes, const ExperimentPlan& plan) {
    AggregateTable table;
    const std::size_t n_metrics = metrics::metric_names().size();
    for (std::size_t s = 0; s < plan.strategies.size(); ++s) {
        const auto& cfg = plan.strategies[s].config;
        for (double f : plan.milestones) {
            const int round = milestone_round(f, cfg.steps_per_agent());
            std::vector<std::vector<double>> values(n_metrics);
            for (const auto& ep : episodes) {
                if (ep.strategy_id != s || !ep.ok()) continue;
                const auto& point = ep.timeline.at(static_cast<std::size_t>(round));
                for (std::size_t k = 0; k < n_metrics; ++k) values[k].push_back(metrics::metric_value(point, k));
            }
            AggregateRow row;
            row.strategy = plan.strategies[s].label;
            row.agents = cfg.num_agents;
            row.milestone = f;
            row.round = round;
            row.n = values[0].size();
            for (const auto& v : values) row.metric.push_back(stats::describe(v));
            table.push_back(std::move(row));
        }
    }
    return table;
}

void write_aggregate_csv(std::ostream& out, const AggregateTable& table) {
    out << "strategy,agents,milestone,round,n";
    for (const auto& name : metrics::metric_names()) out << ',' << name << "_mean," << name << "_sd";
    out << '\n' << std::setprecision(17);
    for (const auto& row : table) {
        out << row.strategy << ',' << row.agents << ',' << row.milestone << ',' << row.round << ',' << row.n;
        for (const auto& m : row.metric) out << ',' << m.mean << ',' << m.sd;
        out << '\n';
    }
}

AggregateTable read_aggregate_csv(std::istream& in) {
    AggregateTable table;
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty aggregate table");
    const std::size_t n_metrics = metrics::metric_names().size();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream row(line);
        std::string f;
        while (std::getline(row, f, ',')) fields.push_back(f);
        if (fields.size() != 5 + 2 * n_metrics) throw ValidationError("malformed aggregate row: " + line);
        AggregateRow r;
        r.strategy = fields[0];
        r.agents = std::stoi(fields[1]);
        r.milestone = std::stod(fields[2]);
        r.round = std::stoi(fields[3]);
        r.n = static_cast<std::size_t>(std::stoul(fields[4]));
        for (std::size_t k = 0; k < n_metrics; ++k) {
            r.metric.push_back({r.n, std::stod(fields[5 + 2 * k]), std::stod(fields[6 + 2 * k])});
        }
        table.push_back(std::move(r));
    }
    return table;
}

void write_plan_outputs(const std::filesystem::path& dir, const ExperimentPlan& plan, const PlanResult& result) {
    std::filesystem::create_directories(dir / "timelines");
    {
        std::ostringstream agg;
        write_aggregate_csv(agg, result.table);
        io::write_text(dir / "aggregate.csv", agg.str());
    }
    std::ostringstream index;
    index << "strategy,agents,map,seed,status\n";
    for (const auto& ep : result.episodes) {
        const auto& entry = plan.strategies[ep.strategy_id];
        std::ostringstream stem;
        stem << entry.label << "_a" << entry.config.num_agents << "_map_" << std::setw(4) << std::setfill('0')
             << ep.map_id;
        index << entry.label << ',' << entry.config.num_agents << ',' << ep.map_id << ',' << ep.seed << ','
              << (ep.ok() ? "ok" : "error") << '\n';
        if (!ep.ok()) continue;
        std::ostringstream csv;
        metrics::write_timeline_csv(csv, ep.timeline);
        io::write_text(dir / "timelines" / (stem.str() + ".csv"), csv.str());
        if (ep.trace) {
            std::ostringstream jsonl;
            strategies::write_trace_jsonl(jsonl, *ep.trace);
            io::write_text(dir / "traces" / (stem.str() + ".jsonl"), jsonl.str());
        }
    }
    io::write_text(dir / "episodes.csv", index.str());
}

std::vector<ComparisonRow> compare(const AggregateTable& a, const AggregateTable& b, double margin, double alpha) {
    using Key = std::pair<int, double>;
    std::map<Key, const AggregateRow*> b_rows;
    for (const auto& row : b) {
        if (!b_rows.emplace(Key{row.agents, row.milestone}, &row).second) {
            throw ValidationError("duplicate (agents, milestone) row in comparison table");
        }
    }
    if (a.size() != b.size()) throw ValidationError("comparison tables have different shapes");
    std::vector<ComparisonRow> rows;
    std::vector<double> p_values;
    const auto& names = metrics::metric_names();
    for (const auto& ra : a) {
        auto it = b_rows.find(Key{ra.agents, ra.milestone});
        if (it == b_rows.end()) throw ValidationError("comparison tables do not share milestones/agent counts");
        const AggregateRow& rb = *it->second;
        if (ra.metric.size() != names.size() || rb.metric.size() != names.size()) {
            throw ValidationError("comparison tables do not share metrics");
        }
        for (std::size_t k = 0; k < names.size(); ++k) {
            ComparisonRow row;
            row.agents = ra.agents;
            row.milestone = ra.milestone;
            row.metric = names[k];
            row.a = ra.metric[k];
            row.b = rb.metric[k];
            row.p_value = stats::welch_margin_test(row.a, row.b, margin,
                                                   metrics::lower_is_better(k) ? stats::Better::lower
                                                                               : stats::Better::higher);
            p_values.push_back(row.p_value);
            rows.push_back(row);
        }
    }
    const auto reject = stats::bh_adjust(p_values, alpha);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].reject = reject[i];
    return rows;
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    out << "agents,milestone,metric,mean_a,sd_a,mean_b,sd_b,p_value,reject\n" << std::setprecision(17);
    for (const auto& r : rows) {
        out << r.agents << ',' << r.milestone << ',' << r.metric << ',' << r.a.mean << ',' << r.a.sd << ',' << r.b.mean
            << ',' << r.b.sd << ',' << r.p_value << ',' << (r.reject ? 1 : 0) << '\n';
    }
}

void SweepSpec::validate() const {
    if (grid.empty()) throw ValidationError("sweep grid is empty");
    for (double v : grid) {
        if (!(v >= 0.0)) throw ValidationError("sweep grid values must be non-negative");
    }
    for (const auto& key : varied) {
        planner::ScoreWeights probe;
        if (!planner::set_weight(probe, key, 1.0)) throw ValidationError("unknown sweep weight '" + key + "'");
    }
    if (replicates < 1) throw ValidationError("sweep needs at least one replicate");
    if (budget < 1) throw ValidationError("sweep budget must be positive");
    if (!(threshold_min > 0.0 && threshold_max < 1.0 && threshold_min <= threshold_max)) {
        throw ValidationError("threshold range must lie inside (0,1)");
    }
    if (!(curve_power_min > 0.0 && curve_power_min <= curve_power_max)) {
        throw ValidationError("curve power range must be positive");
    }
}

SweepSpec parse_sweep_spec(const std::string& json_text) {
    const auto j = nlohmann::json::parse(json_text);
    SweepSpec s;
    if (j.contains("grid")) s.grid = j["grid"].get<std::vector<double>>();
    if (j.contains("varied")) s.varied = j["varied"].get<std::vector<std::string>>();
    if (j.contains("base")) {
        for (const auto& [key, value] : j["base"].items()) {
            if (!planner::set_weight(s.base, key, value.get<double>())) {
                throw ValidationError("unknown base weight '" + key + "'");
            }
        }
    }
    if (j.contains("replicates")) s.replicates = j["replicates"].get<int>();
    const int rows = j.value("rows", s.spec.rows);
    const int cols = j.value("cols", s.spec.cols);
    s.spec = GridSpec(rows, cols, 1.0);
    s.budget = j.value("budget", s.budget);
    s.hurst = j.value("hurst", s.hurst);
    if (j.contains("threshold_range")) {
        s.threshold_min = j["threshold_range"].at(0).get<double>();
        s.threshold_max = j["threshold_range"].at(1).get<double>();
    }
    if (j.contains("curve_power_range")) {
        s.curve_power_min = j["curve_power_range"].at(0).get<double>();
        s.curve_power_max = j["curve_power_range"].at(1).get<double>();
    }
    s.seed = j.value("seed", s.seed);
    s.parallelism = j.value("parallelism", s.parallelism);
    s.validate();
    return s;
}

std::vector<planner::ScoreWeights> sweep_combinations(const SweepSpec& spec, std::size_t* skipped) {
    spec.validate();
    std::vector<planner::ScoreWeights> out;
    std::size_t n_skipped = 0;
    std::size_t total = 1;
    for (std::size_t k = 0; k < spec.varied.size(); ++k) total *= spec.grid.size();
    for (std::size_t idx = 0; idx < total; ++idx) {
        planner::ScoreWeights w = spec.base;
        std::size_t rest = idx;
        for (std::size_t k = spec.varied.size(); k-- > 0;) {
            planner::set_weight(w, spec.varied[k], spec.grid[rest % spec.grid.size()]);
            rest /= spec.grid.size();
        }
        const double sum = w.expected_value + w.uncertainty + w.prefer_center + w.prefer_closeness +
                           w.prefer_current_goal;
        if (sum > 0.0) out.push_back(w); else ++n_skipped;
    }
    if (skipped) *skipped = n_skipped;
    return out;
}

SweepResult run_sweep(const SweepSpec& spec) {
    SweepResult result;
    const auto combos = sweep_combinations(spec, &result.skipped);
    if (result.skipped > 0) {
        std::cerr << "sweep: skipped " << result.skipped << " combination(s) with all score weights zero\n";
    }

    std::mt19937_64 env_rng(spec.seed);
    std::uniform_real_distribution<double> threshold(spec.threshold_min, spec.threshold_max);
    std::uniform_real_distribution<double> log_power(std::log(spec.curve_power_min), std::log(spec.curve_power_max));
    std::vector<GridMap> envs;
    for (int r = 0; r < spec.replicates; ++r) {
        envgen::SCurveParams sc{threshold(env_rng), std::exp(log_power(env_rng))};
        const std::uint64_t map_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(r), 0xF00D);
        envs.push_back(envgen::apply_scurve(envgen::generate_fbf({spec.hurst, map_seed, spec.spec}), sc));
        result.environments.emplace_back(sc, map_seed);
    }

    const ObstacleMask mask(spec.spec);
    const std::size_t n_env = envs.size();
    std::vector<metrics::MetricPoint> finals(combos.size() * n_env);
    std::vector<char> ok(finals.size(), 0);
    parallel_for(finals.size(), spec.parallelism, [&](std::size_t job) {
        const std::size_t c = job / n_env;
        const std::size_t e = job % n_env;
        strategies::StrategyConfig cfg;
        cfg.kind = strategies::StrategyKind::sbs;
        cfg.weights = combos[c];
        cfg.total_step_budget = spec.budget;
        cfg.num_agents = 1;
        cfg.placement = strategies::Placement::center;
        cfg.rng_seed = derive_seed(spec.seed, e, c);
        const int last = cfg.steps_per_agent();
        try {
            strategies::run_episode(envs[e], mask, cfg,
                                    [&](int round, const geostat::ReconstructedMap& recon, const MeasurementLog&) {
                                        if (round == last) finals[job] = metrics::evaluate(round, recon.estimate, envs[e], mask);
                                    });
            ok[job] = 1;
        } catch (const std::exception& ex) {
            std::cerr << "sweep episode failed: " << ex.what() << "\n";
        }
    });

    for (std::size_t c = 0; c < combos.size(); ++c) {
        SweepRow row;
        row.weights = combos[c];
        for (std::size_t e = 0; e < n_env; ++e) {
            const std::size_t job = c * n_env + e;
            if (!ok[job]) continue;
            row.mean_final_sse += finals[job].sse;
            row.mean_final_ca90 += finals[job].cax[2];
            ++row.episodes;
        }
        if (row.episodes > 0) {
            row.mean_final_sse /= static_cast<double>(row.episodes);
            row.mean_final_ca90 /= static_cast<double>(row.episodes);
        } else {
            row.mean_final_sse = std::numeric_limits<double>::infinity();
        }
        result.rows.push_back(row);
    }
    std::stable_sort(result.rows.begin(), result.rows.end(), [](const SweepRow& x, const SweepRow& y) {
        if (x.mean_final_sse != y.mean_final_sse) return x.mean_final_sse < y.mean_final_sse;
        return x.mean_final_ca90 > y.mean_final_ca90;
    });
    for (std::size_t i = 0; i < result.rows.size(); ++i) result.rows[i].rank = static_cast<int>(i) + 1;
    return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
    out << "rank,weight_expected_value,weight_uncertainty,weight_prefer_center,weight_prefer_closeness,"
           "weight_prefer_current_goal,weight_step_cost,episodes,mean_final_sse,mean_final_ca90\n"
        << std::setprecision(17);
    for (const auto& r : result.rows) {
        const auto& w = r.weights;
        out << r.rank << ',' << w.expected_value << ',' << w.uncertainty << ',' << w.prefer_center << ','
            << w.prefer_closeness << ',' << w.prefer_current_goal << ',' << w.step_cost << ',' << r.episodes << ','
            << r.mean_final_sse << ',' << r.mean_final_ca90 << '\n';
    }
}

}  // namespace sbs::harness
