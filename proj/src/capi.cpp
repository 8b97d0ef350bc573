#include "msched.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "msched/bench.hpp"
#include "msched/config.hpp"
#include "msched/error.hpp"
#include "msched/nn.hpp"
#include "msched/simenv.hpp"
#include "msched/trace.hpp"

using namespace msched;

struct ms_trace {
    std::vector<TaskRecord> records;
};

struct ms_sim {
    Simulator sim;
    Observation current;

    explicit ms_sim(ClusterConfig config) : sim(std::move(config)) {}
};

namespace {

thread_local std::string g_last_error;

ms_status status_of(Errc code) {
    switch (code) {
    case Errc::invalid_argument: return MS_ERR_INVALID_ARGUMENT;
    case Errc::io: return MS_ERR_IO;
    case Errc::parse: return MS_ERR_PARSE;
    case Errc::config: return MS_ERR_CONFIG;
    case Errc::state: return MS_ERR_STATE;
    case Errc::runtime: return MS_ERR_RUNTIME;
    }
    return MS_ERR_RUNTIME;
}

template <typename Fn>
ms_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return MS_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return MS_ERR_RUNTIME;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MS_ERR_RUNTIME;
    }
}

ms_status fail_invalid(const char* message) {
    g_last_error = message;
    return MS_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::io, "cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) raise(Errc::io, "short write to " + path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) raise(Errc::io, "cannot create directory " + dir + ": " + ec.message());
}

TraceWindow pick_window(const std::vector<TaskRecord>& records, std::int64_t window_ms,
                        std::uint32_t index) {
    std::vector<TaskRecord> sorted = records;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const TaskRecord& a, const TaskRecord& b) { return a.submit_ms < b.submit_ms; });
    std::vector<TraceWindow> windows = segment_windows(sorted, window_ms);
    if (index >= windows.size())
        raise(Errc::invalid_argument,
              "window index " + std::to_string(index) + " out of range (trace has " +
                  std::to_string(windows.size()) + " windows)");
    if (windows[index].records.empty())
        raise(Errc::invalid_argument, "window " + std::to_string(index) + " contains no tasks");
    return std::move(windows[index]);
}

} // namespace

extern "C" {

const char* ms_status_name(ms_status status) {
    switch (status) {
    case MS_OK: return "ok";
    case MS_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MS_ERR_IO: return "io_error";
    case MS_ERR_PARSE: return "parse_error";
    case MS_ERR_CONFIG: return "config_error";
    case MS_ERR_STATE: return "state_error";
    case MS_ERR_RUNTIME: return "runtime_error";
    }
    return "unknown";
}

const char* ms_last_error(void) { return g_last_error.c_str(); }

const char* ms_version(void) { return "0.1.0"; }

void ms_string_free(char* s) { std::free(s); }

ms_status ms_trace_load_csv(const char* path, ms_trace** out_trace) {
    if (!path || !out_trace) return fail_invalid("ms_trace_load_csv: null argument");
    return guarded([&] {
        auto trace = std::make_unique<ms_trace>();
        trace->records = parse_trace_csv(path);
        *out_trace = trace.release();
    });
}

ms_status ms_trace_generate(const char* stats_json, int64_t horizon_ms, double deadline_factor,
                            uint64_t seed, ms_trace** out_trace) {
    if (!stats_json || !out_trace) return fail_invalid("ms_trace_generate: null argument");
    return guarded([&] {
        const TraceStats stats = trace_stats_from_json_text(stats_json);
        auto trace = std::make_unique<ms_trace>();
        trace->records = generate_synthetic(stats, horizon_ms, seed, deadline_factor);
        *out_trace = trace.release();
    });
}

ms_status ms_trace_clean(ms_trace* trace, size_t* out_dropped) {
    if (!trace) return fail_invalid("ms_trace_clean: null trace");
    return guarded([&] {
        CleanResult result = clean_records(std::move(trace->records));
        trace->records = std::move(result.kept);
        if (out_dropped) *out_dropped = result.dropped;
    });
}

ms_status ms_trace_normalize(ms_trace* trace, double cpu_scale, double mem_scale,
                             size_t* out_clamped) {
    if (!trace) return fail_invalid("ms_trace_normalize: null trace");
    return guarded([&] {
        NormalizeResult result = normalize_units(std::move(trace->records), cpu_scale, mem_scale);
        trace->records = std::move(result.records);
        if (out_clamped) *out_clamped = result.clamp_count;
    });
}

ms_status ms_trace_save_csv(const ms_trace* trace, const char* path) {
    if (!trace || !path) return fail_invalid("ms_trace_save_csv: null argument");
    return guarded([&] { write_trace_csv(trace->records, path); });
}

size_t ms_trace_task_count(const ms_trace* trace) { return trace ? trace->records.size() : 0; }

ms_status ms_trace_stats_json(const ms_trace* trace, char** out_json) {
    if (!trace || !out_json) return fail_invalid("ms_trace_stats_json: null argument");
    return guarded([&] { *out_json = dup_string(trace_stats_to_json_text(compute_stats(trace->records))); });
}

void ms_trace_free(ms_trace* trace) { delete trace; }

ms_status ms_sim_create(const char* cluster_json, const ms_trace* trace, int64_t window_ms,
                        uint32_t window_index, uint64_t seed, ms_sim** out_sim) {
    if (!cluster_json || !trace || !out_sim) return fail_invalid("ms_sim_create: null argument");
    return guarded([&] {
        ClusterConfig config = cluster_from_json_text(cluster_json);
        TraceWindow window = pick_window(trace->records, window_ms, window_index);
        auto sim = std::make_unique<ms_sim>(std::move(config));
        sim->current = sim->sim.reset(std::move(window), seed);
        *out_sim = sim.release();
    });
}

int32_t ms_sim_observation_size(const ms_sim* sim) {
    return sim ? sim->sim.observation_size() : 0;
}

int32_t ms_sim_action_count(const ms_sim* sim) { return sim ? sim->sim.action_count() : 0; }

ms_status ms_sim_observe(const ms_sim* sim, double* buffer, size_t len) {
    if (!sim || !buffer) return fail_invalid("ms_sim_observe: null argument");
    return guarded([&] {
        if (sim->sim.done()) raise(Errc::state, "ms_sim_observe: episode finished");
        if (len != sim->current.size())
            raise(Errc::invalid_argument, "ms_sim_observe: buffer length mismatch");
        std::memcpy(buffer, sim->current.data(), len * sizeof(double));
    });
}

ms_status ms_sim_step(ms_sim* sim, int32_t action, double* out_reward, int32_t* out_done) {
    if (!sim) return fail_invalid("ms_sim_step: null sim");
    return guarded([&] {
        StepOutcome out = sim->sim.step(Action{action});
        sim->current = std::move(out.next_obs);
        if (out_reward) *out_reward = out.reward;
        if (out_done) *out_done = out.done ? 1 : 0;
    });
}

ms_status ms_sim_utilization(const ms_sim* sim, double* per_node, size_t len, double* out_mean) {
    if (!sim) return fail_invalid("ms_sim_utilization: null sim");
    return guarded([&] {
        const UtilizationSnapshot snap = sim->sim.utilization();
        if (per_node) {
            if (len != snap.cpu_used.size())
                raise(Errc::invalid_argument, "ms_sim_utilization: buffer length mismatch");
            std::memcpy(per_node, snap.cpu_used.data(), len * sizeof(double));
        }
        if (out_mean) *out_mean = snap.mean;
    });
}

ms_status ms_sim_episode_csv(const ms_sim* sim, char** out_csv) {
    if (!sim || !out_csv) return fail_invalid("ms_sim_episode_csv: null argument");
    return guarded([&] { *out_csv = dup_string(sim->sim.episode_csv()); });
}

void ms_sim_free(ms_sim* sim) { delete sim; }

ms_status ms_run_gen_trace(const char* stats_path, int64_t horizon_ms, double deadline_factor,
                           uint64_t seed, const char* out_csv, size_t* out_task_count) {
    if (!stats_path || !out_csv) return fail_invalid("ms_run_gen_trace: null argument");
    return guarded([&] {
        const TraceStats stats = load_trace_stats(stats_path);
        const std::vector<TaskRecord> records =
            generate_synthetic(stats, horizon_ms, seed, deadline_factor);
        write_trace_csv(records, out_csv);
        if (out_task_count) *out_task_count = records.size();
    });
}

ms_status ms_run_train(const char* config_path, const char* strategy, const char* out_dir) {
    if (!config_path || !strategy || !out_dir) return fail_invalid("ms_run_train: null argument");
    return guarded([&] {
        const RunConfig rc = load_run_config(config_path);
        const std::string name = strategy;

        bool known = false;
        for (const std::string& k : known_strategies()) known = known || k == name;
        if (!known) {
            std::string valid;
            for (const std::string& k : known_strategies()) {
                if (!valid.empty()) valid += ", ";
                valid += k;
            }
            raise(Errc::invalid_argument, "unknown strategy \"" + name + "\"; valid: " + valid);
        }
        if (!strategy_is_learning(name))
            raise(Errc::invalid_argument, "strategy has no training phase: " + name);

        const PreparedTrace prepared = prepare_trace(rc.experiment);
        const TrainedPolicy policy =
            train_strategy(rc.experiment, name, rc.seed, prepared.train_windows);

        ensure_dir(out_dir);
        const std::string dir(out_dir);
        write_text_file(dir + "/train_log.csv", training_log_csv(policy.log));
        if (!policy.log.empty())
            write_text_file(dir + "/loss_curve.csv", loss_curve_csv(policy.log));

        if (auto* net = dynamic_cast<const GreedyNetScheduler*>(policy.scheduler.get())) {
            save_checkpoint(net->net(), dir + "/checkpoint");
        } else if (auto* table = dynamic_cast<const QTableScheduler*>(policy.scheduler.get())) {
            save_qtable(table->table(), dir + "/qtable.json");
        }
    });
}

ms_status ms_run_compare(const char* config_path, const char* out_dir) {
    if (!config_path || !out_dir) return fail_invalid("ms_run_compare: null argument");
    return guarded([&] {
        const RunConfig rc = load_run_config(config_path);
        const ComparisonResult result = run_comparison(rc.experiment);

        ensure_dir(out_dir);
        const std::string dir(out_dir);
        write_text_file(dir + "/report.json", report_to_json(result.report));
        write_text_file(dir + "/table.txt", report_to_table(result.report));

        ensure_dir(dir + "/logs");
        for (const TrainedPolicy& policy : result.policies) {
            if (policy.log.empty()) continue;
            const std::string stem =
                policy.strategy + "_seed" + std::to_string(policy.seed);
            write_text_file(dir + "/logs/" + stem + ".csv", training_log_csv(policy.log));
            write_text_file(dir + "/logs/loss_curve_" + stem + ".csv", loss_curve_csv(policy.log));
        }
    });
}

ms_status ms_run_stability(const char* config_path, const char* out_dir) {
    if (!config_path || !out_dir) return fail_invalid("ms_run_stability: null argument");
    return guarded([&] {
        const RunConfig rc = load_run_config(config_path);
        const StabilitySeries series =
            stability_study(rc.experiment, rc.experiment.load_multipliers);
        ensure_dir(out_dir);
        write_text_file(std::string(out_dir) + "/stability.csv", stability_csv(series));
    });
}

ms_status ms_run_gradcheck(uint64_t seed, int32_t cases, double* out_max_rel_error) {
    if (!out_max_rel_error) return fail_invalid("ms_run_gradcheck: null output");
    return guarded([&] {
        const GradCheckResult result = gradient_check(seed, cases);
        *out_max_rel_error = result.max_rel_error;
    });
}

} // extern "C"
