#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace msched {

/// One unit of work. Resource requests are fractions of a single node's
/// capacity; all times are milliseconds relative to the trace start.
struct TaskRecord {
    std::int64_t task_id = 0;
    std::int64_t submit_ms = 0;
    double cpu_req = 0.0;       // in (0, 1]
    double mem_req = 0.0;       // in (0, 1]
    std::int64_t duration_ms = 0;
    int priority = 0;           // in [0, 11]
    std::int64_t deadline_ms = 0; // max tolerated queueing delay
};

inline constexpr int kPriorityLevels = 12;

/// Summary statistics of a trace; also the calibration target for synthesis.
struct TraceStats {
    std::uint64_t task_count = 0;
    double cpu_req_mean = 0.0;
    double cpu_req_std = 0.0;
    double mem_req_mean = 0.0;
    double mem_req_std = 0.0;
    double duration_ms_mean = 0.0;
    double duration_ms_std = 0.0;
    double arrival_rate_per_s = 0.0;
    std::array<std::uint64_t, kPriorityLevels> priority_histogram{};
};

/// Half-open slice [start_ms, end_ms) of a trace. Consecutive windows
/// partition the horizon; every record lands in exactly one window.
struct TraceWindow {
    std::size_t window_index = 0;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    std::vector<TaskRecord> records;
};

inline constexpr const char* kTraceCsvHeader =
    "task_id,submit_ms,cpu_req,mem_req,duration_ms,priority,deadline_ms";

/// Reads a trace CSV (header must match kTraceCsvHeader exactly). Records are
/// returned in file order; any malformed field raises Errc::parse naming the
/// offending row and column. Missing file raises Errc::io.
std::vector<TaskRecord> parse_trace_csv(const std::string& path);

/// Writes records in the same CSV schema. Round-trips through
/// parse_trace_csv exactly.
void write_trace_csv(const std::vector<TaskRecord>& records, const std::string& path);

struct CleanResult {
    std::vector<TaskRecord> kept; // sorted by submit_ms (stable)
    std::size_t dropped = 0;
};

/// Drops abnormal records instead of repairing them: non-finite fields,
/// cpu/mem outside (0,1], non-positive duration or deadline, negative
/// submit time, priority outside [0,11], and duplicate task ids (first
/// occurrence wins). Idempotent.
CleanResult clean_records(std::vector<TaskRecord> records);

struct NormalizeResult {
    std::vector<TaskRecord> records;
    std::size_t clamp_count = 0; // requests that hit the 1.0 ceiling
};

/// Rescales resource requests by the given factors, clamping results into
/// (0,1]. Scales must be positive.
NormalizeResult normalize_units(std::vector<TaskRecord> records, double cpu_scale,
                                double mem_scale);

/// Splits records (already sorted by submit_ms) into fixed-width windows
/// covering [0, max submit_ms]. Interior empty windows are kept so the
/// horizon stays partitioned; trailing empty windows are omitted.
std::vector<TraceWindow> segment_windows(const std::vector<TaskRecord>& records,
                                         std::int64_t window_ms);

/// Synthesizes a trace calibrated to `stats`: Poisson arrivals at
/// arrival_rate_per_s, log-normal cpu/mem/duration matched to the given
/// mean/std, priorities drawn from the histogram, deadline_ms =
/// deadline_factor * duration mean. Pure function of its arguments.
std::vector<TaskRecord> generate_synthetic(const TraceStats& stats, std::int64_t horizon_ms,
                                           std::uint64_t seed, double deadline_factor = 4.0);

/// Measures stats over a clean trace (arrival rate over the submit span).
TraceStats compute_stats(const std::vector<TaskRecord>& records);

TraceStats trace_stats_from_json_text(const std::string& text);
std::string trace_stats_to_json_text(const TraceStats& stats);

/// Loads stats from a JSON file (see trace_stats_from_json_text for schema).
TraceStats load_trace_stats(const std::string& path);

} // namespace msched
