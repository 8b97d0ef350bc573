#include "msched/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "msched/error.hpp"
#include "msched/log.hpp"

namespace msched {
namespace {

using json = nlohmann::json;

const char* const kColumnNames[7] = {"task_id",     "submit_ms", "cpu_req", "mem_req",
                                     "duration_ms", "priority",  "deadline_ms"};

[[noreturn]] void field_error(std::size_t row, int col, const std::string& value) {
    raise(Errc::parse, "trace csv: row " + std::to_string(row) + ", column " +
                           kColumnNames[col] + ": cannot parse \"" + value + "\"");
}

template <typename T>
T parse_field(const std::string& text, std::size_t row, int col) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) field_error(row, col, text);
    return value;
}

void append_number(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

bool record_is_valid(const TaskRecord& r) {
    if (!std::isfinite(r.cpu_req) || !std::isfinite(r.mem_req)) return false;
    if (r.cpu_req <= 0.0 || r.cpu_req > 1.0) return false;
    if (r.mem_req <= 0.0 || r.mem_req > 1.0) return false;
    if (r.duration_ms <= 0 || r.deadline_ms <= 0) return false;
    if (r.submit_ms < 0) return false;
    if (r.priority < 0 || r.priority >= kPriorityLevels) return false;
    return true;
}

// Log-normal parameterized by target mean/std; std 0 degenerates to the mean.
class LogNormalByMoments {
public:
    LogNormalByMoments(double mean, double stddev) : mean_(mean) {
        if (stddev > 0.0) {
            const double sigma2 = std::log(1.0 + (stddev * stddev) / (mean * mean));
            dist_ = std::lognormal_distribution<double>(std::log(mean) - 0.5 * sigma2,
                                                        std::sqrt(sigma2));
            degenerate_ = false;
        }
    }

    double operator()(std::mt19937_64& rng) { return degenerate_ ? mean_ : dist_(rng); }

private:
    double mean_;
    bool degenerate_ = true;
    std::lognormal_distribution<double> dist_;
};

} // namespace

std::vector<TaskRecord> parse_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io, "trace csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) raise(Errc::parse, "trace csv: empty file, missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceCsvHeader)
        raise(Errc::parse, "trace csv: header mismatch, expected \"" +
                               std::string(kTraceCsvHeader) + "\", got \"" + line + "\"");

    std::vector<TaskRecord> records;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;

        std::string fields[7];
        std::size_t start = 0;
        int col = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                if (col >= 7)
                    raise(Errc::parse,
                          "trace csv: row " + std::to_string(row) + ": more than 7 fields");
                fields[col++] = line.substr(start, i - start);
                start = i + 1;
            }
        }
        if (col != 7)
            raise(Errc::parse, "trace csv: row " + std::to_string(row) + ": expected 7 fields, got " +
                                   std::to_string(col));

        TaskRecord r;
        r.task_id = parse_field<std::int64_t>(fields[0], row, 0);
        r.submit_ms = parse_field<std::int64_t>(fields[1], row, 1);
        r.cpu_req = parse_field<double>(fields[2], row, 2);
        r.mem_req = parse_field<double>(fields[3], row, 3);
        r.duration_ms = parse_field<std::int64_t>(fields[4], row, 4);
        r.priority = parse_field<int>(fields[5], row, 5);
        r.deadline_ms = parse_field<std::int64_t>(fields[6], row, 6);
        records.push_back(r);
    }
    return records;
}

void write_trace_csv(const std::vector<TaskRecord>& records, const std::string& path) {
    std::string out;
    out.reserve(records.size() * 48 + 64);
    out += kTraceCsvHeader;
    out += '\n';
    for (const TaskRecord& r : records) {
        out += std::to_string(r.task_id);
        out += ',';
        out += std::to_string(r.submit_ms);
        out += ',';
        append_number(out, r.cpu_req);
        out += ',';
        append_number(out, r.mem_req);
        out += ',';
        out += std::to_string(r.duration_ms);
        out += ',';
        out += std::to_string(r.priority);
        out += ',';
        out += std::to_string(r.deadline_ms);
        out += '\n';
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) raise(Errc::io, "trace csv: cannot write " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) raise(Errc::io, "trace csv: short write to " + path);
}

CleanResult clean_records(std::vector<TaskRecord> records) {
    CleanResult result;
    result.kept.reserve(records.size());
    std::unordered_set<std::int64_t> seen;
    seen.reserve(records.size());
    for (const TaskRecord& r : records) {
        if (!record_is_valid(r) || !seen.insert(r.task_id).second) {
            ++result.dropped;
            continue;
        }
        result.kept.push_back(r);
    }
    std::stable_sort(result.kept.begin(), result.kept.end(),
                     [](const TaskRecord& a, const TaskRecord& b) { return a.submit_ms < b.submit_ms; });
    if (result.dropped > 0)
        MS_LOG_INFO("clean_records: dropped %zu abnormal record(s)", result.dropped);
    return result;
}

NormalizeResult normalize_units(std::vector<TaskRecord> records, double cpu_scale,
                                double mem_scale) {
    if (!(cpu_scale > 0.0) || !(mem_scale > 0.0))
        raise(Errc::invalid_argument, "normalize_units: scales must be positive");

    NormalizeResult result;
    for (TaskRecord& r : records) {
        r.cpu_req *= cpu_scale;
        if (r.cpu_req > 1.0) {
            r.cpu_req = 1.0;
            ++result.clamp_count;
        }
        r.mem_req *= mem_scale;
        if (r.mem_req > 1.0) {
            r.mem_req = 1.0;
            ++result.clamp_count;
        }
    }
    result.records = std::move(records);
    if (result.clamp_count > 0)
        MS_LOG_INFO("normalize_units: clamped %zu request(s) to 1.0", result.clamp_count);
    return result;
}

std::vector<TraceWindow> segment_windows(const std::vector<TaskRecord>& records,
                                         std::int64_t window_ms) {
    if (window_ms <= 0) raise(Errc::invalid_argument, "segment_windows: window_ms must be positive");

    std::vector<TraceWindow> windows;
    if (records.empty()) return windows;

    const std::int64_t max_submit = records.back().submit_ms;
    const std::size_t count = static_cast<std::size_t>(max_submit / window_ms) + 1;
    windows.resize(count);
    for (std::size_t w = 0; w < count; ++w) {
        windows[w].window_index = w;
        windows[w].start_ms = static_cast<std::int64_t>(w) * window_ms;
        windows[w].end_ms = windows[w].start_ms + window_ms;
    }
    for (const TaskRecord& r : records) {
        windows[static_cast<std::size_t>(r.submit_ms / window_ms)].records.push_back(r);
    }
    return windows;
}

std::vector<TaskRecord> generate_synthetic(const TraceStats& stats, std::int64_t horizon_ms,
                                           std::uint64_t seed, double deadline_factor) {
    if (horizon_ms <= 0) raise(Errc::invalid_argument, "generate_synthetic: horizon_ms must be positive");
    if (!(stats.arrival_rate_per_s > 0.0))
        raise(Errc::invalid_argument, "generate_synthetic: degenerate stats (arrival rate must be positive)");
    if (!(stats.cpu_req_mean > 0.0) || !(stats.mem_req_mean > 0.0) || !(stats.duration_ms_mean > 0.0))
        raise(Errc::invalid_argument, "generate_synthetic: degenerate stats (means must be positive)");
    if (stats.cpu_req_std < 0.0 || stats.mem_req_std < 0.0 || stats.duration_ms_std < 0.0)
        raise(Errc::invalid_argument, "generate_synthetic: negative stddev");
    if (!(deadline_factor > 0.0))
        raise(Errc::invalid_argument, "generate_synthetic: deadline_factor must be positive");

    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> gap_ms(stats.arrival_rate_per_s / 1000.0);
    LogNormalByMoments cpu(stats.cpu_req_mean, stats.cpu_req_std);
    LogNormalByMoments mem(stats.mem_req_mean, stats.mem_req_std);
    LogNormalByMoments dur(stats.duration_ms_mean, stats.duration_ms_std);

    double hist_total = 0.0;
    for (std::uint64_t c : stats.priority_histogram) hist_total += static_cast<double>(c);
    std::vector<double> weights(kPriorityLevels, 1.0);
    if (hist_total > 0.0) {
        for (int i = 0; i < kPriorityLevels; ++i)
            weights[static_cast<std::size_t>(i)] = static_cast<double>(stats.priority_histogram[static_cast<std::size_t>(i)]);
    }
    std::discrete_distribution<int> priority(weights.begin(), weights.end());

    const std::int64_t deadline =
        std::max<std::int64_t>(1, std::llround(deadline_factor * stats.duration_ms_mean));

    std::vector<TaskRecord> records;
    double clock = 0.0;
    std::int64_t next_id = 1;
    for (;;) {
        clock += gap_ms(rng);
        if (clock > static_cast<double>(horizon_ms)) break;
        TaskRecord r;
        r.task_id = next_id++;
        r.submit_ms = static_cast<std::int64_t>(clock);
        r.cpu_req = std::min(cpu(rng), 1.0);
        r.mem_req = std::min(mem(rng), 1.0);
        r.duration_ms = std::max<std::int64_t>(1, std::llround(dur(rng)));
        r.priority = priority(rng);
        r.deadline_ms = deadline;
        records.push_back(r);
    }
    return records;
}

TraceStats compute_stats(const std::vector<TaskRecord>& records) {
    TraceStats stats;
    stats.task_count = records.size();
    if (records.empty()) return stats;

    double cpu_sum = 0, mem_sum = 0, dur_sum = 0;
    std::int64_t min_submit = records.front().submit_ms;
    std::int64_t max_submit = records.front().submit_ms;
    for (const TaskRecord& r : records) {
        cpu_sum += r.cpu_req;
        mem_sum += r.mem_req;
        dur_sum += static_cast<double>(r.duration_ms);
        min_submit = std::min(min_submit, r.submit_ms);
        max_submit = std::max(max_submit, r.submit_ms);
        if (r.priority >= 0 && r.priority < kPriorityLevels)
            ++stats.priority_histogram[static_cast<std::size_t>(r.priority)];
    }
    const double n = static_cast<double>(records.size());
    stats.cpu_req_mean = cpu_sum / n;
    stats.mem_req_mean = mem_sum / n;
    stats.duration_ms_mean = dur_sum / n;

    double cpu_var = 0, mem_var = 0, dur_var = 0;
    for (const TaskRecord& r : records) {
        cpu_var += (r.cpu_req - stats.cpu_req_mean) * (r.cpu_req - stats.cpu_req_mean);
        mem_var += (r.mem_req - stats.mem_req_mean) * (r.mem_req - stats.mem_req_mean);
        const double d = static_cast<double>(r.duration_ms) - stats.duration_ms_mean;
        dur_var += d * d;
    }
    stats.cpu_req_std = std::sqrt(cpu_var / n);
    stats.mem_req_std = std::sqrt(mem_var / n);
    stats.duration_ms_std = std::sqrt(dur_var / n);

    const double span_ms = static_cast<double>(std::max<std::int64_t>(max_submit - min_submit, 1));
    stats.arrival_rate_per_s = n * 1000.0 / span_ms;
    return stats;
}

TraceStats trace_stats_from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        raise(Errc::parse, std::string("trace stats: invalid json: ") + e.what());
    }
    if (!doc.is_object()) raise(Errc::parse, "trace stats: expected a json object");

    static const char* const known[] = {
        "task_count",       "cpu_req_mean", "cpu_req_std",        "mem_req_mean",
        "mem_req_std",      "duration_ms_mean", "duration_ms_std", "arrival_rate_per_s",
        "priority_histogram"};
    for (const auto& [key, _] : doc.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) raise(Errc::parse, "trace stats: unknown key \"" + key + "\"");
    }

    auto need = [&](const char* key) -> const json& {
        auto it = doc.find(key);
        if (it == doc.end()) raise(Errc::parse, std::string("trace stats: missing key \"") + key + "\"");
        if (!it->is_number()) raise(Errc::parse, std::string("trace stats: key \"") + key + "\" must be a number");
        return *it;
    };

    TraceStats stats;
    stats.task_count = need("task_count").get<std::uint64_t>();
    stats.cpu_req_mean = need("cpu_req_mean").get<double>();
    stats.cpu_req_std = need("cpu_req_std").get<double>();
    stats.mem_req_mean = need("mem_req_mean").get<double>();
    stats.mem_req_std = need("mem_req_std").get<double>();
    stats.duration_ms_mean = need("duration_ms_mean").get<double>();
    stats.duration_ms_std = need("duration_ms_std").get<double>();
    stats.arrival_rate_per_s = need("arrival_rate_per_s").get<double>();
    if (auto it = doc.find("priority_histogram"); it != doc.end()) {
        if (!it->is_array() || it->size() != kPriorityLevels)
            raise(Errc::parse, "trace stats: priority_histogram must be an array of 12 counts");
        for (int i = 0; i < kPriorityLevels; ++i)
            stats.priority_histogram[static_cast<std::size_t>(i)] = (*it)[static_cast<std::size_t>(i)].get<std::uint64_t>();
    }
    return stats;
}

std::string trace_stats_to_json_text(const TraceStats& stats) {
    json doc;
    doc["task_count"] = stats.task_count;
    doc["cpu_req_mean"] = stats.cpu_req_mean;
    doc["cpu_req_std"] = stats.cpu_req_std;
    doc["mem_req_mean"] = stats.mem_req_mean;
    doc["mem_req_std"] = stats.mem_req_std;
    doc["duration_ms_mean"] = stats.duration_ms_mean;
    doc["duration_ms_std"] = stats.duration_ms_std;
    doc["arrival_rate_per_s"] = stats.arrival_rate_per_s;
    doc["priority_histogram"] = stats.priority_histogram;
    return doc.dump(2) + "\n";
}

TraceStats load_trace_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io, "trace stats: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return trace_stats_from_json_text(buf.str());
}

} // namespace msched
