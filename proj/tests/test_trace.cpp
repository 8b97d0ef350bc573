#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "msched/error.hpp"
#include "msched/trace.hpp"

using namespace msched;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

TaskRecord make_record(std::int64_t id, std::int64_t submit, double cpu = 0.25, double mem = 0.1,
                       std::int64_t duration = 500, int priority = 3,
                       std::int64_t deadline = 1000) {
    return TaskRecord{id, submit, cpu, mem, duration, priority, deadline};
}

} // namespace

TEST_CASE("parse: empty file with valid header gives empty list") {
    const std::string path = temp_path("msched_empty.csv");
    write_file(path, std::string(kTraceCsvHeader) + "\n");
    CHECK(parse_trace_csv(path).empty());
}

TEST_CASE("parse: single row maps fields directly") {
    const std::string path = temp_path("msched_one.csv");
    write_file(path, std::string(kTraceCsvHeader) + "\n1,0,0.25,0.10,500,3,1000\n");
    const auto records = parse_trace_csv(path);
    REQUIRE(records.size() == 1);
    CHECK(records[0].task_id == 1);
    CHECK(records[0].submit_ms == 0);
    CHECK(records[0].cpu_req == doctest::Approx(0.25));
    CHECK(records[0].mem_req == doctest::Approx(0.10));
    CHECK(records[0].duration_ms == 500);
    CHECK(records[0].priority == 3);
    CHECK(records[0].deadline_ms == 1000);
}

TEST_CASE("parse: bad field names row and column") {
    const std::string path = temp_path("msched_bad.csv");
    write_file(path, std::string(kTraceCsvHeader) + "\n1,0,abc,0.10,500,3,1000\n");
    try {
        parse_trace_csv(path);
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::parse);
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
        CHECK(std::string(e.what()).find("cpu_req") != std::string::npos);
    }
}

TEST_CASE("parse: missing file and header mismatch") {
    CHECK_THROWS_AS(parse_trace_csv(temp_path("msched_does_not_exist.csv")), Error);

    const std::string path = temp_path("msched_badheader.csv");
    write_file(path, "task,submit\n");
    try {
        parse_trace_csv(path);
        FAIL("expected header error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::parse);
    }
}

TEST_CASE("csv round trip") {
    std::vector<TaskRecord> records = {make_record(1, 0, 0.1), make_record(2, 100, 0.37521),
                                       make_record(3, 250, 1.0, 0.999)};
    const std::string path = temp_path("msched_rt.csv");
    write_trace_csv(records, path);
    const auto back = parse_trace_csv(path);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].task_id == records[i].task_id);
        CHECK(back[i].cpu_req == records[i].cpu_req); // exact
        CHECK(back[i].mem_req == records[i].mem_req);
    }
}

TEST_CASE("clean: all-valid input is untouched") {
    std::vector<TaskRecord> records;
    for (int i = 0; i < 5; ++i) records.push_back(make_record(i, i * 10));
    const auto result = clean_records(records);
    CHECK(result.kept.size() == 5);
    CHECK(result.dropped == 0);
}

TEST_CASE("clean: drops cpu_req outside (0,1]") {
    std::vector<TaskRecord> records = {make_record(1, 0), make_record(2, 10, 1.7),
                                       make_record(3, 20)};
    const auto result = clean_records(records);
    CHECK(result.kept.size() == 2);
    CHECK(result.dropped == 1);
}

TEST_CASE("clean: sorts by submit_ms") {
    std::vector<TaskRecord> records = {make_record(1, 300), make_record(2, 100),
                                       make_record(3, 200)};
    const auto result = clean_records(records);
    REQUIRE(result.kept.size() == 3);
    CHECK(result.kept[0].submit_ms == 100);
    CHECK(result.kept[1].submit_ms == 200);
    CHECK(result.kept[2].submit_ms == 300);
}

TEST_CASE("clean: drops non-finite, bad deadline, duplicate ids") {
    std::vector<TaskRecord> records = {
        make_record(1, 0),
        make_record(2, 10, std::nan("")),
        make_record(3, 20, 0.5, 0.5, -5),
        make_record(4, 30, 0.5, 0.5, 100, 3, 0),
        make_record(1, 40), // duplicate id
        make_record(5, 50, 0.5, 0.5, 100, 11),
    };
    const auto result = clean_records(records);
    CHECK(result.kept.size() == 2);
    CHECK(result.dropped == 4);
}

TEST_CASE("clean is idempotent") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 1.5);
    std::vector<TaskRecord> records;
    for (int i = 0; i < 200; ++i)
        records.push_back(make_record(i % 150, i * 3 % 997, u(rng), u(rng), (i % 7) - 1));
    const auto once = clean_records(records);
    const auto twice = clean_records(once.kept);
    CHECK(twice.dropped == 0);
    REQUIRE(twice.kept.size() == once.kept.size());
    for (std::size_t i = 0; i < once.kept.size(); ++i)
        CHECK(twice.kept[i].task_id == once.kept[i].task_id);
}

TEST_CASE("normalize: identity scales") {
    std::vector<TaskRecord> records = {make_record(1, 0, 0.5, 0.25)};
    const auto result = normalize_units(records, 1.0, 1.0);
    CHECK(result.records[0].cpu_req == 0.5);
    CHECK(result.records[0].mem_req == 0.25);
    CHECK(result.clamp_count == 0);
}

TEST_CASE("normalize: scales multiply") {
    std::vector<TaskRecord> records = {make_record(1, 0, 0.5, 0.4)};
    const auto result = normalize_units(records, 0.5, 1.0);
    CHECK(result.records[0].cpu_req == doctest::Approx(0.25));
}

TEST_CASE("normalize: clamps to 1.0 and counts") {
    std::vector<TaskRecord> records = {make_record(1, 0, 0.9, 0.2)};
    const auto result = normalize_units(records, 2.0, 1.0);
    CHECK(result.records[0].cpu_req == 1.0);
    CHECK(result.clamp_count == 1);
}

TEST_CASE("normalize: rejects non-positive scale") {
    std::vector<TaskRecord> records = {make_record(1, 0)};
    CHECK_THROWS_AS(normalize_units(records, 0.0, 1.0), Error);
    CHECK_THROWS_AS(normalize_units(records, 1.0, -2.0), Error);
}

TEST_CASE("segment: floor(t/window) assignment") {
    std::vector<TaskRecord> records = {make_record(1, 0), make_record(2, 100),
                                       make_record(3, 250)};
    const auto windows = segment_windows(records, 200);
    REQUIRE(windows.size() == 2);
    CHECK(windows[0].records.size() == 2);
    CHECK(windows[1].records.size() == 1);
    CHECK(windows[0].start_ms == 0);
    CHECK(windows[0].end_ms == 200);
    CHECK(windows[1].start_ms == 200);
}

TEST_CASE("segment: single record, empty input") {
    CHECK(segment_windows({make_record(1, 0)}, 1000).size() == 1);
    CHECK(segment_windows({}, 1000).empty());
}

TEST_CASE("segment: interior empty windows kept, count preserved") {
    std::vector<TaskRecord> records = {make_record(1, 0), make_record(2, 450)};
    const auto windows = segment_windows(records, 200);
    REQUIRE(windows.size() == 3);
    CHECK(windows[1].records.empty());
    std::size_t total = 0;
    for (const auto& w : windows) total += w.records.size();
    CHECK(total == records.size());
}

TEST_CASE("segment: every record lands inside its window bounds") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::int64_t> t(0, 10000);
    std::vector<TaskRecord> records;
    for (int i = 0; i < 500; ++i) records.push_back(make_record(i, t(rng)));
    auto cleaned = clean_records(records).kept;
    const auto windows = segment_windows(cleaned, 700);
    std::size_t total = 0;
    for (const auto& w : windows) {
        for (const auto& r : w.records) {
            CHECK(r.submit_ms >= w.start_ms);
            CHECK(r.submit_ms < w.end_ms);
        }
        total += w.records.size();
    }
    CHECK(total == cleaned.size());
}

namespace {

TraceStats demo_stats() {
    TraceStats stats;
    stats.task_count = 1000;
    stats.cpu_req_mean = 0.3;
    stats.cpu_req_std = 0.15;
    stats.mem_req_mean = 0.25;
    stats.mem_req_std = 0.1;
    stats.duration_ms_mean = 2000;
    stats.duration_ms_std = 1000;
    stats.arrival_rate_per_s = 10.0;
    stats.priority_histogram = {400, 200, 100, 50, 50, 50, 50, 40, 30, 20, 5, 5};
    return stats;
}

} // namespace

TEST_CASE("generate: deterministic per seed") {
    const auto stats = demo_stats();
    const auto a = generate_synthetic(stats, 60000, 42);
    const auto b = generate_synthetic(stats, 60000, 42);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].submit_ms == b[i].submit_ms);
        CHECK(a[i].cpu_req == b[i].cpu_req);
        CHECK(a[i].duration_ms == b[i].duration_ms);
        CHECK(a[i].priority == b[i].priority);
    }
    const auto c = generate_synthetic(stats, 60000, 43);
    CHECK(a.size() != c.size()); // overwhelmingly likely under a different seed
}

TEST_CASE("generate: Poisson arrival count within 3 standard errors") {
    // rate 10/s over 100 s: mean 1000, var 1000 per draw.
    auto stats = demo_stats();
    stats.arrival_rate_per_s = 10.0;
    const int seeds = 20;
    double total = 0;
    for (int s = 0; s < seeds; ++s)
        total += static_cast<double>(generate_synthetic(stats, 100000, 100 + s).size());
    const double mean_count = total / seeds;
    const double se = std::sqrt(1000.0 / seeds);
    CHECK(std::abs(mean_count - 1000.0) < 3.0 * se);
}

TEST_CASE("generate: empirical cpu mean within 5% of target") {
    auto stats = demo_stats();
    stats.arrival_rate_per_s = 100.0;
    const auto records = generate_synthetic(stats, 100000, 7); // ~10^4 tasks
    REQUIRE(records.size() > 5000);
    double sum = 0;
    for (const auto& r : records) sum += r.cpu_req;
    const double mean = sum / static_cast<double>(records.size());
    // Upper clamp at 1.0 shaves a little mass off the right tail.
    CHECK(std::abs(mean - stats.cpu_req_mean) < 0.05 * stats.cpu_req_mean);
}

TEST_CASE("generate: records are valid and sorted, ids unique") {
    const auto records = generate_synthetic(demo_stats(), 30000, 3);
    REQUIRE(!records.empty());
    std::set<std::int64_t> ids;
    std::int64_t prev = 0;
    for (const auto& r : records) {
        CHECK(r.cpu_req > 0.0);
        CHECK(r.cpu_req <= 1.0);
        CHECK(r.mem_req > 0.0);
        CHECK(r.mem_req <= 1.0);
        CHECK(r.duration_ms > 0);
        CHECK(r.deadline_ms == 8000); // 4 x mean duration
        CHECK(r.priority >= 0);
        CHECK(r.priority <= 11);
        CHECK(r.submit_ms >= prev);
        prev = r.submit_ms;
        ids.insert(r.task_id);
    }
    CHECK(ids.size() == records.size());
    CHECK(clean_records(records).dropped == 0);
}

TEST_CASE("generate: degenerate stats rejected") {
    auto stats = demo_stats();
    stats.arrival_rate_per_s = 0.0;
    CHECK_THROWS_AS(generate_synthetic(stats, 1000, 1), Error);
    stats = demo_stats();
    CHECK_THROWS_AS(generate_synthetic(stats, 0, 1), Error);
    stats.cpu_req_mean = -1;
    CHECK_THROWS_AS(generate_synthetic(stats, 1000, 1), Error);
}

TEST_CASE("stats json round trip") {
    const auto stats = demo_stats();
    const std::string text = trace_stats_to_json_text(stats);
    const auto back = trace_stats_from_json_text(text);
    CHECK(back.task_count == stats.task_count);
    CHECK(back.cpu_req_mean == stats.cpu_req_mean);
    CHECK(back.arrival_rate_per_s == stats.arrival_rate_per_s);
    CHECK(back.priority_histogram == stats.priority_histogram);
}

TEST_CASE("stats json rejects unknown keys") {
    CHECK_THROWS_AS(trace_stats_from_json_text("{\"task_count\":1,\"bogus\":2}"), Error);
}

TEST_CASE("compute_stats matches the generating distribution loosely") {
    auto stats = demo_stats();
    stats.arrival_rate_per_s = 50.0;
    const auto records = generate_synthetic(stats, 100000, 5);
    const auto measured = compute_stats(records);
    CHECK(measured.task_count == records.size());
    CHECK(std::abs(measured.cpu_req_mean - stats.cpu_req_mean) < 0.05);
    CHECK(std::abs(measured.arrival_rate_per_s - 50.0) < 5.0);
    std::uint64_t hist_total = 0;
    for (auto c : measured.priority_histogram) hist_total += c;
    CHECK(hist_total == measured.task_count);
}
