#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "msched.h"

namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

const char* kStatsJson = R"({
  "task_count": 200,
  "cpu_req_mean": 0.3, "cpu_req_std": 0.12,
  "mem_req_mean": 0.25, "mem_req_std": 0.1,
  "duration_ms_mean": 400, "duration_ms_std": 150,
  "arrival_rate_per_s": 25.0,
  "priority_histogram": [50,40,30,20,15,10,10,10,5,5,3,2]
})";

std::string write_tiny_config() {
    const std::string path = temp_path("msched_capi_config.json");
    std::ofstream out(path);
    out << R"({
      "seed": 3,
      "cluster": { "node_count": 3, "max_queue_len": 4 },
      "hyper": { "hidden_sizes": [8, 8], "total_steps": 400, "updates_per_epoch": 10,
                 "n_step": 5 },
      "dqn": { "batch_size": 8, "replay_capacity": 256, "target_sync_period": 50,
               "train_frequency": 4 },
      "trace": { "synthetic": { "stats": )" +
               std::string(kStatsJson) + R"(, "horizon_ms": 8000, "seed": 11 } },
      "window_ms": 2000,
      "experiment": { "strategies": ["qlearning", "priority", "round_robin"],
                      "seeds": [1], "eval_episode_count": 1,
                      "load_multipliers": [1.0], "stability_horizon_ms": 3000 }
    })";
    return path;
}

} // namespace

TEST_CASE("status names and version") {
    CHECK(std::strcmp(ms_status_name(MS_OK), "ok") == 0);
    CHECK(std::strcmp(ms_status_name(MS_ERR_CONFIG), "config_error") == 0);
    CHECK(ms_version() != nullptr);
}

TEST_CASE("null arguments are rejected with a message") {
    CHECK(ms_trace_load_csv(nullptr, nullptr) == MS_ERR_INVALID_ARGUMENT);
    CHECK(std::strlen(ms_last_error()) > 0);
    CHECK(ms_sim_step(nullptr, 0, nullptr, nullptr) == MS_ERR_INVALID_ARGUMENT);
    CHECK(ms_run_gradcheck(1, 10, nullptr) == MS_ERR_INVALID_ARGUMENT);
}

TEST_CASE("trace generate, save, load, clean, normalize round trip") {
    ms_trace* trace = nullptr;
    REQUIRE(ms_trace_generate(kStatsJson, 20000, 4.0, 7, &trace) == MS_OK);
    REQUIRE(trace != nullptr);
    const size_t count = ms_trace_task_count(trace);
    CHECK(count > 100);

    const std::string csv_path = temp_path("msched_capi_trace.csv");
    CHECK(ms_trace_save_csv(trace, csv_path.c_str()) == MS_OK);

    ms_trace* loaded = nullptr;
    REQUIRE(ms_trace_load_csv(csv_path.c_str(), &loaded) == MS_OK);
    CHECK(ms_trace_task_count(loaded) == count);

    size_t dropped = 99;
    CHECK(ms_trace_clean(loaded, &dropped) == MS_OK);
    CHECK(dropped == 0); // synthetic traces are valid by construction

    size_t clamped = 0;
    CHECK(ms_trace_normalize(loaded, 2.0, 1.0, &clamped) == MS_OK);
    CHECK(clamped > 0); // doubling cpu pushes some requests into the ceiling

    char* stats_json = nullptr;
    REQUIRE(ms_trace_stats_json(loaded, &stats_json) == MS_OK);
    CHECK(std::string(stats_json).find("arrival_rate_per_s") != std::string::npos);
    ms_string_free(stats_json);

    ms_trace_free(loaded);
    ms_trace_free(trace);
}

TEST_CASE("trace generation is deterministic per seed") {
    const std::string a_path = temp_path("msched_capi_a.csv");
    const std::string b_path = temp_path("msched_capi_b.csv");
    for (const std::string& p : {a_path, b_path}) {
        ms_trace* t = nullptr;
        REQUIRE(ms_trace_generate(kStatsJson, 10000, 4.0, 99, &t) == MS_OK);
        REQUIRE(ms_trace_save_csv(t, p.c_str()) == MS_OK);
        ms_trace_free(t);
    }
    CHECK(slurp(a_path) == slurp(b_path));
}

TEST_CASE("bad stats json reports a parse error") {
    ms_trace* trace = nullptr;
    CHECK(ms_trace_generate("{\"nope\":1}", 1000, 4.0, 1, &trace) == MS_ERR_PARSE);
    CHECK(trace == nullptr);
}

TEST_CASE("simulator episode through the C surface") {
    ms_trace* trace = nullptr;
    REQUIRE(ms_trace_generate(kStatsJson, 10000, 4.0, 5, &trace) == MS_OK);

    ms_sim* sim = nullptr;
    REQUIRE(ms_sim_create(R"({"node_count":4,"max_queue_len":4})", trace, 5000, 0, 1, &sim) ==
            MS_OK);
    const int32_t obs_size = ms_sim_observation_size(sim);
    CHECK(obs_size == 3 * 4 + 4);
    CHECK(ms_sim_action_count(sim) == 4);

    std::vector<double> obs(static_cast<size_t>(obs_size));
    REQUIRE(ms_sim_observe(sim, obs.data(), obs.size()) == MS_OK);
    for (double v : obs) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(ms_sim_observe(sim, obs.data(), 3) == MS_ERR_INVALID_ARGUMENT);

    int32_t done = 0;
    int steps = 0;
    while (!done) {
        double reward = 0.0;
        REQUIRE(ms_sim_step(sim, steps % 4, &reward, &done) == MS_OK);
        CHECK(reward <= 1.0);
        ++steps;
        if (!done) REQUIRE(ms_sim_observe(sim, obs.data(), obs.size()) == MS_OK);
    }
    CHECK(steps > 10);
    CHECK(ms_sim_step(sim, 0, nullptr, nullptr) == MS_ERR_STATE);

    double mean = -1.0;
    std::vector<double> per_node(4);
    CHECK(ms_sim_utilization(sim, per_node.data(), per_node.size(), &mean) == MS_OK);
    CHECK(mean == 0.0); // drained

    char* csv = nullptr;
    REQUIRE(ms_sim_episode_csv(sim, &csv) == MS_OK);
    CHECK(std::string(csv).rfind("task_id,node,", 0) == 0);
    ms_string_free(csv);

    ms_sim_free(sim);
    ms_trace_free(trace);
}

TEST_CASE("sim creation rejects bad windows and bad cluster json") {
    ms_trace* trace = nullptr;
    REQUIRE(ms_trace_generate(kStatsJson, 3000, 4.0, 5, &trace) == MS_OK);
    ms_sim* sim = nullptr;
    CHECK(ms_sim_create(R"({"node_count":4})", trace, 1000, 99, 1, &sim) ==
          MS_ERR_INVALID_ARGUMENT);
    CHECK(ms_sim_create(R"({"node_cnt":4})", trace, 1000, 0, 1, &sim) == MS_ERR_CONFIG);
    ms_trace_free(trace);
}

TEST_CASE("gradcheck passes through the C surface") {
    double max_rel = 1.0;
    REQUIRE(ms_run_gradcheck(1234, 25, &max_rel) == MS_OK);
    CHECK(max_rel < 1e-4);
}

TEST_CASE("run_train: static strategies have no training phase") {
    const std::string config = write_tiny_config();
    CHECK(ms_run_train(config.c_str(), "round_robin", temp_path("msched_out_rr").c_str()) ==
          MS_ERR_INVALID_ARGUMENT);
    CHECK(std::string(ms_last_error()).find("no training phase") != std::string::npos);

    CHECK(ms_run_train(config.c_str(), "sjf", temp_path("msched_out_sjf").c_str()) ==
          MS_ERR_INVALID_ARGUMENT);
    CHECK(std::string(ms_last_error()).find("valid:") != std::string::npos);
}

TEST_CASE("run_train: qlearning writes checkpoint and log") {
    const std::string config = write_tiny_config();
    const std::string out = temp_path("msched_out_q");
    fs::remove_all(out);
    REQUIRE(ms_run_train(config.c_str(), "qlearning", out.c_str()) == MS_OK);
    CHECK(fs::exists(out + "/train_log.csv"));
    CHECK(fs::exists(out + "/qtable.json"));
    const std::string log = slurp(out + "/train_log.csv");
    CHECK(log.rfind("epoch,global_updates,mean_critic_loss,mean_reward,wall_clock_s", 0) == 0);
}

TEST_CASE("run_compare writes report.json and table.txt") {
    const std::string config = write_tiny_config();
    const std::string out = temp_path("msched_out_cmp");
    fs::remove_all(out);
    REQUIRE(ms_run_compare(config.c_str(), out.c_str()) == MS_OK);
    CHECK(fs::exists(out + "/report.json"));
    CHECK(fs::exists(out + "/table.txt"));
    CHECK(fs::exists(out + "/logs/qlearning_seed1.csv"));
    const std::string report = slurp(out + "/report.json");
    CHECK(report.find("\"strategy\": \"priority\"") != std::string::npos);
}

TEST_CASE("run_stability writes the csv series") {
    const std::string config = write_tiny_config();
    const std::string out = temp_path("msched_out_stab");
    fs::remove_all(out);
    REQUIRE(ms_run_stability(config.c_str(), out.c_str()) == MS_OK);
    const std::string csv = slurp(out + "/stability.csv");
    CHECK(csv.rfind("load,strategy,stddev", 0) == 0);
    CHECK(csv.find("round_robin") != std::string::npos);
}

TEST_CASE("config errors map to io/config statuses") {
    CHECK(ms_run_compare(temp_path("msched_missing_config.json").c_str(),
                         temp_path("msched_out_x").c_str()) == MS_ERR_IO);
    const std::string bad = temp_path("msched_bad_config.json");
    std::ofstream(bad) << "{\"trace\":{},\"seed\":1}";
    CHECK(ms_run_compare(bad.c_str(), temp_path("msched_out_y").c_str()) == MS_ERR_CONFIG);
}
