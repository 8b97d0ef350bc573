// Command-line front end. Talks to the engine exclusively through the C API
// in msched.h; exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "msched.h"

namespace {

int exit_code_for(ms_status status) {
    switch (status) {
    case MS_OK:
        return 0;
    case MS_ERR_INVALID_ARGUMENT:
    case MS_ERR_IO:
    case MS_ERR_PARSE:
    case MS_ERR_CONFIG:
        return 2;
    default:
        return 1;
    }
}

int report(ms_status status) {
    if (status == MS_OK) return 0;
    std::fprintf(stderr, "error (%s): %s\n", ms_status_name(status), ms_last_error());
    return exit_code_for(status);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"msched: trace-driven cluster scheduling benchmark"};
    app.require_subcommand(1);

    // gen-trace
    std::string stats_path, out_path;
    std::int64_t horizon_ms = 100000;
    std::uint64_t seed = 1;
    double deadline_factor = 4.0;
    CLI::App* gen = app.add_subcommand("gen-trace", "Synthesize a workload trace CSV");
    gen->add_option("--stats", stats_path, "Trace statistics JSON file")->required();
    gen->add_option("--horizon-ms", horizon_ms, "Trace horizon in milliseconds")->required();
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("--deadline-factor", deadline_factor, "Deadline as a multiple of mean duration");
    gen->add_option("--out", out_path, "Output CSV path")->required();

    // train
    std::string config_path, strategy, out_dir;
    CLI::App* train = app.add_subcommand("train", "Train one scheduling strategy");
    train->add_option("--config", config_path, "Run configuration JSON")->required();
    train->add_option("--strategy", strategy, "a3c | dqn | qlearning")->required();
    train->add_option("--out", out_dir, "Output directory")->required();

    // compare
    CLI::App* compare = app.add_subcommand("compare", "Run the comparative evaluation");
    compare->add_option("--config", config_path, "Run configuration JSON")->required();
    compare->add_option("--out", out_dir, "Output directory")->required();

    // stability
    CLI::App* stability = app.add_subcommand("stability", "Stability-under-load study");
    stability->add_option("--config", config_path, "Run configuration JSON")->required();
    stability->add_option("--out", out_dir, "Output directory")->required();

    // gradcheck
    std::uint64_t gc_seed = 1;
    std::int32_t gc_cases = 100;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient self-check");
    gradcheck->add_option("--seed", gc_seed, "Random seed");
    gradcheck->add_option("--cases", gc_cases, "Number of random cases");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    if (gen->parsed()) {
        size_t count = 0;
        const ms_status status = ms_run_gen_trace(stats_path.c_str(), horizon_ms, deadline_factor,
                                                  seed, out_path.c_str(), &count);
        if (status != MS_OK) return report(status);
        std::printf("wrote %zu tasks to %s\n", count, out_path.c_str());
        return 0;
    }
    if (train->parsed()) {
        const ms_status status =
            ms_run_train(config_path.c_str(), strategy.c_str(), out_dir.c_str());
        if (status != MS_OK) return report(status);
        std::printf("trained %s; outputs in %s\n", strategy.c_str(), out_dir.c_str());
        return 0;
    }
    if (compare->parsed()) {
        const ms_status status = ms_run_compare(config_path.c_str(), out_dir.c_str());
        if (status != MS_OK) return report(status);
        std::printf("comparison written to %s (report.json, table.txt)\n", out_dir.c_str());
        return 0;
    }
    if (stability->parsed()) {
        const ms_status status = ms_run_stability(config_path.c_str(), out_dir.c_str());
        if (status != MS_OK) return report(status);
        std::printf("stability series written to %s/stability.csv\n", out_dir.c_str());
        return 0;
    }
    if (gradcheck->parsed()) {
        double max_rel = 0.0;
        const ms_status status = ms_run_gradcheck(gc_seed, gc_cases, &max_rel);
        if (status != MS_OK) return report(status);
        std::printf("gradcheck: %d cases, max relative error %.3e\n", gc_cases, max_rel);
        return max_rel < 1e-4 ? 0 : 1;
    }
    return 2;
}
