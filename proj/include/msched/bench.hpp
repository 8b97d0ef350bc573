#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "msched/a3c.hpp"
#include "msched/baselines.hpp"
#include "msched/simenv.hpp"
#include "msched/trace.hpp"

namespace msched {

struct SynthesisSpec {
    TraceStats stats;
    std::int64_t horizon_ms = 100000;
    double deadline_factor = 4.0;
    std::uint64_t seed = 1; // trace synthesis seed, fixed across strategies
};

/// Either a CSV file or a synthesis spec.
struct TraceSource {
    std::string file;
    std::optional<SynthesisSpec> synthetic;
};

struct ExperimentConfig {
    ClusterConfig cluster;
    Hyperparams hyper;
    QLearningConfig qlearning;
    DqnConfig dqn;
    TraceSource trace;
    std::int64_t window_ms = 10000;
    std::vector<std::string> strategies = {"a3c", "dqn", "qlearning", "priority", "round_robin"};
    std::vector<std::uint64_t> seeds = {1};
    int eval_episode_count = 2; // trailing non-empty windows held out for evaluation
    std::vector<double> load_multipliers = {0.5, 1.0, 2.0, 4.0};
    std::int64_t stability_sample_interval_ms = 100;
    std::int64_t stability_horizon_ms = 30000;

    void validate() const;
};

const std::vector<std::string>& known_strategies();
bool strategy_is_learning(const std::string& name);

struct PreparedTrace {
    std::vector<TaskRecord> records;
    std::vector<TraceWindow> windows;       // full horizon
    std::vector<TraceWindow> train_windows; // non-empty, evaluation tail excluded
    std::vector<TraceWindow> eval_windows;  // last eval_episode_count non-empty windows
};

/// Loads (file: parse + clean) or synthesizes the trace, segments it, and
/// splits train/eval windows.
PreparedTrace prepare_trace(const ExperimentConfig& exp);

struct EvalMetrics {
    double mean_delay_ms = 0.0;     // over started tasks
    double success_rate_pct = 0.0;  // started within deadline / total
    double utilization_pct = 0.0;   // time-averaged mean cpu_used
    std::uint64_t successes = 0;
    std::uint64_t failures = 0;
    std::uint64_t total = 0;
};

/// Greedy replay of every (window, seed) pair under one policy.
EvalMetrics evaluate_policy(Scheduler& policy, const ClusterConfig& config,
                            const std::vector<TraceWindow>& windows,
                            const std::vector<std::uint64_t>& seeds);

struct SeedOutcome {
    std::uint64_t seed = 0;
    EvalMetrics metrics;
    std::optional<ConvergencePoint> convergence; // learning strategies only
};

struct StrategyReport {
    std::string strategy;
    bool learning = false;
    // medians across seeds
    double mean_delay_ms = 0.0;
    double success_rate_pct = 0.0;
    double utilization_pct = 0.0;
    std::optional<double> convergence_time_s; // absent for static strategies
    std::optional<int> convergence_epoch;
    std::vector<SeedOutcome> per_seed;
};

struct MetricsReport {
    std::vector<StrategyReport> strategies;
};

/// One trained (or constructed) policy per (strategy, seed).
struct TrainedPolicy {
    std::string strategy;
    std::uint64_t seed = 0;
    std::shared_ptr<Scheduler> scheduler;
    TrainingLog log; // empty for static strategies
    std::optional<ConvergencePoint> convergence;
};

struct ComparisonResult {
    MetricsReport report;
    std::vector<TrainedPolicy> policies;
    PreparedTrace trace;
};

/// The comparative evaluation: trains every learning strategy per seed under
/// the shared step budget, evaluates all strategies on the held-out windows,
/// and reports per-seed metrics plus cross-seed medians.
ComparisonResult run_comparison(const ExperimentConfig& exp);

/// Builds one (strategy, seed) policy; learning strategies train on
/// `train_windows`.
TrainedPolicy train_strategy(const ExperimentConfig& exp, const std::string& strategy,
                             std::uint64_t seed, const std::vector<TraceWindow>& train_windows);

/// Trailing moving average (window 5, partial at the start) of the
/// mean critic loss; one value per epoch.
std::vector<double> loss_curve(const TrainingLog& log);
std::string loss_curve_csv(const TrainingLog& log);

struct StabilityCell {
    double load = 1.0;
    std::string strategy;
    double mean_stddev = 0.0; // median across seeds of mean cross-node stddev
    std::vector<double> per_seed;
};

struct StabilitySeries {
    std::vector<StabilityCell> cells;
};

/// Replays load-scaled synthetic traces under every strategy, sampling
/// per-node cpu_used on a fixed simulated-time grid. Pass the policies from
/// run_comparison to reuse them; otherwise learners are trained on the
/// base-load train windows first.
StabilitySeries stability_study(const ExperimentConfig& exp,
                                const std::vector<double>& load_multipliers,
                                const std::vector<TrainedPolicy>* trained = nullptr);

std::string stability_csv(const StabilitySeries& series); // load,strategy,stddev

std::string report_to_json(const MetricsReport& report);
std::string report_to_table(const MetricsReport& report);

} // namespace msched
