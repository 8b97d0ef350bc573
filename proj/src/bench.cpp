#include "msched/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include <json.hpp>

#include "msched/error.hpp"
#include "msched/log.hpp"

namespace msched {

namespace {

using json = nlohmann::json;

void append_number(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Median with unconverged seeds ranked slowest; infinite median -> nullopt.
std::optional<double> median_convergence(const std::vector<SeedOutcome>& outcomes,
                                         bool epochs) {
    std::vector<double> values;
    values.reserve(outcomes.size());
    for (const SeedOutcome& o : outcomes) {
        if (o.convergence)
            values.push_back(epochs ? static_cast<double>(o.convergence->epoch)
                                    : o.convergence->wall_clock_s);
        else
            values.push_back(std::numeric_limits<double>::infinity());
    }
    const double m = median(std::move(values));
    if (!std::isfinite(m)) return std::nullopt;
    return m;
}

std::vector<TraceWindow> non_empty(const std::vector<TraceWindow>& windows) {
    std::vector<TraceWindow> out;
    for (const TraceWindow& w : windows)
        if (!w.records.empty()) out.push_back(w);
    return out;
}

} // namespace

const std::vector<std::string>& known_strategies() {
    static const std::vector<std::string> names = {"a3c", "dqn", "qlearning", "priority",
                                                   "round_robin"};
    return names;
}

bool strategy_is_learning(const std::string& name) {
    return name == "a3c" || name == "dqn" || name == "qlearning";
}

void ExperimentConfig::validate() const {
    cluster.validate();
    hyper.validate();
    qlearning.validate();
    dqn.validate();
    if (window_ms <= 0) raise(Errc::config, "experiment: window_ms must be positive");
    if (strategies.empty()) raise(Errc::config, "experiment: at least one strategy required");
    for (const std::string& s : strategies) {
        bool known = false;
        for (const std::string& k : known_strategies()) known = known || k == s;
        if (!known) {
            std::string valid;
            for (const std::string& k : known_strategies()) {
                if (!valid.empty()) valid += ", ";
                valid += k;
            }
            raise(Errc::config, "experiment: unknown strategy \"" + s + "\"; valid: " + valid);
        }
    }
    if (seeds.empty()) raise(Errc::config, "experiment: at least one seed required");
    if (eval_episode_count < 1) raise(Errc::config, "experiment: eval_episode_count must be >= 1");
    for (double m : load_multipliers)
        if (!(m > 0.0)) raise(Errc::config, "experiment: load multipliers must be positive");
    if (stability_sample_interval_ms <= 0)
        raise(Errc::config, "experiment: stability_sample_interval_ms must be positive");
    if (stability_horizon_ms <= 0)
        raise(Errc::config, "experiment: stability_horizon_ms must be positive");
    const bool has_file = !trace.file.empty();
    const bool has_synth = trace.synthetic.has_value();
    if (has_file == has_synth)
        raise(Errc::config, "experiment: trace must set exactly one of file or synthetic");
}

PreparedTrace prepare_trace(const ExperimentConfig& exp) {
    exp.validate();

    PreparedTrace prepared;
    if (!exp.trace.file.empty()) {
        CleanResult cleaned = clean_records(parse_trace_csv(exp.trace.file));
        prepared.records = std::move(cleaned.kept);
    } else {
        const SynthesisSpec& spec = *exp.trace.synthetic;
        prepared.records = generate_synthetic(spec.stats, spec.horizon_ms, spec.seed,
                                              spec.deadline_factor);
    }
    if (prepared.records.empty()) raise(Errc::config, "experiment: trace contains no tasks");

    prepared.windows = segment_windows(prepared.records, exp.window_ms);
    std::vector<TraceWindow> usable = non_empty(prepared.windows);
    if (usable.size() < static_cast<std::size_t>(exp.eval_episode_count) + 1)
        raise(Errc::config, "experiment: need more non-empty windows than eval_episode_count");

    const std::size_t split = usable.size() - static_cast<std::size_t>(exp.eval_episode_count);
    prepared.train_windows.assign(usable.begin(), usable.begin() + static_cast<std::ptrdiff_t>(split));
    prepared.eval_windows.assign(usable.begin() + static_cast<std::ptrdiff_t>(split), usable.end());
    return prepared;
}

EvalMetrics evaluate_policy(Scheduler& policy, const ClusterConfig& config,
                            const std::vector<TraceWindow>& windows,
                            const std::vector<std::uint64_t>& seeds) {
    Simulator sim(config);
    EvalMetrics metrics;
    double delay_sum = 0.0;
    double util_sum = 0.0;
    std::size_t episodes = 0;

    for (std::uint64_t seed : seeds) {
        for (const TraceWindow& window : windows) {
            if (window.records.empty()) continue;
            Observation obs = sim.reset(window, seed);
            policy.begin_episode();
            while (!sim.done()) {
                StepOutcome out = sim.step(policy.select(obs));
                if (!out.done) obs = std::move(out.next_obs);
            }
            for (const TaskInstance& inst : sim.instances()) {
                ++metrics.total;
                if (inst.state == TaskState::Completed) {
                    ++metrics.successes;
                    delay_sum += static_cast<double>(inst.start_ms - inst.record.submit_ms);
                } else {
                    ++metrics.failures;
                }
            }
            util_sum += sim.time_averaged_utilization();
            ++episodes;
        }
    }
    if (metrics.successes > 0) metrics.mean_delay_ms = delay_sum / static_cast<double>(metrics.successes);
    if (metrics.total > 0)
        metrics.success_rate_pct = 100.0 * static_cast<double>(metrics.successes) /
                                   static_cast<double>(metrics.total);
    if (episodes > 0) metrics.utilization_pct = 100.0 * util_sum / static_cast<double>(episodes);
    return metrics;
}

TrainedPolicy train_strategy(const ExperimentConfig& exp, const std::string& strategy,
                             std::uint64_t seed, const std::vector<TraceWindow>& train_windows) {
    TrainedPolicy out;
    out.strategy = strategy;
    out.seed = seed;

    if (strategy == "a3c") {
        TrainResult r = train(exp.hyper, exp.cluster, train_windows, seed);
        out.scheduler = std::make_shared<GreedyNetScheduler>(std::move(r.params), "a3c");
        out.log = std::move(r.log);
    } else if (strategy == "dqn") {
        DqnTrainResult r = train_dqn(exp.dqn, exp.hyper, exp.cluster, train_windows, seed);
        out.scheduler = std::make_shared<GreedyNetScheduler>(std::move(r.online), "dqn");
        out.log = std::move(r.log);
    } else if (strategy == "qlearning") {
        QLearningTrainResult r =
            train_qlearning(exp.qlearning, exp.hyper, exp.cluster, train_windows, seed);
        out.scheduler = std::make_shared<QTableScheduler>(std::move(r.table));
        out.log = std::move(r.log);
    } else if (strategy == "priority") {
        out.scheduler = std::make_shared<PriorityScheduler>();
    } else if (strategy == "round_robin") {
        out.scheduler = std::make_shared<RoundRobinScheduler>(exp.cluster.node_count);
    } else {
        std::string valid;
        for (const std::string& k : known_strategies()) {
            if (!valid.empty()) valid += ", ";
            valid += k;
        }
        raise(Errc::invalid_argument, "unknown strategy \"" + strategy + "\"; valid: " + valid);
    }

    if (strategy_is_learning(strategy) && !out.log.empty())
        out.convergence = detect_convergence(out.log, exp.hyper.conv_window, exp.hyper.conv_epsilon);
    return out;
}

ComparisonResult run_comparison(const ExperimentConfig& exp) {
    ComparisonResult result;
    result.trace = prepare_trace(exp);

    for (const std::string& strategy : exp.strategies) {
        StrategyReport report;
        report.strategy = strategy;
        report.learning = strategy_is_learning(strategy);

        std::vector<double> delays, rates, utils;
        for (std::uint64_t seed : exp.seeds) {
            MS_LOG_INFO("compare: %s seed %llu", strategy.c_str(),
                        static_cast<unsigned long long>(seed));
            TrainedPolicy policy = train_strategy(exp, strategy, seed, result.trace.train_windows);

            SeedOutcome outcome;
            outcome.seed = seed;
            outcome.metrics =
                evaluate_policy(*policy.scheduler, exp.cluster, result.trace.eval_windows, {seed});
            outcome.convergence = policy.convergence;
            delays.push_back(outcome.metrics.mean_delay_ms);
            rates.push_back(outcome.metrics.success_rate_pct);
            utils.push_back(outcome.metrics.utilization_pct);
            report.per_seed.push_back(outcome);
            result.policies.push_back(std::move(policy));
        }
        report.mean_delay_ms = median(delays);
        report.success_rate_pct = median(rates);
        report.utilization_pct = median(utils);
        if (report.learning) {
            report.convergence_time_s = median_convergence(report.per_seed, false);
            if (auto epochs = median_convergence(report.per_seed, true))
                report.convergence_epoch = static_cast<int>(std::llround(*epochs));
        }
        result.report.strategies.push_back(std::move(report));
    }
    return result;
}

std::vector<double> loss_curve(const TrainingLog& log) {
    if (log.empty()) raise(Errc::invalid_argument, "loss_curve: empty log");
    constexpr int kWindow = 5;
    std::vector<double> smoothed(log.size());
    double sum = 0.0;
    for (std::size_t e = 0; e < log.size(); ++e) {
        sum += log[e].mean_critic_loss;
        if (e >= kWindow) sum -= log[e - kWindow].mean_critic_loss;
        smoothed[e] = sum / static_cast<double>(std::min<std::size_t>(e + 1, kWindow));
    }
    return smoothed;
}

std::string loss_curve_csv(const TrainingLog& log) {
    const std::vector<double> smoothed = loss_curve(log);
    std::string out = "epoch,loss\n";
    for (std::size_t e = 0; e < smoothed.size(); ++e) {
        out += std::to_string(log[e].epoch);
        out += ',';
        append_number(out, smoothed[e]);
        out += '\n';
    }
    return out;
}

StabilitySeries stability_study(const ExperimentConfig& exp,
                                const std::vector<double>& load_multipliers,
                                const std::vector<TrainedPolicy>* trained) {
    exp.validate();
    for (double m : load_multipliers)
        if (!(m > 0.0)) raise(Errc::invalid_argument, "stability: load multipliers must be positive");

    PreparedTrace prepared = prepare_trace(exp);
    TraceStats base_stats = exp.trace.synthetic ? exp.trace.synthetic->stats
                                                : compute_stats(prepared.records);
    const double deadline_factor =
        exp.trace.synthetic ? exp.trace.synthetic->deadline_factor : 4.0;
    const std::uint64_t trace_seed = exp.trace.synthetic ? exp.trace.synthetic->seed : 1;

    // One policy per (strategy, seed), shared across load levels.
    std::map<std::pair<std::string, std::uint64_t>, std::shared_ptr<Scheduler>> policies;
    for (const std::string& strategy : exp.strategies) {
        for (std::uint64_t seed : exp.seeds) {
            std::shared_ptr<Scheduler> policy;
            if (trained) {
                for (const TrainedPolicy& t : *trained)
                    if (t.strategy == strategy && t.seed == seed) policy = t.scheduler;
            }
            if (!policy) {
                MS_LOG_INFO("stability: training %s seed %llu", strategy.c_str(),
                            static_cast<unsigned long long>(seed));
                policy = train_strategy(exp, strategy, seed, prepared.train_windows).scheduler;
            }
            policies[{strategy, seed}] = std::move(policy);
        }
    }

    StabilitySeries series;
    for (std::size_t li = 0; li < load_multipliers.size(); ++li) {
        const double load = load_multipliers[li];
        TraceStats scaled = base_stats;
        scaled.arrival_rate_per_s *= load;

        // Same trace for every strategy at a given (load, seed).
        std::vector<std::vector<TaskRecord>> traces;
        for (std::size_t si = 0; si < exp.seeds.size(); ++si)
            traces.push_back(generate_synthetic(
                scaled, exp.stability_horizon_ms,
                mix_seed(trace_seed, 1000 * (li + 1) + si), deadline_factor));

        for (const std::string& strategy : exp.strategies) {
            StabilityCell cell;
            cell.load = load;
            cell.strategy = strategy;
            for (std::size_t si = 0; si < exp.seeds.size(); ++si) {
                const std::vector<TaskRecord>& records = traces[si];
                if (records.empty()) {
                    cell.per_seed.push_back(0.0);
                    continue;
                }
                TraceWindow window;
                window.window_index = 0;
                window.start_ms = 0;
                window.end_ms = exp.stability_horizon_ms + 1;
                window.records = records;

                Simulator sim(exp.cluster);
                sim.enable_utilization_sampling(exp.stability_sample_interval_ms);
                Scheduler& policy = *policies[{strategy, exp.seeds[si]}];
                Observation obs = sim.reset(std::move(window), exp.seeds[si]);
                policy.begin_episode();
                while (!sim.done()) {
                    StepOutcome out = sim.step(policy.select(obs));
                    if (!out.done) obs = std::move(out.next_obs);
                }

                const auto& samples = sim.utilization_samples();
                double stddev_sum = 0.0;
                for (const std::vector<double>& sample : samples) {
                    double mean = 0.0;
                    for (double v : sample) mean += v;
                    mean /= static_cast<double>(sample.size());
                    double var = 0.0;
                    for (double v : sample) var += (v - mean) * (v - mean);
                    stddev_sum += std::sqrt(var / static_cast<double>(sample.size()));
                }
                cell.per_seed.push_back(
                    samples.empty() ? 0.0 : stddev_sum / static_cast<double>(samples.size()));
            }
            cell.mean_stddev = median(cell.per_seed);
            series.cells.push_back(std::move(cell));
        }
    }
    return series;
}

std::string stability_csv(const StabilitySeries& series) {
    std::string out = "load,strategy,stddev\n";
    for (const StabilityCell& cell : series.cells) {
        append_number(out, cell.load);
        out += ',';
        out += cell.strategy;
        out += ',';
        append_number(out, cell.mean_stddev);
        out += '\n';
    }
    return out;
}

std::string report_to_json(const MetricsReport& report) {
    json doc;
    doc["strategies"] = json::array();
    for (const StrategyReport& s : report.strategies) {
        json row;
        row["strategy"] = s.strategy;
        row["learning"] = s.learning;
        row["mean_task_delay_ms"] = s.mean_delay_ms;
        row["success_rate_pct"] = s.success_rate_pct;
        row["utilization_pct"] = s.utilization_pct;
        row["convergence_time_s"] =
            s.convergence_time_s ? json(*s.convergence_time_s) : json(nullptr);
        row["convergence_epoch"] =
            s.convergence_epoch ? json(*s.convergence_epoch) : json(nullptr);
        row["per_seed"] = json::array();
        for (const SeedOutcome& o : s.per_seed) {
            json seed_row;
            seed_row["seed"] = o.seed;
            seed_row["mean_task_delay_ms"] = o.metrics.mean_delay_ms;
            seed_row["success_rate_pct"] = o.metrics.success_rate_pct;
            seed_row["utilization_pct"] = o.metrics.utilization_pct;
            seed_row["successes"] = o.metrics.successes;
            seed_row["failures"] = o.metrics.failures;
            seed_row["total"] = o.metrics.total;
            seed_row["convergence_time_s"] =
                o.convergence ? json(o.convergence->wall_clock_s) : json(nullptr);
            seed_row["convergence_epoch"] = o.convergence ? json(o.convergence->epoch) : json(nullptr);
            row["per_seed"].push_back(std::move(seed_row));
        }
        doc["strategies"].push_back(std::move(row));
    }
    return doc.dump(2) + "\n";
}

std::string report_to_table(const MetricsReport& report) {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.1f", v);
        return std::string(buf);
    };

    std::vector<std::vector<std::string>> rows;
    rows.push_back({"Method", "Avg task delay (ms)", "Success rate (%)", "Utilization (%)",
                    "Convergence time (s)"});
    for (const StrategyReport& s : report.strategies) {
        rows.push_back({s.strategy, fmt(s.mean_delay_ms), fmt(s.success_rate_pct),
                        fmt(s.utilization_pct),
                        s.convergence_time_s ? fmt(*s.convergence_time_s) : std::string("-")});
    }

    std::vector<std::size_t> widths(rows[0].size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());

    std::string out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out += row[c];
            if (c + 1 < row.size()) out.append(widths[c] - row[c].size() + 2, ' ');
        }
        out += '\n';
    }
    return out;
}

} // namespace msched
