#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include "msched/trace.hpp"

namespace msched {

/// Cluster geometry and reward shaping. Node capacities are normalized so
/// that a request of 1.0 fills one node.
struct ClusterConfig {
    int node_count = 4;
    double cpu_capacity = 1.0;
    double mem_capacity = 1.0;
    int max_queue_len = 8;
    double w_success = 1.0;
    double w_delay = 0.5;
    double w_balance = 0.2;
    std::int64_t reference_delay_ms = 1000;

    void validate() const; // raises Errc::config on violations
};

enum class TaskState { Queued, Running, Completed, Failed };

const char* task_state_name(TaskState s);

/// Lifecycle of one dispatched record. Queued -> Running -> Completed, or
/// Queued -> Failed (never started). start_ms/finish_ms are -1 until set.
struct TaskInstance {
    TaskRecord record;
    TaskState state = TaskState::Queued;
    int assigned_node = -1;
    std::int64_t start_ms = -1;
    std::int64_t finish_ms = -1;
};

/// Feature vector of length 3N+4, every component in [0,1]:
/// per node (free cpu, free mem, queue fill), then the pending task's
/// (cpu_req, mem_req, priority/11, fraction of episode elapsed).
using Observation = std::vector<double>;

struct Action {
    int node_index = 0;
};

struct StepInfo {
    int completions = 0;
    int failures = 0;
};

struct StepOutcome {
    double reward = 0.0;
    Observation next_obs; // empty when done
    bool done = false;
    StepInfo info;
};

struct UtilizationSnapshot {
    std::vector<double> cpu_used;
    double mean = 0.0;
};

/// What happened to the task at dispatch; the inputs of compute_reward.
struct DispatchResult {
    bool rejected = false;            // queue was full, task failed on the spot
    bool within_deadline = false;     // (projected) start is within the deadline
    std::int64_t queue_delay_ms = 0;  // 0 for immediate starts, projected wait if queued
    double cluster_cpu_stddev = 0.0;  // population stddev of cpu_used at dispatch
};

/// r = w_success·1[within deadline] − w_delay·min(delay/reference, 1)
///     − w_balance·stddev(cpu_used); a rejected dispatch earns −w_success.
double compute_reward(const ClusterConfig& config, const DispatchResult& result);

/// Deterministic discrete-event simulator over one trace window.
/// One decision per arriving task: step() dispatches the pending task to the
/// chosen node, then advances the clock to the next arrival, processing
/// completions and FIFO queue promotions in timestamp order (completions
/// before arrivals, lower node index first). Queued tasks whose wait exceeds
/// their deadline at a promotion check fail. After the last dispatch the
/// remaining events are drained so every instance ends Completed or Failed.
class Simulator {
public:
    explicit Simulator(ClusterConfig config);

    /// Starts an episode on `window` (must be non-empty). The seed is kept
    /// for episode identity; the dynamics are deterministic.
    Observation reset(TraceWindow window, std::uint64_t seed);

    StepOutcome step(const Action& action);

    UtilizationSnapshot utilization() const;

    bool done() const { return done_; }
    std::int64_t clock_ms() const { return clock_; }
    int observation_size() const { return 3 * config_.node_count + 4; }
    int action_count() const { return config_.node_count; }
    const ClusterConfig& config() const { return config_; }

    /// All instances of the current episode, in dispatch order.
    const std::vector<TaskInstance>& instances() const { return instances_; }

    /// Time-averaged mean cpu_used over [window start, last event].
    double time_averaged_utilization() const;

    /// Record per-node cpu_used every interval_ms of simulated time
    /// (starting at window start + interval). Applies from the next reset.
    void enable_utilization_sampling(std::int64_t interval_ms);
    const std::vector<std::vector<double>>& utilization_samples() const { return samples_; }

    /// One CSV row per task: task_id,node,start_ms,finish_ms,state,delay_ms.
    std::string episode_csv() const;

private:
    struct Node {
        double cpu_used = 0.0;
        double mem_used = 0.0;
        int running_count = 0;
        std::deque<std::size_t> queue; // instance indices, FIFO
    };

    struct Completion {
        std::int64_t finish_ms;
        int node;
        std::size_t instance;
        bool operator>(const Completion& o) const {
            if (finish_ms != o.finish_ms) return finish_ms > o.finish_ms;
            if (node != o.node) return node > o.node;
            return instance > o.instance;
        }
    };

    void require_episode() const;
    Observation make_observation() const;
    void start_instance(std::size_t idx, int node, std::int64_t now);
    void promote_queue(int node_idx);
    void advance_clock_to(std::int64_t target);
    void drain_all();
    std::int64_t projected_start_ms(int node_idx, const TaskRecord& record) const;
    double cpu_used_total() const;
    double cpu_used_stddev() const;
    void account_time_until(std::int64_t t);

    ClusterConfig config_;
    TraceWindow window_;
    std::uint64_t seed_ = 0;
    bool episode_active_ = false;
    bool done_ = true;

    std::vector<Node> nodes_;
    std::vector<TaskInstance> instances_;
    std::priority_queue<Completion, std::vector<Completion>, std::greater<>> completions_;
    std::size_t next_task_ = 0; // index into window_.records
    std::int64_t clock_ = 0;

    // step bookkeeping
    int step_completions_ = 0;
    int step_failures_ = 0;

    // metrics
    double util_integral_ = 0.0; // ∫ mean cpu_used dt
    std::int64_t sample_interval_ = 0;
    std::int64_t next_sample_ = 0;
    std::vector<std::vector<double>> samples_;
};

/// Minimal episode interface the agents train against.
class Env {
public:
    virtual ~Env() = default;
    virtual Observation reset() = 0; // begins the next episode
    virtual StepOutcome step(const Action& action) = 0;
    virtual int action_count() const = 0;
    virtual int observation_size() const = 0;
};

/// Env that cycles a Simulator through a fixed rotation of windows.
/// Episode e of worker w runs windows[(start + e) mod windows.size()].
class RotationEnv : public Env {
public:
    RotationEnv(ClusterConfig config, std::vector<TraceWindow> windows, std::size_t start_offset,
                std::uint64_t seed);

    Observation reset() override;
    StepOutcome step(const Action& action) override;
    int action_count() const override { return sim_.action_count(); }
    int observation_size() const override { return sim_.observation_size(); }

    Simulator& simulator() { return sim_; }

private:
    Simulator sim_;
    std::vector<TraceWindow> windows_;
    std::size_t next_ = 0;
    std::uint64_t seed_ = 0;
    std::uint64_t episode_ = 0;
};

} // namespace msched
