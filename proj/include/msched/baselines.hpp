#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "msched/a3c.hpp"
#include "msched/nn.hpp"
#include "msched/simenv.hpp"

namespace msched {

/// Placement policy over the same Observation/Action surface the learner
/// uses, so every strategy is drop-in substitutable in the harness.
class Scheduler {
public:
    virtual ~Scheduler() = default;
    virtual Action select(const Observation& obs) = 0;
    virtual void begin_episode() {}
    virtual const char* name() const = 0;
};

int node_count_from_obs(const Observation& obs);
int priority_from_obs(const Observation& obs);

// --- static strategies ------------------------------------------------

struct RoundRobinState {
    int next_index = 0;
};

/// Returns next_index and advances it modulo node_count; ignores system state.
Action rr_select(RoundRobinState& state, int node_count);

/// priority >= 6: node with maximum free cpu. Lower priorities: node with
/// maximum queue headroom, then maximum free cpu. Ties -> lowest index.
Action priority_select(const Observation& obs, int priority);

class RoundRobinScheduler : public Scheduler {
public:
    explicit RoundRobinScheduler(int node_count) : node_count_(node_count) {}
    Action select(const Observation&) override { return rr_select(state_, node_count_); }
    void begin_episode() override { state_.next_index = 0; }
    const char* name() const override { return "round_robin"; }

private:
    RoundRobinState state_;
    int node_count_;
};

class PriorityScheduler : public Scheduler {
public:
    Action select(const Observation& obs) override {
        return priority_select(obs, priority_from_obs(obs));
    }
    const char* name() const override { return "priority"; }
};

// --- tabular Q-learning -----------------------------------------------

/// State key: per-node free-cpu and the task's cpu_req, each binned into
/// `bins` equal-width bins ([0,1], 1.0 in the top bin), one hex digit per
/// dimension. Other observation features are dropped.
std::string discretize(const Observation& obs, int bins);

struct QTable {
    int action_count = 0;
    int bins = 4;
    double alpha = 0.1;
    // Rows with fewer than trust_visits updates are not trusted by q_argmax;
    // the capacity tie-break rule decides instead. 0 trusts every row.
    int trust_visits = 0;
    std::unordered_map<std::string, std::vector<double>> values; // unseen keys read as zeros
    std::unordered_map<std::string, std::uint32_t> visit_counts;

    std::size_t state_count() const { return values.size(); }
};

double q_value(const QTable& table, const std::string& key, int action);
int q_argmax(const QTable& table, const std::string& key); // ties -> lowest index

/// Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') * 1[!done] - Q(s,a)).
/// Returns the TD error before the update.
double q_update(QTable& table, const std::string& s, int action, double reward,
                const std::string& s_next, bool done, double gamma);

class QTableScheduler : public Scheduler {
public:
    explicit QTableScheduler(QTable table) : table_(std::move(table)) {}
    Action select(const Observation& obs) override {
        return Action{q_argmax(table_, discretize(obs, table_.bins))};
    }
    const char* name() const override { return "qlearning"; }
    const QTable& table() const { return table_; }

private:
    QTable table_;
};

struct QLearningConfig {
    int bins = 4;
    double alpha = 0.1;
    int trust_visits = 0; // see QTable
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    double epsilon_decay_fraction = 0.5; // of the step budget

    void validate() const;
};

// --- DQN ----------------------------------------------------------------

struct DqnConfig {
    std::size_t replay_capacity = 10000;
    int batch_size = 32;
    int target_sync_period = 500; // env steps between target copies
    int train_frequency = 4;      // env steps between minibatch updates
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    double epsilon_decay_fraction = 0.2;

    void validate() const;
};

struct ReplayTransition {
    Observation obs;
    int action = 0;
    double reward = 0.0;
    Observation next_obs; // empty at terminal
    bool done = false;
};

/// Q-network pair (the policy-head logits act as Q(s,.); the value head is
/// unused) with a uniform replay ring and periodic target copies.
class DqnAgent {
public:
    DqnAgent(const DqnConfig& cfg, const Hyperparams& hyper, int obs_size, int action_count,
             std::uint64_t seed);

    /// epsilon-greedy over online Q-values (ties -> lowest index).
    int select_action(const Observation& obs, double epsilon);

    /// Appends the transition (evicting the oldest at capacity); once the
    /// buffer holds a batch, runs a minibatch update every train_frequency
    /// steps and returns that batch's mean squared TD residual. The target
    /// net is re-synced every target_sync_period steps.
    std::optional<double> dqn_step(const ReplayTransition& transition);

    const Mlp& online_net() const { return online_; }
    const Mlp& target_net() const { return target_; }
    std::size_t buffer_size() const { return buffer_.size(); }
    std::int64_t steps_seen() const { return steps_; }

private:
    double train_minibatch();

    DqnConfig cfg_;
    double gamma_;
    Mlp online_;
    Mlp target_;
    OptimState optim_;
    std::vector<ReplayTransition> buffer_;
    std::size_t write_pos_ = 0;
    std::mt19937_64 rng_;
    std::int64_t steps_ = 0;
};

// --- training drivers ----------------------------------------------------

double epsilon_at(std::int64_t step, std::int64_t total_steps, double start, double end,
                  double decay_fraction);

struct QLearningTrainResult {
    QTable table;
    TrainingLog log;
    double wall_clock_s = 0.0;
};

/// Single-owner epsilon-greedy tabular training; one log row per
/// hyper.updates_per_epoch * hyper.n_step env steps so epochs line up with
/// the actor-critic log.
QLearningTrainResult train_qlearning(const QLearningConfig& cfg, const Hyperparams& hyper,
                                     const ClusterConfig& cluster,
                                     const std::vector<TraceWindow>& windows, std::uint64_t seed,
                                     const EnvFactory& env_factory = nullptr);

struct DqnTrainResult {
    Mlp online;
    TrainingLog log;
    double wall_clock_s = 0.0;
};

DqnTrainResult train_dqn(const DqnConfig& cfg, const Hyperparams& hyper,
                         const ClusterConfig& cluster, const std::vector<TraceWindow>& windows,
                         std::uint64_t seed, const EnvFactory& env_factory = nullptr);

/// Greedy argmax over the net's logits; evaluation mode for both the
/// actor-critic policy head and DQN Q-values.
class GreedyNetScheduler : public Scheduler {
public:
    GreedyNetScheduler(Mlp net, std::string name)
        : net_(std::move(net)), name_(std::move(name)) {}
    Action select(const Observation& obs) override;
    const char* name() const override { return name_.c_str(); }
    const Mlp& net() const { return net_; }

private:
    Mlp net_;
    std::string name_;
};

void save_qtable(const QTable& table, const std::string& path);
QTable load_qtable(const std::string& path);

} // namespace msched
