#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "msched/nn.hpp"
#include "msched/simenv.hpp"

namespace msched {

struct Hyperparams {
    double gamma = 0.99;
    int n_step = 5;          // TD horizon == worker rollout length
    int worker_count = 1;
    std::int64_t total_steps = 200000; // env steps across all workers
    double entropy_beta = 0.01;
    std::vector<int> hidden_sizes = {128, 64};
    double learning_rate = 7e-4;
    double rms_decay = 0.99;
    double rms_epsilon = 1e-5;
    int updates_per_epoch = 100; // one log row per this many global updates
    int eval_interval = 0;       // progress log every this many epochs; 0 = off
    int conv_window = 10;        // W
    double conv_epsilon = 0.02;  // relative flatness threshold

    void validate() const;
};

struct Transition {
    Observation obs;
    int action = 0;
    double reward = 0.0;
    bool done = false;
};

/// Experience segment of length <= n. bootstrap_value is V(s_{t+n}) under
/// the sampling parameters, or 0 when the segment ended the episode.
struct Trajectory {
    std::vector<Transition> transitions;
    double bootstrap_value = 0.0;
    std::vector<double> targets; // one n-step return per transition
};

/// R_t = sum_i gamma^i r_{t+i} + gamma^(L-t) * bootstrap, per position.
std::vector<double> nstep_targets(const Trajectory& trajectory, double gamma);

/// A_t = R_t - V(s_t); the discounted bootstrap is already inside R_t.
double advantage(double target, double value_estimate);

/// (target - V(s_t))^2
double critic_loss(double target, double value_estimate);

struct EpochLog {
    int epoch = 0; // 1-based
    std::int64_t global_updates = 0;
    double mean_critic_loss = 0.0;
    double mean_reward = 0.0;
    double wall_clock_s = 0.0;
};
using TrainingLog = std::vector<EpochLog>;

/// CSV with header epoch,global_updates,mean_critic_loss,mean_reward,wall_clock_s
std::string training_log_csv(const TrainingLog& log);

/// Shared parameter store. Any number of concurrent snapshot readers;
/// updates are serialized and atomic, so no torn parameter vector is ever
/// observable and update_version counts exactly the accepted updates.
class GlobalParams {
public:
    GlobalParams(Mlp initial, OptimState optim);

    Mlp snapshot() const;
    std::uint64_t version() const { return version_.load(std::memory_order_acquire); }
    std::uint64_t rejected_count() const { return rejected_.load(std::memory_order_relaxed); }

    struct ApplyResult {
        std::uint64_t version;
        bool accepted;
    };
    /// Applies the optimizer update; non-finite gradients are rejected and
    /// leave both parameters and version untouched.
    ApplyResult apply_update(const Gradients& grads);

private:
    mutable std::shared_mutex mutex_;
    Mlp params_;
    OptimState optim_;
    std::atomic<std::uint64_t> version_{0};
    std::atomic<std::uint64_t> rejected_{0};
};

/// One sampling thread's private state: env, rng, and episode cursor.
class Worker {
public:
    Worker(std::unique_ptr<Env> env, std::uint64_t sampling_seed);

    /// Samples up to max_steps transitions with a_t ~ pi(.|s_t; local),
    /// stopping early at episode end; fills bootstrap_value (0 if terminal).
    Trajectory rollout(const Mlp& local, int max_steps);

    Env& env() { return *env_; }

private:
    std::unique_ptr<Env> env_;
    std::mt19937_64 rng_;
    Observation current_obs_;
    bool episode_done_ = true;
};

struct WorkerUpdateResult {
    Gradients grads;
    double mean_critic_loss = 0.0;
};

/// Mean over the trajectory of the per-position combined-loss gradients;
/// requires targets to be filled.
WorkerUpdateResult worker_update(const Trajectory& trajectory, const Mlp& local,
                                 double entropy_beta);

int sample_categorical(const Eigen::VectorXd& probs, std::mt19937_64& rng);

using EnvFactory =
    std::function<std::unique_ptr<Env>(int worker_index, std::uint64_t env_seed)>;

struct TrainResult {
    Mlp params;
    TrainingLog log;
    std::uint64_t updates = 0;
    std::uint64_t rejected_updates = 0;
    std::int64_t env_steps = 0;
    double wall_clock_s = 0.0;
};

/// Runs worker_count sampling loops (inline when worker_count == 1, so
/// single-worker training is a deterministic function of its arguments),
/// each cycling snapshot -> rollout -> targets -> gradients -> global apply
/// until total_steps env steps have been consumed. The per-epoch log carries
/// mean critic loss, mean reward and elapsed wall-clock seconds.
TrainResult train(const Hyperparams& hyper, const ClusterConfig& config,
                  const std::vector<TraceWindow>& windows, std::uint64_t seed,
                  const EnvFactory& env_factory = nullptr);

struct ConvergencePoint {
    int epoch = 0;
    double wall_clock_s = 0.0;
};

/// First epoch at which the moving average (window W, partial at the start)
/// of mean reward has changed by less than eps_rel (relative) for W
/// consecutive epochs; nullopt when the log never flattens.
std::optional<ConvergencePoint> detect_convergence(const TrainingLog& log, int window,
                                                   double eps_rel);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace msched
