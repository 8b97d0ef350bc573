#include "msched/a3c.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "msched/error.hpp"
#include "msched/log.hpp"

namespace msched {

namespace {

void append_number(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

} // namespace

void Hyperparams::validate() const {
    if (gamma < 0.0 || gamma >= 1.0) raise(Errc::config, "hyper: gamma must be in [0,1)");
    if (n_step < 1) raise(Errc::config, "hyper: n_step must be >= 1");
    if (worker_count < 1) raise(Errc::config, "hyper: worker_count must be >= 1");
    if (total_steps < 0) raise(Errc::config, "hyper: total_steps must be >= 0");
    if (entropy_beta < 0.0) raise(Errc::config, "hyper: entropy_beta must be >= 0");
    if (hidden_sizes.empty()) raise(Errc::config, "hyper: hidden_sizes must not be empty");
    for (int h : hidden_sizes)
        if (h < 1) raise(Errc::config, "hyper: hidden sizes must be >= 1");
    if (!(learning_rate > 0.0)) raise(Errc::config, "hyper: learning_rate must be positive");
    if (rms_decay < 0.0 || rms_decay >= 1.0) raise(Errc::config, "hyper: rms_decay must be in [0,1)");
    if (rms_epsilon < 0.0) raise(Errc::config, "hyper: rms_epsilon must be >= 0");
    if (updates_per_epoch < 1) raise(Errc::config, "hyper: updates_per_epoch must be >= 1");
    if (eval_interval < 0) raise(Errc::config, "hyper: eval_interval must be >= 0");
    if (conv_window < 1) raise(Errc::config, "hyper: conv_window must be >= 1");
    if (!(conv_epsilon > 0.0)) raise(Errc::config, "hyper: conv_epsilon must be positive");
}

std::vector<double> nstep_targets(const Trajectory& trajectory, double gamma) {
    const std::size_t len = trajectory.transitions.size();
    if (len == 0) raise(Errc::invalid_argument, "nstep_targets: empty trajectory");

    std::vector<double> targets(len);
    double running = trajectory.bootstrap_value;
    for (std::size_t t = len; t-- > 0;) {
        running = trajectory.transitions[t].reward + gamma * running;
        targets[t] = running;
    }
    return targets;
}

double advantage(double target, double value_estimate) { return target - value_estimate; }

double critic_loss(double target, double value_estimate) {
    const double residual = target - value_estimate;
    return residual * residual;
}

std::string training_log_csv(const TrainingLog& log) {
    std::string out = "epoch,global_updates,mean_critic_loss,mean_reward,wall_clock_s\n";
    for (const EpochLog& row : log) {
        out += std::to_string(row.epoch);
        out += ',';
        out += std::to_string(row.global_updates);
        out += ',';
        append_number(out, row.mean_critic_loss);
        out += ',';
        append_number(out, row.mean_reward);
        out += ',';
        append_number(out, row.wall_clock_s);
        out += '\n';
    }
    return out;
}

GlobalParams::GlobalParams(Mlp initial, OptimState optim)
    : params_(std::move(initial)), optim_(std::move(optim)) {
    if (!params_.all_finite()) raise(Errc::invalid_argument, "global params: non-finite init");
}

Mlp GlobalParams::snapshot() const {
    std::shared_lock lock(mutex_);
    return params_;
}

GlobalParams::ApplyResult GlobalParams::apply_update(const Gradients& grads) {
    std::unique_lock lock(mutex_);
    if (!apply(optim_, params_, grads)) {
        rejected_.fetch_add(1, std::memory_order_relaxed);
        return {version_.load(std::memory_order_relaxed), false};
    }
    const std::uint64_t v = version_.fetch_add(1, std::memory_order_acq_rel) + 1;
    return {v, true};
}

int sample_categorical(const Eigen::VectorXd& probs, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    double cumulative = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        cumulative += probs(i);
        if (u < cumulative) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
}

Worker::Worker(std::unique_ptr<Env> env, std::uint64_t sampling_seed)
    : env_(std::move(env)), rng_(sampling_seed) {}

Trajectory Worker::rollout(const Mlp& local, int max_steps) {
    if (max_steps < 1) raise(Errc::invalid_argument, "rollout: max_steps must be >= 1");
    if (episode_done_) {
        current_obs_ = env_->reset();
        episode_done_ = false;
    }

    Trajectory traj;
    traj.transitions.reserve(static_cast<std::size_t>(max_steps));
    for (int i = 0; i < max_steps; ++i) {
        const ForwardResult fwd = forward(local, current_obs_);
        const int action = sample_categorical(fwd.policy, rng_);
        StepOutcome out = env_->step(Action{action});
        traj.transitions.push_back(Transition{std::move(current_obs_), action, out.reward, out.done});
        if (out.done) {
            episode_done_ = true;
            traj.bootstrap_value = 0.0;
            return traj;
        }
        current_obs_ = std::move(out.next_obs);
    }
    traj.bootstrap_value = forward(local, current_obs_).value;
    return traj;
}

WorkerUpdateResult worker_update(const Trajectory& trajectory, const Mlp& local,
                                 double entropy_beta) {
    const std::size_t len = trajectory.transitions.size();
    if (len == 0) raise(Errc::invalid_argument, "worker_update: empty trajectory");
    if (trajectory.targets.size() != len)
        raise(Errc::invalid_argument, "worker_update: targets not computed");

    WorkerUpdateResult result{zero_gradients(local), 0.0};
    for (std::size_t t = 0; t < len; ++t) {
        const Transition& tr = trajectory.transitions[t];
        const ForwardResult fwd = forward(local, tr.obs);
        const double adv = advantage(trajectory.targets[t], fwd.value);
        result.grads.add(backward(local, fwd.cache, tr.action, adv, trajectory.targets[t],
                                  entropy_beta));
        result.mean_critic_loss += critic_loss(trajectory.targets[t], fwd.value);
    }
    result.grads.scale(1.0 / static_cast<double>(len));
    result.mean_critic_loss /= static_cast<double>(len);
    return result;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 over seed+stream
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

struct EpochAccumulator {
    double loss_sum = 0.0;
    double reward_sum = 0.0;
    std::int64_t reward_count = 0;
    int update_count = 0;

    void add(double mean_loss, double rewards, std::int64_t transitions) {
        loss_sum += mean_loss;
        reward_sum += rewards;
        reward_count += transitions;
        ++update_count;
    }
    void clear() { *this = EpochAccumulator{}; }
};

} // namespace

TrainResult train(const Hyperparams& hyper, const ClusterConfig& config,
                  const std::vector<TraceWindow>& windows, std::uint64_t seed,
                  const EnvFactory& env_factory) {
    hyper.validate();
    config.validate();
    if (windows.empty()) raise(Errc::invalid_argument, "train: at least one window required");

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed_s = [&t0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    EnvFactory factory = env_factory;
    if (!factory) {
        factory = [&config, &windows](int worker_index, std::uint64_t env_seed) {
            return std::make_unique<RotationEnv>(config, windows,
                                                 static_cast<std::size_t>(worker_index), env_seed);
        };
    }

    std::vector<int> trunk_sizes;
    trunk_sizes.push_back(3 * config.node_count + 4);
    trunk_sizes.insert(trunk_sizes.end(), hyper.hidden_sizes.begin(), hyper.hidden_sizes.end());
    Mlp initial = init_mlp(trunk_sizes, config.node_count, seed);
    OptimState optim = OptimState::create(initial, hyper.learning_rate, hyper.rms_decay,
                                          hyper.rms_epsilon);
    GlobalParams global(std::move(initial), std::move(optim));

    std::atomic<std::int64_t> steps_claimed{0};
    std::mutex log_mutex;
    TrainingLog log;
    EpochAccumulator epoch_acc;

    auto worker_loop = [&](int worker_index) {
        Worker worker(factory(worker_index, mix_seed(seed, 2 * static_cast<std::uint64_t>(worker_index))),
                      mix_seed(seed, 2 * static_cast<std::uint64_t>(worker_index) + 1));
        for (;;) {
            const std::int64_t before =
                steps_claimed.fetch_add(hyper.n_step, std::memory_order_relaxed);
            if (before >= hyper.total_steps) {
                steps_claimed.fetch_sub(hyper.n_step, std::memory_order_relaxed);
                break;
            }
            const int claim =
                static_cast<int>(std::min<std::int64_t>(hyper.n_step, hyper.total_steps - before));
            if (claim < hyper.n_step)
                steps_claimed.fetch_sub(hyper.n_step - claim, std::memory_order_relaxed);

            const Mlp local = global.snapshot();
            Trajectory traj = worker.rollout(local, claim);
            const std::int64_t actual = static_cast<std::int64_t>(traj.transitions.size());
            if (actual < claim) steps_claimed.fetch_sub(claim - actual, std::memory_order_relaxed);

            traj.targets = nstep_targets(traj, hyper.gamma);
            WorkerUpdateResult update = worker_update(traj, local, hyper.entropy_beta);

            double reward_sum = 0.0;
            for (const Transition& tr : traj.transitions) reward_sum += tr.reward;

            std::lock_guard lk(log_mutex);
            const GlobalParams::ApplyResult applied = global.apply_update(update.grads);
            if (!applied.accepted) {
                MS_LOG_INFO("train: rejected non-finite update (worker %d)", worker_index);
                continue;
            }
            epoch_acc.add(update.mean_critic_loss, reward_sum, actual);
            if (applied.version % static_cast<std::uint64_t>(hyper.updates_per_epoch) == 0) {
                EpochLog row;
                row.epoch = static_cast<int>(log.size()) + 1;
                row.global_updates = static_cast<std::int64_t>(applied.version);
                row.mean_critic_loss = epoch_acc.loss_sum / epoch_acc.update_count;
                row.mean_reward = epoch_acc.reward_count > 0
                                      ? epoch_acc.reward_sum / static_cast<double>(epoch_acc.reward_count)
                                      : 0.0;
                row.wall_clock_s = elapsed_s();
                log.push_back(row);
                epoch_acc.clear();
                if (hyper.eval_interval > 0 && row.epoch % hyper.eval_interval == 0)
                    MS_LOG_INFO("train: epoch %d loss %.4f reward %.4f (%.1fs)", row.epoch,
                                row.mean_critic_loss, row.mean_reward, row.wall_clock_s);
            }
        }
    };

    if (hyper.worker_count == 1) {
        worker_loop(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(hyper.worker_count));
        for (int k = 0; k < hyper.worker_count; ++k) threads.emplace_back(worker_loop, k);
        for (std::thread& t : threads) t.join();
    }

    TrainResult result;
    result.params = global.snapshot();
    result.log = std::move(log);
    result.updates = global.version();
    result.rejected_updates = global.rejected_count();
    result.env_steps = steps_claimed.load(std::memory_order_relaxed);
    result.wall_clock_s = elapsed_s();
    return result;
}

std::optional<ConvergencePoint> detect_convergence(const TrainingLog& log, int window,
                                                   double eps_rel) {
    if (log.empty()) raise(Errc::invalid_argument, "detect_convergence: empty log");
    if (window < 1) raise(Errc::invalid_argument, "detect_convergence: window must be >= 1");
    if (!(eps_rel > 0.0)) raise(Errc::invalid_argument, "detect_convergence: eps must be positive");

    const std::size_t n = log.size();
    std::vector<double> moving(n);
    double window_sum = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
        window_sum += log[e].mean_reward;
        if (e >= static_cast<std::size_t>(window)) window_sum -= log[e - static_cast<std::size_t>(window)].mean_reward;
        const std::size_t w = std::min<std::size_t>(e + 1, static_cast<std::size_t>(window));
        moving[e] = window_sum / static_cast<double>(w);
    }

    int streak = 0;
    for (std::size_t e = 0; e < n; ++e) {
        bool stable;
        if (e == 0) {
            stable = true; // no prior average, no change yet
        } else {
            const double denom = std::max(std::abs(moving[e - 1]), 1e-12);
            stable = std::abs(moving[e] - moving[e - 1]) < eps_rel * denom;
        }
        streak = stable ? streak + 1 : 0;
        if (streak >= window)
            return ConvergencePoint{log[e].epoch, log[e].wall_clock_s};
    }
    return std::nullopt;
}

} // namespace msched
