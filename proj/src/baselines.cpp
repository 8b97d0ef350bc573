#include "msched/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "msched/error.hpp"
#include "msched/log.hpp"

namespace msched {

namespace {

using json = nlohmann::json;

constexpr char kHexDigits[] = "0123456789abcdef";

int argmax_lowest(const Eigen::VectorXd& v) {
    int best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = static_cast<int>(i);
    return best;
}

} // namespace

int node_count_from_obs(const Observation& obs) {
    if (obs.size() < 7 || (obs.size() - 4) % 3 != 0)
        raise(Errc::invalid_argument, "observation has invalid length");
    return static_cast<int>((obs.size() - 4) / 3);
}

int priority_from_obs(const Observation& obs) {
    const int n = node_count_from_obs(obs);
    return static_cast<int>(std::lround(obs[static_cast<std::size_t>(3 * n + 2)] *
                                        (kPriorityLevels - 1)));
}

Action rr_select(RoundRobinState& state, int node_count) {
    if (node_count < 1) raise(Errc::invalid_argument, "rr_select: node_count must be >= 1");
    if (state.next_index < 0 || state.next_index >= node_count) state.next_index = 0;
    const int chosen = state.next_index;
    state.next_index = (state.next_index + 1) % node_count;
    return Action{chosen};
}

Action priority_select(const Observation& obs, int priority) {
    const int n = node_count_from_obs(obs);
    auto free_cpu = [&obs](int i) { return obs[static_cast<std::size_t>(3 * i)]; };
    auto queue_headroom = [&obs](int i) { return 1.0 - obs[static_cast<std::size_t>(3 * i + 2)]; };

    int best = 0;
    if (priority >= 6) {
        for (int i = 1; i < n; ++i)
            if (free_cpu(i) > free_cpu(best)) best = i;
    } else {
        for (int i = 1; i < n; ++i) {
            if (queue_headroom(i) > queue_headroom(best) ||
                (queue_headroom(i) == queue_headroom(best) && free_cpu(i) > free_cpu(best)))
                best = i;
        }
    }
    return Action{best};
}

std::string discretize(const Observation& obs, int bins) {
    if (bins < 1 || bins > 16) raise(Errc::invalid_argument, "discretize: bins must be in [1,16]");
    const int n = node_count_from_obs(obs);

    std::string key;
    key.reserve(static_cast<std::size_t>(n) + 1);
    auto bin_of = [bins](double x) {
        const int b = static_cast<int>(std::floor(x * bins));
        return std::min(bins - 1, std::max(0, b));
    };
    for (int i = 0; i < n; ++i) key.push_back(kHexDigits[bin_of(obs[static_cast<std::size_t>(3 * i)])]);
    key.push_back(kHexDigits[bin_of(obs[static_cast<std::size_t>(3 * n)])]);
    return key;
}

double q_value(const QTable& table, const std::string& key, int action) {
    auto it = table.values.find(key);
    if (it == table.values.end()) return 0.0;
    return it->second[static_cast<std::size_t>(action)];
}

int q_argmax(const QTable& table, const std::string& key) {
    // Q ties (always the case on unseen keys) break toward the node whose
    // free-cpu bin in the key is highest, then toward the lowest index.
    // Everything needed is already inside the key, so the rule stays a pure
    // function of (table, key).
    auto digit = [&key](int a) {
        return static_cast<std::size_t>(a) < key.size() ? key[static_cast<std::size_t>(a)] : '0';
    };
    auto it = table.values.find(key);
    bool trusted = it != table.values.end();
    if (trusted && table.trust_visits > 0) {
        auto seen = table.visit_counts.find(key);
        trusted = seen != table.visit_counts.end() &&
                  seen->second >= static_cast<std::uint32_t>(table.trust_visits);
    }
    if (!trusted) {
        int best = 0;
        for (int a = 1; a < table.action_count; ++a)
            if (digit(a) > digit(best)) best = a;
        return best;
    }
    const std::vector<double>& row = it->second;
    int best = 0;
    for (int a = 1; a < static_cast<int>(row.size()); ++a) {
        const auto ai = static_cast<std::size_t>(a);
        const auto bi = static_cast<std::size_t>(best);
        if (row[ai] > row[bi] || (row[ai] == row[bi] && digit(a) > digit(best))) best = a;
    }
    return best;
}

double q_update(QTable& table, const std::string& s, int action, double reward,
                const std::string& s_next, bool done, double gamma) {
    if (!std::isfinite(reward)) raise(Errc::invalid_argument, "q_update: non-finite reward");
    if (action < 0 || action >= table.action_count)
        raise(Errc::invalid_argument, "q_update: action out of range");

    double best_next = 0.0;
    if (!done) {
        if (auto it = table.values.find(s_next); it != table.values.end())
            best_next = *std::max_element(it->second.begin(), it->second.end());
    }
    std::vector<double>& row =
        table.values.try_emplace(s, std::vector<double>(static_cast<std::size_t>(table.action_count), 0.0))
            .first->second;
    ++table.visit_counts[s];
    const double td_error = reward + gamma * best_next - row[static_cast<std::size_t>(action)];
    row[static_cast<std::size_t>(action)] += table.alpha * td_error;
    return td_error;
}

void QLearningConfig::validate() const {
    if (bins < 1 || bins > 16) raise(Errc::config, "qlearning: bins must be in [1,16]");
    if (!(alpha > 0.0) || alpha > 1.0) raise(Errc::config, "qlearning: alpha must be in (0,1]");
    if (trust_visits < 0) raise(Errc::config, "qlearning: trust_visits must be >= 0");
    if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 || epsilon_end > 1.0)
        raise(Errc::config, "qlearning: epsilon bounds must be in [0,1]");
    if (!(epsilon_decay_fraction > 0.0) || epsilon_decay_fraction > 1.0)
        raise(Errc::config, "qlearning: epsilon_decay_fraction must be in (0,1]");
}

void DqnConfig::validate() const {
    if (replay_capacity < 1) raise(Errc::config, "dqn: replay_capacity must be >= 1");
    if (batch_size < 1) raise(Errc::config, "dqn: batch_size must be >= 1");
    if (static_cast<std::size_t>(batch_size) > replay_capacity)
        raise(Errc::config, "dqn: batch_size must not exceed replay_capacity");
    if (target_sync_period < 1) raise(Errc::config, "dqn: target_sync_period must be >= 1");
    if (train_frequency < 1) raise(Errc::config, "dqn: train_frequency must be >= 1");
    if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 || epsilon_end > 1.0)
        raise(Errc::config, "dqn: epsilon bounds must be in [0,1]");
    if (!(epsilon_decay_fraction > 0.0) || epsilon_decay_fraction > 1.0)
        raise(Errc::config, "dqn: epsilon_decay_fraction must be in (0,1]");
}

DqnAgent::DqnAgent(const DqnConfig& cfg, const Hyperparams& hyper, int obs_size, int action_count,
                   std::uint64_t seed)
    : cfg_(cfg), gamma_(hyper.gamma), rng_(mix_seed(seed, 0xD9)) {
    cfg_.validate();
    std::vector<int> trunk_sizes;
    trunk_sizes.push_back(obs_size);
    trunk_sizes.insert(trunk_sizes.end(), hyper.hidden_sizes.begin(), hyper.hidden_sizes.end());
    online_ = init_mlp(trunk_sizes, action_count, seed);
    target_ = online_;
    optim_ = OptimState::create(online_, hyper.learning_rate, hyper.rms_decay, hyper.rms_epsilon);
    buffer_.reserve(std::min<std::size_t>(cfg_.replay_capacity, 1 << 16));
}

int DqnAgent::select_action(const Observation& obs, double epsilon) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    if (uniform(rng_) < epsilon) {
        std::uniform_int_distribution<int> pick(0, online_.action_count - 1);
        return pick(rng_);
    }
    return argmax_lowest(forward(online_, obs).cache.logits);
}

std::optional<double> DqnAgent::dqn_step(const ReplayTransition& transition) {
    if (!std::isfinite(transition.reward))
        raise(Errc::invalid_argument, "dqn_step: non-finite reward");

    if (buffer_.size() < cfg_.replay_capacity) {
        buffer_.push_back(transition);
    } else {
        buffer_[write_pos_] = transition;
        write_pos_ = (write_pos_ + 1) % cfg_.replay_capacity;
    }
    ++steps_;

    std::optional<double> loss;
    if (buffer_.size() >= static_cast<std::size_t>(cfg_.batch_size) &&
        steps_ % cfg_.train_frequency == 0)
        loss = train_minibatch();
    if (steps_ % cfg_.target_sync_period == 0) target_ = online_;
    return loss;
}

double DqnAgent::train_minibatch() {
    Gradients acc = zero_gradients(online_);
    std::uniform_int_distribution<std::size_t> pick(0, buffer_.size() - 1);
    double loss_sum = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(cfg_.batch_size);

    for (int b = 0; b < cfg_.batch_size; ++b) {
        const ReplayTransition& tr = buffer_[pick(rng_)];
        const ForwardResult fwd = forward(online_, tr.obs);
        double best_next = 0.0;
        if (!tr.done) best_next = forward(target_, tr.next_obs).cache.logits.maxCoeff();
        const double target = tr.reward + gamma_ * best_next * (tr.done ? 0.0 : 1.0);
        const double residual = fwd.cache.logits(tr.action) - target;

        Eigen::VectorXd dlogits = Eigen::VectorXd::Zero(online_.action_count);
        dlogits(tr.action) = residual * inv_batch; // grad of mean 1/2 residual^2
        acc.add(backward_from_output_grads(online_, fwd.cache, dlogits, 0.0));
        loss_sum += residual * residual;
    }
    apply(optim_, online_, acc);
    return loss_sum * inv_batch;
}

Action GreedyNetScheduler::select(const Observation& obs) {
    return Action{argmax_lowest(forward(net_, obs).cache.logits)};
}

double epsilon_at(std::int64_t step, std::int64_t total_steps, double start, double end,
                  double decay_fraction) {
    const double horizon = decay_fraction * static_cast<double>(total_steps);
    if (horizon <= 0.0) return end;
    const double t = std::min(static_cast<double>(step) / horizon, 1.0);
    return start + (end - start) * t;
}

namespace {

struct BaselineEpochTracker {
    int epoch_steps;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    TrainingLog log;
    double reward_sum = 0.0;
    double loss_sum = 0.0;
    std::int64_t loss_count = 0;
    std::int64_t steps_in_epoch = 0;
    std::int64_t updates = 0;

    explicit BaselineEpochTracker(int steps_per_epoch) : epoch_steps(steps_per_epoch) {}

    void record(double reward, std::optional<double> loss) {
        reward_sum += reward;
        if (loss) {
            loss_sum += *loss;
            ++loss_count;
            ++updates;
        }
        if (++steps_in_epoch == epoch_steps) {
            EpochLog row;
            row.epoch = static_cast<int>(log.size()) + 1;
            row.global_updates = updates;
            row.mean_critic_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
            row.mean_reward = reward_sum / static_cast<double>(epoch_steps);
            row.wall_clock_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log.push_back(row);
            reward_sum = loss_sum = 0.0;
            loss_count = 0;
            steps_in_epoch = 0;
        }
    }

    double elapsed_s() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::unique_ptr<Env> default_env(const ClusterConfig& cluster,
                                 const std::vector<TraceWindow>& windows, std::uint64_t seed,
                                 const EnvFactory& factory) {
    if (factory) return factory(0, seed);
    return std::make_unique<RotationEnv>(cluster, windows, 0, seed);
}

} // namespace

QLearningTrainResult train_qlearning(const QLearningConfig& cfg, const Hyperparams& hyper,
                                     const ClusterConfig& cluster,
                                     const std::vector<TraceWindow>& windows, std::uint64_t seed,
                                     const EnvFactory& env_factory) {
    cfg.validate();
    hyper.validate();
    auto env = default_env(cluster, windows, mix_seed(seed, 0xE0), env_factory);

    QLearningTrainResult result;
    result.table.action_count = env->action_count();
    result.table.bins = cfg.bins;
    result.table.alpha = cfg.alpha;
    result.table.trust_visits = cfg.trust_visits;

    BaselineEpochTracker tracker(hyper.updates_per_epoch * hyper.n_step);
    std::mt19937_64 rng(mix_seed(seed, 0xE1));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::uniform_int_distribution<int> random_action(0, env->action_count() - 1);

    Observation obs;
    bool episode_done = true;
    std::string key;
    for (std::int64_t step = 0; step < hyper.total_steps; ++step) {
        if (episode_done) {
            obs = env->reset();
            key = discretize(obs, cfg.bins);
            episode_done = false;
        }
        const double eps = epsilon_at(step, hyper.total_steps, cfg.epsilon_start, cfg.epsilon_end,
                                      cfg.epsilon_decay_fraction);
        const int action = uniform(rng) < eps ? random_action(rng) : q_argmax(result.table, key);
        StepOutcome out = env->step(Action{action});

        std::string next_key;
        if (!out.done) next_key = discretize(out.next_obs, cfg.bins);
        const double td = q_update(result.table, key, action, out.reward, next_key, out.done,
                                   hyper.gamma);
        tracker.record(out.reward, td * td);

        if (out.done) {
            episode_done = true;
        } else {
            obs = std::move(out.next_obs);
            key = std::move(next_key);
        }
    }
    result.log = std::move(tracker.log);
    result.wall_clock_s = tracker.elapsed_s();
    MS_LOG_INFO("qlearning: trained %lld steps, %zu states", static_cast<long long>(hyper.total_steps),
                result.table.state_count());
    return result;
}

DqnTrainResult train_dqn(const DqnConfig& cfg, const Hyperparams& hyper,
                         const ClusterConfig& cluster, const std::vector<TraceWindow>& windows,
                         std::uint64_t seed, const EnvFactory& env_factory) {
    cfg.validate();
    hyper.validate();
    auto env = default_env(cluster, windows, mix_seed(seed, 0xD0), env_factory);

    DqnAgent agent(cfg, hyper, env->observation_size(), env->action_count(), mix_seed(seed, 0xD1));
    BaselineEpochTracker tracker(hyper.updates_per_epoch * hyper.n_step);

    Observation obs;
    bool episode_done = true;
    for (std::int64_t step = 0; step < hyper.total_steps; ++step) {
        if (episode_done) {
            obs = env->reset();
            episode_done = false;
        }
        const double eps = epsilon_at(step, hyper.total_steps, cfg.epsilon_start, cfg.epsilon_end,
                                      cfg.epsilon_decay_fraction);
        const int action = agent.select_action(obs, eps);
        StepOutcome out = env->step(Action{action});

        ReplayTransition tr;
        tr.obs = std::move(obs);
        tr.action = action;
        tr.reward = out.reward;
        tr.done = out.done;
        if (!out.done) tr.next_obs = out.next_obs;
        const std::optional<double> loss = agent.dqn_step(tr);
        tracker.record(out.reward, loss);

        if (out.done) {
            episode_done = true;
            obs.clear();
        } else {
            obs = std::move(out.next_obs);
        }
    }

    DqnTrainResult result;
    result.online = agent.online_net();
    result.log = std::move(tracker.log);
    result.wall_clock_s = tracker.elapsed_s();
    return result;
}

void save_qtable(const QTable& table, const std::string& path) {
    json doc;
    doc["format_version"] = 1;
    doc["action_count"] = table.action_count;
    doc["bins"] = table.bins;
    doc["alpha"] = table.alpha;
    doc["trust_visits"] = table.trust_visits;
    json entries = json::object();
    for (const auto& [key, row] : table.values) entries[key] = row;
    doc["entries"] = std::move(entries);
    json visits = json::object();
    for (const auto& [key, count] : table.visit_counts) visits[key] = count;
    doc["visits"] = std::move(visits);
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::io, "qtable: cannot write " + path);
    out << doc.dump() << "\n";
}

QTable load_qtable(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io, "qtable: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        raise(Errc::parse, std::string("qtable: invalid json: ") + e.what());
    }
    if (doc.value("format_version", 0) != 1) raise(Errc::parse, "qtable: unsupported format_version");

    QTable table;
    table.action_count = doc.at("action_count").get<int>();
    table.bins = doc.at("bins").get<int>();
    table.alpha = doc.at("alpha").get<double>();
    table.trust_visits = doc.value("trust_visits", 0);
    if (auto it = doc.find("visits"); it != doc.end()) {
        for (const auto& [key, count] : it->items())
            table.visit_counts.emplace(key, count.get<std::uint32_t>());
    }
    for (const auto& [key, row] : doc.at("entries").items()) {
        std::vector<double> values = row.get<std::vector<double>>();
        if (values.size() != static_cast<std::size_t>(table.action_count))
            raise(Errc::parse, "qtable: row width mismatch");
        table.values.emplace(key, std::move(values));
    }
    return table;
}

} // namespace msched
