#include "msched/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msched/error.hpp"

namespace msched {

namespace {
constexpr double kCapacityEps = 1e-9;
}

void ClusterConfig::validate() const {
    if (node_count < 1) raise(Errc::config, "cluster: node_count must be >= 1");
    if (!(cpu_capacity > 0.0) || !(mem_capacity > 0.0))
        raise(Errc::config, "cluster: capacities must be positive");
    if (max_queue_len < 0) raise(Errc::config, "cluster: max_queue_len must be >= 0");
    if (w_success < 0.0 || w_delay < 0.0 || w_balance < 0.0)
        raise(Errc::config, "cluster: reward weights must be >= 0");
    if (reference_delay_ms <= 0) raise(Errc::config, "cluster: reference_delay_ms must be positive");
}

const char* task_state_name(TaskState s) {
    switch (s) {
    case TaskState::Queued: return "queued";
    case TaskState::Running: return "running";
    case TaskState::Completed: return "completed";
    case TaskState::Failed: return "failed";
    }
    return "unknown";
}

double compute_reward(const ClusterConfig& config, const DispatchResult& result) {
    if (result.rejected) return -config.w_success;
    const double delay_frac =
        std::min(static_cast<double>(result.queue_delay_ms) /
                     static_cast<double>(config.reference_delay_ms),
                 1.0);
    return config.w_success * (result.within_deadline ? 1.0 : 0.0) -
           config.w_delay * delay_frac - config.w_balance * result.cluster_cpu_stddev;
}

Simulator::Simulator(ClusterConfig config) : config_(std::move(config)) {
    config_.validate();
}

Observation Simulator::reset(TraceWindow window, std::uint64_t seed) {
    if (window.records.empty()) raise(Errc::invalid_argument, "simulator: empty window");
    if (window.end_ms <= window.start_ms)
        raise(Errc::invalid_argument, "simulator: window end must be after start");
    for (std::size_t i = 0; i < window.records.size(); ++i) {
        const TaskRecord& r = window.records[i];
        if (r.submit_ms < window.start_ms || r.submit_ms >= window.end_ms)
            raise(Errc::invalid_argument, "simulator: record outside window bounds");
        if (i > 0 && window.records[i - 1].submit_ms > r.submit_ms)
            raise(Errc::invalid_argument, "simulator: window records must be sorted by submit_ms");
    }

    window_ = std::move(window);
    seed_ = seed;
    episode_active_ = true;
    done_ = false;

    nodes_.assign(static_cast<std::size_t>(config_.node_count), Node{});
    instances_.clear();
    instances_.reserve(window_.records.size());
    completions_ = {};
    next_task_ = 0;
    clock_ = window_.start_ms;
    util_integral_ = 0.0;
    samples_.clear();
    next_sample_ = sample_interval_ > 0
                       ? window_.start_ms + sample_interval_
                       : std::numeric_limits<std::int64_t>::max();

    return make_observation();
}

StepOutcome Simulator::step(const Action& action) {
    require_episode();
    if (done_) raise(Errc::state, "simulator: step after episode end");
    if (action.node_index < 0 || action.node_index >= config_.node_count)
        raise(Errc::invalid_argument, "simulator: action out of range");

    step_completions_ = 0;
    step_failures_ = 0;

    const TaskRecord record = window_.records[next_task_];
    advance_clock_to(record.submit_ms);

    const double pre_stddev = cpu_used_stddev();
    const std::size_t idx = instances_.size();
    instances_.push_back(TaskInstance{record, TaskState::Queued, action.node_index, -1, -1});

    Node& node = nodes_[static_cast<std::size_t>(action.node_index)];
    const bool fits = node.cpu_used + record.cpu_req <= config_.cpu_capacity + kCapacityEps &&
                      node.mem_used + record.mem_req <= config_.mem_capacity + kCapacityEps;

    DispatchResult dispatch;
    dispatch.cluster_cpu_stddev = pre_stddev;
    if (fits) {
        start_instance(idx, action.node_index, clock_);
        dispatch.queue_delay_ms = clock_ - record.submit_ms; // 0: dispatch happens at submit
        dispatch.within_deadline = dispatch.queue_delay_ms <= record.deadline_ms;
    } else if (static_cast<int>(node.queue.size()) >= config_.max_queue_len) {
        instances_[idx].state = TaskState::Failed;
        ++step_failures_;
        dispatch.rejected = true;
    } else {
        node.queue.push_back(idx);
        dispatch.queue_delay_ms = projected_start_ms(action.node_index, record) - record.submit_ms;
        dispatch.within_deadline = dispatch.queue_delay_ms <= record.deadline_ms;
    }

    StepOutcome outcome;
    outcome.reward = compute_reward(config_, dispatch);

    ++next_task_;
    if (next_task_ < window_.records.size()) {
        advance_clock_to(window_.records[next_task_].submit_ms);
        outcome.next_obs = make_observation();
    } else {
        drain_all();
        done_ = true;
        outcome.done = true;
    }
    outcome.info.completions = step_completions_;
    outcome.info.failures = step_failures_;
    return outcome;
}

UtilizationSnapshot Simulator::utilization() const {
    require_episode();
    UtilizationSnapshot snap;
    snap.cpu_used.reserve(nodes_.size());
    for (const Node& n : nodes_) snap.cpu_used.push_back(n.cpu_used);
    snap.mean = cpu_used_total() / static_cast<double>(nodes_.size());
    return snap;
}

double Simulator::time_averaged_utilization() const {
    require_episode();
    const std::int64_t span = clock_ - window_.start_ms;
    if (span <= 0) return 0.0;
    return util_integral_ / static_cast<double>(span);
}

void Simulator::enable_utilization_sampling(std::int64_t interval_ms) {
    if (interval_ms <= 0) raise(Errc::invalid_argument, "simulator: sample interval must be positive");
    sample_interval_ = interval_ms;
}

std::string Simulator::episode_csv() const {
    require_episode();
    std::string out = "task_id,node,start_ms,finish_ms,state,delay_ms\n";
    for (const TaskInstance& inst : instances_) {
        out += std::to_string(inst.record.task_id);
        out += ',';
        out += std::to_string(inst.assigned_node);
        out += ',';
        if (inst.start_ms >= 0) out += std::to_string(inst.start_ms);
        out += ',';
        if (inst.finish_ms >= 0) out += std::to_string(inst.finish_ms);
        out += ',';
        out += task_state_name(inst.state);
        out += ',';
        if (inst.start_ms >= 0) out += std::to_string(inst.start_ms - inst.record.submit_ms);
        out += '\n';
    }
    return out;
}

void Simulator::require_episode() const {
    if (!episode_active_) raise(Errc::state, "simulator: reset() has not been called");
}

Observation Simulator::make_observation() const {
    const TaskRecord& task = window_.records[next_task_];
    Observation obs(static_cast<std::size_t>(observation_size()));
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        obs[3 * i + 0] = std::clamp(1.0 - n.cpu_used / config_.cpu_capacity, 0.0, 1.0);
        obs[3 * i + 1] = std::clamp(1.0 - n.mem_used / config_.mem_capacity, 0.0, 1.0);
        obs[3 * i + 2] = config_.max_queue_len > 0
                             ? static_cast<double>(n.queue.size()) / config_.max_queue_len
                             : 0.0;
    }
    const std::size_t base = 3 * nodes_.size();
    obs[base + 0] = task.cpu_req;
    obs[base + 1] = task.mem_req;
    obs[base + 2] = static_cast<double>(task.priority) / (kPriorityLevels - 1);
    const double span = static_cast<double>(window_.end_ms - window_.start_ms);
    obs[base + 3] = std::clamp(static_cast<double>(task.submit_ms - window_.start_ms) / span, 0.0, 1.0);
    return obs;
}

void Simulator::start_instance(std::size_t idx, int node_idx, std::int64_t now) {
    TaskInstance& inst = instances_[idx];
    Node& node = nodes_[static_cast<std::size_t>(node_idx)];
    inst.state = TaskState::Running;
    inst.start_ms = now;
    inst.finish_ms = now + inst.record.duration_ms;
    node.cpu_used += inst.record.cpu_req;
    node.mem_used += inst.record.mem_req;
    ++node.running_count;
    completions_.push(Completion{inst.finish_ms, node_idx, idx});
}

void Simulator::promote_queue(int node_idx) {
    Node& node = nodes_[static_cast<std::size_t>(node_idx)];

    // Overdue sweep first, in FIFO order, so promoted tasks are always
    // still within their deadline.
    for (auto it = node.queue.begin(); it != node.queue.end();) {
        TaskInstance& inst = instances_[*it];
        if (clock_ - inst.record.submit_ms > inst.record.deadline_ms) {
            inst.state = TaskState::Failed;
            ++step_failures_;
            it = node.queue.erase(it);
        } else {
            ++it;
        }
    }

    while (!node.queue.empty()) {
        const std::size_t idx = node.queue.front();
        const TaskRecord& r = instances_[idx].record;
        if (node.cpu_used + r.cpu_req <= config_.cpu_capacity + kCapacityEps &&
            node.mem_used + r.mem_req <= config_.mem_capacity + kCapacityEps) {
            node.queue.pop_front();
            start_instance(idx, node_idx, clock_);
        } else {
            break;
        }
    }
}

void Simulator::advance_clock_to(std::int64_t target) {
    while (!completions_.empty() && completions_.top().finish_ms <= target) {
        const Completion c = completions_.top();
        completions_.pop();
        account_time_until(c.finish_ms);
        clock_ = c.finish_ms;

        TaskInstance& inst = instances_[c.instance];
        Node& node = nodes_[static_cast<std::size_t>(c.node)];
        inst.state = TaskState::Completed;
        node.cpu_used -= inst.record.cpu_req;
        node.mem_used -= inst.record.mem_req;
        --node.running_count;
        if (node.running_count == 0) { // shed fp residue
            node.cpu_used = 0.0;
            node.mem_used = 0.0;
        }
        ++step_completions_;

        promote_queue(c.node);
    }
    account_time_until(target);
    clock_ = std::max(clock_, target);
}

void Simulator::drain_all() {
    while (!completions_.empty()) {
        advance_clock_to(completions_.top().finish_ms);
    }
}

std::int64_t Simulator::projected_start_ms(int node_idx, const TaskRecord& record) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_idx)];

    struct RunningTask {
        std::int64_t finish;
        double cpu;
        double mem;
        bool operator>(const RunningTask& o) const { return finish > o.finish; }
    };
    std::priority_queue<RunningTask, std::vector<RunningTask>, std::greater<>> running;
    for (std::size_t i = 0; i < instances_.size(); ++i) {
        const TaskInstance& inst = instances_[i];
        if (inst.state == TaskState::Running && inst.assigned_node == node_idx)
            running.push(RunningTask{inst.finish_ms, inst.record.cpu_req, inst.record.mem_req});
    }

    struct Pending {
        double cpu;
        double mem;
        std::int64_t duration;
        bool is_target;
    };
    std::vector<Pending> pending;
    pending.reserve(node.queue.size() + 1);
    for (std::size_t idx : node.queue) {
        const TaskRecord& r = instances_[idx].record;
        pending.push_back(Pending{r.cpu_req, r.mem_req, r.duration_ms, false});
    }
    pending.push_back(Pending{record.cpu_req, record.mem_req, record.duration_ms, true});

    // Node-local lookahead: everyone ahead runs to completion, no new
    // arrivals, no deadline drops.
    double cpu = node.cpu_used;
    double mem = node.mem_used;
    std::size_t head = 0;
    std::int64_t t = clock_;
    while (!running.empty()) {
        const RunningTask done = running.top();
        running.pop();
        t = done.finish;
        cpu -= done.cpu;
        mem -= done.mem;
        while (head < pending.size() &&
               cpu + pending[head].cpu <= config_.cpu_capacity + kCapacityEps &&
               mem + pending[head].mem <= config_.mem_capacity + kCapacityEps) {
            if (pending[head].is_target) return t;
            cpu += pending[head].cpu;
            mem += pending[head].mem;
            running.push(RunningTask{t + pending[head].duration, pending[head].cpu, pending[head].mem});
            ++head;
        }
    }
    return t; // unreachable in practice: an empty node admits any request
}

double Simulator::cpu_used_total() const {
    double total = 0.0;
    for (const Node& node : nodes_) total += node.cpu_used;
    return total;
}

double Simulator::cpu_used_stddev() const {
    const double n = static_cast<double>(nodes_.size());
    const double mean = cpu_used_total() / n;
    double var = 0.0;
    for (const Node& node : nodes_) var += (node.cpu_used - mean) * (node.cpu_used - mean);
    return std::sqrt(var / n);
}

void Simulator::account_time_until(std::int64_t t) {
    if (t <= clock_) return;
    util_integral_ += (cpu_used_total() / static_cast<double>(nodes_.size()) /
                       config_.cpu_capacity) *
                      static_cast<double>(t - clock_);
    while (next_sample_ < t) {
        std::vector<double> sample;
        sample.reserve(nodes_.size());
        for (const Node& n : nodes_) sample.push_back(n.cpu_used);
        samples_.push_back(std::move(sample));
        next_sample_ += sample_interval_;
    }
}

RotationEnv::RotationEnv(ClusterConfig config, std::vector<TraceWindow> windows,
                         std::size_t start_offset, std::uint64_t seed)
    : sim_(std::move(config)), windows_(std::move(windows)), seed_(seed) {
    bool any = false;
    for (const TraceWindow& w : windows_) any = any || !w.records.empty();
    if (!any) raise(Errc::invalid_argument, "rotation env: no non-empty windows");
    next_ = windows_.empty() ? 0 : start_offset % windows_.size();
}

Observation RotationEnv::reset() {
    while (windows_[next_ % windows_.size()].records.empty()) ++next_;
    const TraceWindow& w = windows_[next_ % windows_.size()];
    ++next_;
    return sim_.reset(w, seed_ + episode_++);
}

StepOutcome RotationEnv::step(const Action& action) { return sim_.step(action); }

} // namespace msched
