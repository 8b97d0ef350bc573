#include "msched/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "msched/error.hpp"

namespace msched {
namespace {

using json = nlohmann::json;

// Typed accessors over one JSON object; every key must be consumed.
class StrictObject {
public:
    StrictObject(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) raise(Errc::config, path_ + ": expected a json object");
    }

    const json* take(const char* key) {
        auto it = doc_.find(key);
        if (it == doc_.end()) return nullptr;
        consumed_.insert(key);
        return &*it;
    }

    template <typename T>
    void opt_number(const char* key, T& out) {
        if (const json* v = take(key)) {
            if constexpr (std::is_integral_v<T>) {
                if (!v->is_number_integer() && !v->is_number_unsigned())
                    raise(Errc::config, field(key) + ": expected an integer");
            } else {
                if (!v->is_number()) raise(Errc::config, field(key) + ": expected a number");
            }
            out = v->get<T>();
        }
    }

    void opt_string(const char* key, std::string& out) {
        if (const json* v = take(key)) {
            if (!v->is_string()) raise(Errc::config, field(key) + ": expected a string");
            out = v->get<std::string>();
        }
    }

    template <typename T>
    void opt_array(const char* key, std::vector<T>& out) {
        if (const json* v = take(key)) {
            if (!v->is_array()) raise(Errc::config, field(key) + ": expected an array");
            try {
                out = v->get<std::vector<T>>();
            } catch (const json::exception&) {
                raise(Errc::config, field(key) + ": array element has the wrong type");
            }
        }
    }

    void finish() const {
        for (const auto& [key, _] : doc_.items()) {
            if (!consumed_.contains(key))
                raise(Errc::config, "unknown key \"" + (path_.empty() ? key : path_ + "." + key) + "\"");
        }
    }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const json& doc_;
    std::string path_;
    std::set<std::string> consumed_;
};

void parse_cluster(const json& doc, ClusterConfig& out) {
    StrictObject obj(doc, "cluster");
    obj.opt_number("node_count", out.node_count);
    obj.opt_number("cpu_capacity", out.cpu_capacity);
    obj.opt_number("mem_capacity", out.mem_capacity);
    obj.opt_number("max_queue_len", out.max_queue_len);
    obj.opt_number("w_success", out.w_success);
    obj.opt_number("w_delay", out.w_delay);
    obj.opt_number("w_balance", out.w_balance);
    obj.opt_number("reference_delay_ms", out.reference_delay_ms);
    obj.finish();
}

void parse_hyper(const json& doc, Hyperparams& out) {
    StrictObject obj(doc, "hyper");
    obj.opt_number("gamma", out.gamma);
    obj.opt_number("n_step", out.n_step);
    obj.opt_number("worker_count", out.worker_count);
    obj.opt_number("total_steps", out.total_steps);
    obj.opt_number("entropy_beta", out.entropy_beta);
    obj.opt_array("hidden_sizes", out.hidden_sizes);
    obj.opt_number("learning_rate", out.learning_rate);
    obj.opt_number("rms_decay", out.rms_decay);
    obj.opt_number("rms_epsilon", out.rms_epsilon);
    obj.opt_number("updates_per_epoch", out.updates_per_epoch);
    obj.opt_number("eval_interval", out.eval_interval);
    obj.opt_number("conv_window", out.conv_window);
    obj.opt_number("conv_epsilon", out.conv_epsilon);
    obj.finish();
}

void parse_qlearning(const json& doc, QLearningConfig& out) {
    StrictObject obj(doc, "qlearning");
    obj.opt_number("bins", out.bins);
    obj.opt_number("alpha", out.alpha);
    obj.opt_number("trust_visits", out.trust_visits);
    obj.opt_number("epsilon_start", out.epsilon_start);
    obj.opt_number("epsilon_end", out.epsilon_end);
    obj.opt_number("epsilon_decay_fraction", out.epsilon_decay_fraction);
    obj.finish();
}

void parse_dqn(const json& doc, DqnConfig& out) {
    StrictObject obj(doc, "dqn");
    obj.opt_number("replay_capacity", out.replay_capacity);
    obj.opt_number("batch_size", out.batch_size);
    obj.opt_number("target_sync_period", out.target_sync_period);
    obj.opt_number("train_frequency", out.train_frequency);
    obj.opt_number("epsilon_start", out.epsilon_start);
    obj.opt_number("epsilon_end", out.epsilon_end);
    obj.opt_number("epsilon_decay_fraction", out.epsilon_decay_fraction);
    obj.finish();
}

void parse_trace_source(const json& doc, TraceSource& out) {
    StrictObject obj(doc, "trace");
    obj.opt_string("file", out.file);
    if (const json* synth = obj.take("synthetic")) {
        StrictObject sobj(*synth, "trace.synthetic");
        SynthesisSpec spec;
        if (const json* stats = sobj.take("stats")) {
            spec.stats = trace_stats_from_json_text(stats->dump());
        } else {
            raise(Errc::config, "trace.synthetic.stats is required");
        }
        sobj.opt_number("horizon_ms", spec.horizon_ms);
        sobj.opt_number("deadline_factor", spec.deadline_factor);
        sobj.opt_number("seed", spec.seed);
        sobj.finish();
        out.synthetic = std::move(spec);
    }
    obj.finish();
}

void parse_experiment(const json& doc, ExperimentConfig& out) {
    StrictObject obj(doc, "experiment");
    obj.opt_array("strategies", out.strategies);
    obj.opt_array("seeds", out.seeds);
    obj.opt_number("eval_episode_count", out.eval_episode_count);
    obj.opt_array("load_multipliers", out.load_multipliers);
    obj.opt_number("stability_sample_interval_ms", out.stability_sample_interval_ms);
    obj.opt_number("stability_horizon_ms", out.stability_horizon_ms);
    obj.finish();
}

} // namespace

RunConfig parse_run_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        raise(Errc::config, std::string("config: invalid json: ") + e.what());
    }

    RunConfig config;
    StrictObject root(doc, "");
    root.opt_number("seed", config.seed);
    root.opt_string("output_dir", config.output_dir);
    if (const json* v = root.take("cluster")) parse_cluster(*v, config.experiment.cluster);
    if (const json* v = root.take("hyper")) parse_hyper(*v, config.experiment.hyper);
    if (const json* v = root.take("qlearning")) parse_qlearning(*v, config.experiment.qlearning);
    if (const json* v = root.take("dqn")) parse_dqn(*v, config.experiment.dqn);
    if (const json* v = root.take("trace"))
        parse_trace_source(*v, config.experiment.trace);
    else
        raise(Errc::config, "config: \"trace\" section is required");
    root.opt_number("window_ms", config.experiment.window_ms);
    if (const json* v = root.take("experiment")) parse_experiment(*v, config.experiment);
    root.finish();

    config.experiment.validate();
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io, "config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config_text(buf.str());
}

ClusterConfig cluster_from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        raise(Errc::config, std::string("cluster: invalid json: ") + e.what());
    }
    ClusterConfig config;
    parse_cluster(doc, config);
    config.validate();
    return config;
}

} // namespace msched
