#include "msched/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "msched/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace msched {
namespace {

using json = nlohmann::json;

bool layer_finite(const LayerParams& l) {
    return l.w.allFinite() && l.b.allFinite();
}

bool layer_congruent(const LayerParams& a, const LayerParams& b) {
    return a.w.rows() == b.w.rows() && a.w.cols() == b.w.cols() && a.b.size() == b.b.size();
}

void check_congruent(const Mlp& mlp, const Gradients& grads) {
    bool ok = grads.trunk.size() == mlp.trunk.size() &&
              layer_congruent(grads.policy_head, mlp.policy_head) &&
              layer_congruent(grads.value_head, mlp.value_head);
    for (std::size_t i = 0; ok && i < mlp.trunk.size(); ++i)
        ok = layer_congruent(grads.trunk[i], mlp.trunk[i]);
    if (!ok) raise(Errc::invalid_argument, "nn: gradient shape mismatch");
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double m = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - m).exp();
    return e / e.sum();
}

void append_row_major(std::vector<double>& out, const LayerParams& l) {
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
        for (Eigen::Index c = 0; c < l.w.cols(); ++c) out.push_back(l.w(r, c));
    for (Eigen::Index i = 0; i < l.b.size(); ++i) out.push_back(l.b(i));
}

void read_row_major(const std::vector<double>& flat, std::size_t& pos, LayerParams& l) {
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
        for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = flat[pos++];
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b(i) = flat[pos++];
}

template <typename Fn>
void for_each_layer(Mlp& mlp, Fn&& fn) {
    for (LayerParams& l : mlp.trunk) fn(l);
    fn(mlp.policy_head);
    fn(mlp.value_head);
}

} // namespace

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const LayerParams& l : trunk) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    n += static_cast<std::size_t>(policy_head.w.size() + policy_head.b.size());
    n += static_cast<std::size_t>(value_head.w.size() + value_head.b.size());
    return n;
}

bool Mlp::all_finite() const {
    for (const LayerParams& l : trunk)
        if (!layer_finite(l)) return false;
    return layer_finite(policy_head) && layer_finite(value_head);
}

void Gradients::add(const Gradients& other) {
    for (std::size_t i = 0; i < trunk.size(); ++i) {
        trunk[i].w += other.trunk[i].w;
        trunk[i].b += other.trunk[i].b;
    }
    policy_head.w += other.policy_head.w;
    policy_head.b += other.policy_head.b;
    value_head.w += other.value_head.w;
    value_head.b += other.value_head.b;
}

void Gradients::scale(double factor) {
    for (LayerParams& l : trunk) {
        l.w *= factor;
        l.b *= factor;
    }
    policy_head.w *= factor;
    policy_head.b *= factor;
    value_head.w *= factor;
    value_head.b *= factor;
}

bool Gradients::all_finite() const {
    for (const LayerParams& l : trunk)
        if (!layer_finite(l)) return false;
    return layer_finite(policy_head) && layer_finite(value_head);
}

Mlp init_mlp(const std::vector<int>& trunk_sizes, int action_count, std::uint64_t seed) {
    if (trunk_sizes.empty()) raise(Errc::invalid_argument, "nn: trunk_sizes must not be empty");
    for (int s : trunk_sizes)
        if (s < 1) raise(Errc::invalid_argument, "nn: layer sizes must be >= 1");
    if (action_count < 1) raise(Errc::invalid_argument, "nn: action_count must be >= 1");

    std::mt19937_64 rng(seed);
    auto make_layer = [&rng](int out, int in) {
        // Uniform on [-sqrt(6/fan_in), sqrt(6/fan_in)]: variance 2/fan_in.
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        LayerParams l;
        l.w.resize(out, in);
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c) l.w(r, c) = dist(rng);
        l.b = Eigen::VectorXd::Zero(out);
        return l;
    };

    Mlp mlp;
    mlp.trunk_sizes = trunk_sizes;
    mlp.action_count = action_count;
    for (std::size_t i = 1; i < trunk_sizes.size(); ++i)
        mlp.trunk.push_back(make_layer(trunk_sizes[i], trunk_sizes[i - 1]));
    mlp.policy_head = make_layer(action_count, trunk_sizes.back());
    mlp.value_head = make_layer(1, trunk_sizes.back());
    return mlp;
}

ForwardResult forward(const Mlp& mlp, const std::vector<double>& obs) {
    if (static_cast<int>(obs.size()) != mlp.input_size())
        raise(Errc::invalid_argument, "nn: observation size mismatch");

    ForwardResult out;
    out.cache.activations.reserve(mlp.trunk.size() + 1);
    out.cache.activations.push_back(
        Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size())));
    for (const LayerParams& l : mlp.trunk) {
        Eigen::VectorXd h = (l.w * out.cache.activations.back() + l.b).cwiseMax(0.0);
        out.cache.activations.push_back(std::move(h));
    }
    const Eigen::VectorXd& top = out.cache.activations.back();
    out.cache.logits = mlp.policy_head.w * top + mlp.policy_head.b;
    out.policy = softmax(out.cache.logits);
    out.value = (mlp.value_head.w * top)(0) + mlp.value_head.b(0);
    out.cache.policy = out.policy;
    out.cache.value = out.value;
    return out;
}

Gradients backward(const Mlp& mlp, const ForwardCache& cache, int action, double advantage,
                   double value_target, double entropy_beta) {
    if (action < 0 || action >= mlp.action_count)
        raise(Errc::invalid_argument, "nn: action out of range");

    const Eigen::VectorXd& pi = cache.policy;
    // d/dlogits of -log pi(a): pi - onehot(a), scaled by the (constant) advantage.
    Eigen::VectorXd dlogits = advantage * pi;
    dlogits(action) -= advantage;
    if (entropy_beta != 0.0) {
        // d/dlogits of -beta*H: beta * pi_j * (log pi_j + H)
        const Eigen::ArrayXd logpi = pi.array().log();
        const double entropy = -(pi.array() * logpi).sum();
        dlogits.array() += entropy_beta * pi.array() * (logpi + entropy);
    }
    const double dvalue = cache.value - value_target;
    return backward_from_output_grads(mlp, cache, dlogits, dvalue);
}

Gradients backward_from_output_grads(const Mlp& mlp, const ForwardCache& cache,
                                     const Eigen::VectorXd& dlogits, double dvalue) {
    if (cache.activations.size() != mlp.trunk.size() + 1)
        raise(Errc::invalid_argument, "nn: cache does not match network depth");
    if (dlogits.size() != mlp.action_count)
        raise(Errc::invalid_argument, "nn: dlogits size mismatch");

    Gradients g;
    g.trunk.resize(mlp.trunk.size());

    const Eigen::VectorXd& top = cache.activations.back();
    g.policy_head.w = dlogits * top.transpose();
    g.policy_head.b = dlogits;
    g.value_head.w = dvalue * top.transpose();
    g.value_head.b = Eigen::VectorXd::Constant(1, dvalue);

    Eigen::VectorXd dh =
        mlp.policy_head.w.transpose() * dlogits + mlp.value_head.w.transpose() * dvalue;
    for (std::size_t i = mlp.trunk.size(); i-- > 0;) {
        // Rectifier: gradient passes only where the activation is positive.
        Eigen::VectorXd dpre =
            (cache.activations[i + 1].array() > 0.0).select(dh.array(), 0.0).matrix();
        g.trunk[i].w = dpre * cache.activations[i].transpose();
        g.trunk[i].b = dpre;
        if (i > 0) dh = mlp.trunk[i].w.transpose() * dpre;
    }
    return g;
}

Gradients zero_gradients(const Mlp& mlp) {
    Gradients g;
    auto zero_like = [](const LayerParams& l) {
        LayerParams z;
        z.w = Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols());
        z.b = Eigen::VectorXd::Zero(l.b.size());
        return z;
    };
    for (const LayerParams& l : mlp.trunk) g.trunk.push_back(zero_like(l));
    g.policy_head = zero_like(mlp.policy_head);
    g.value_head = zero_like(mlp.value_head);
    return g;
}

OptimState OptimState::create(const Mlp& mlp, double learning_rate, double decay, double epsilon) {
    if (!(learning_rate > 0.0)) raise(Errc::invalid_argument, "optim: learning rate must be positive");
    if (decay < 0.0 || decay >= 1.0) raise(Errc::invalid_argument, "optim: decay must be in [0,1)");
    if (epsilon < 0.0) raise(Errc::invalid_argument, "optim: epsilon must be >= 0");

    OptimState s;
    s.learning_rate = learning_rate;
    s.decay = decay;
    s.epsilon = epsilon;
    Gradients z = zero_gradients(mlp);
    s.trunk_g2 = std::move(z.trunk);
    s.policy_g2 = std::move(z.policy_head);
    s.value_g2 = std::move(z.value_head);
    return s;
}

bool apply(OptimState& optim, Mlp& mlp, const Gradients& grads) {
    check_congruent(mlp, grads);
    if (!grads.all_finite()) return false;

    auto update = [&optim](LayerParams& param, LayerParams& g2, const LayerParams& grad) {
        g2.w = optim.decay * g2.w.array() + (1.0 - optim.decay) * grad.w.array().square();
        g2.b = optim.decay * g2.b.array() + (1.0 - optim.decay) * grad.b.array().square();
        param.w.array() -=
            optim.learning_rate * grad.w.array() / (g2.w.array() + optim.epsilon).sqrt();
        param.b.array() -=
            optim.learning_rate * grad.b.array() / (g2.b.array() + optim.epsilon).sqrt();
    };
    for (std::size_t i = 0; i < mlp.trunk.size(); ++i)
        update(mlp.trunk[i], optim.trunk_g2[i], grads.trunk[i]);
    update(mlp.policy_head, optim.policy_g2, grads.policy_head);
    update(mlp.value_head, optim.value_g2, grads.value_head);
    return true;
}

std::vector<double> flatten_params(const Mlp& mlp) {
    std::vector<double> flat;
    flat.reserve(mlp.param_count());
    for (const LayerParams& l : mlp.trunk) append_row_major(flat, l);
    append_row_major(flat, mlp.policy_head);
    append_row_major(flat, mlp.value_head);
    return flat;
}

void save_checkpoint(const Mlp& mlp, const std::string& prefix) {
    const std::vector<double> flat = flatten_params(mlp);
    {
        std::ofstream bin(prefix + ".bin", std::ios::binary);
        if (!bin) raise(Errc::io, "checkpoint: cannot write " + prefix + ".bin");
        bin.write(reinterpret_cast<const char*>(flat.data()),
                  static_cast<std::streamsize>(flat.size() * sizeof(double)));
        if (!bin) raise(Errc::io, "checkpoint: short write to " + prefix + ".bin");
    }
    json side;
    side["format_version"] = 1;
    side["dtype"] = "float64_le";
    side["trunk_sizes"] = mlp.trunk_sizes;
    side["action_count"] = mlp.action_count;
    side["param_count"] = flat.size();
    std::ofstream meta(prefix + ".json", std::ios::binary);
    if (!meta) raise(Errc::io, "checkpoint: cannot write " + prefix + ".json");
    meta << side.dump(2) << "\n";
}

namespace {

double combined_loss(const Mlp& mlp, const std::vector<double>& obs, int action, double advantage,
                     double value_target, double beta) {
    const ForwardResult fwd = forward(mlp, obs);
    const Eigen::ArrayXd logpi = fwd.policy.array().log();
    const double entropy = -(fwd.policy.array() * logpi).sum();
    const double residual = value_target - fwd.value;
    return -std::log(fwd.policy(action)) * advantage - beta * entropy + 0.5 * residual * residual;
}

// Smallest |pre-activation| across hidden units; finite differences are
// invalid when a perturbation can cross the rectifier kink.
double min_preactivation_abs(const Mlp& mlp, const std::vector<double>& obs) {
    Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
    double min_abs = std::numeric_limits<double>::infinity();
    for (const LayerParams& l : mlp.trunk) {
        Eigen::VectorXd pre = l.w * h + l.b;
        min_abs = std::min(min_abs, pre.array().abs().minCoeff());
        h = pre.cwiseMax(0.0);
    }
    return min_abs;
}

} // namespace

GradCheckResult gradient_check(std::uint64_t seed, int cases) {
    if (cases < 1) raise(Errc::invalid_argument, "gradient_check: cases must be >= 1");
    constexpr double kStep = 1e-5;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_int_distribution<int> input_dist(3, 8);
    std::uniform_int_distribution<int> hidden_dist(4, 10);
    std::uniform_int_distribution<int> action_dist(2, 5);

    GradCheckResult result;
    result.cases = cases;
    for (int c = 0; c < cases; ++c) {
        const int input = input_dist(rng);
        const int hidden = hidden_dist(rng);
        const int actions = action_dist(rng);

        Mlp mlp;
        std::vector<double> obs;
        for (;;) {
            mlp = init_mlp({input, hidden, hidden_dist(rng)}, actions, rng());
            obs.assign(static_cast<std::size_t>(input), 0.0);
            for (double& x : obs) x = unit(rng);
            if (min_preactivation_abs(mlp, obs) > 10.0 * kStep) break;
        }

        std::uniform_int_distribution<int> pick_action(0, actions - 1);
        const int action = pick_action(rng);
        const double advantage = 2.0 * unit(rng);
        const double value_target = 2.0 * unit(rng);
        const double beta = 0.01;

        const ForwardResult fwd = forward(mlp, obs);
        const Gradients analytic =
            backward(mlp, fwd.cache, action, advantage, value_target, beta);

        auto check_layer = [&](LayerParams& param, const LayerParams& grad) {
            auto probe = [&](double& cell, double g_an) {
                const double saved = cell;
                cell = saved + kStep;
                const double up = combined_loss(mlp, obs, action, advantage, value_target, beta);
                cell = saved - kStep;
                const double down = combined_loss(mlp, obs, action, advantage, value_target, beta);
                cell = saved;
                const double g_fd = (up - down) / (2.0 * kStep);
                const double denom = std::max({std::abs(g_an), std::abs(g_fd), 1e-8});
                result.max_rel_error = std::max(result.max_rel_error, std::abs(g_an - g_fd) / denom);
            };
            for (Eigen::Index r = 0; r < param.w.rows(); ++r)
                for (Eigen::Index col = 0; col < param.w.cols(); ++col) probe(param.w(r, col), grad.w(r, col));
            for (Eigen::Index i = 0; i < param.b.size(); ++i) probe(param.b(i), grad.b(i));
        };
        for (std::size_t i = 0; i < mlp.trunk.size(); ++i) check_layer(mlp.trunk[i], analytic.trunk[i]);
        check_layer(mlp.policy_head, analytic.policy_head);
        check_layer(mlp.value_head, analytic.value_head);
    }
    return result;
}

Mlp load_checkpoint(const std::string& prefix) {
    std::ifstream meta(prefix + ".json");
    if (!meta) raise(Errc::io, "checkpoint: cannot open " + prefix + ".json");
    json side;
    try {
        meta >> side;
    } catch (const json::parse_error& e) {
        raise(Errc::parse, std::string("checkpoint: invalid sidecar json: ") + e.what());
    }
    if (side.value("format_version", 0) != 1)
        raise(Errc::parse, "checkpoint: unsupported format_version");

    const std::vector<int> trunk_sizes = side.at("trunk_sizes").get<std::vector<int>>();
    const int action_count = side.at("action_count").get<int>();
    const std::size_t expected = side.at("param_count").get<std::size_t>();

    Mlp mlp = init_mlp(trunk_sizes, action_count, 0);
    if (mlp.param_count() != expected)
        raise(Errc::parse, "checkpoint: param_count does not match layer shapes");

    std::ifstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) raise(Errc::io, "checkpoint: cannot open " + prefix + ".bin");
    std::vector<double> flat(expected);
    bin.read(reinterpret_cast<char*>(flat.data()),
             static_cast<std::streamsize>(expected * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(expected * sizeof(double)))
        raise(Errc::parse, "checkpoint: parameter file truncated");

    std::size_t pos = 0;
    for_each_layer(mlp, [&](LayerParams& l) { read_row_major(flat, pos, l); });
    return mlp;
}

} // namespace msched
