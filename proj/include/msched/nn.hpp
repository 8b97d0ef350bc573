#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace msched {

struct LayerParams {
    Eigen::MatrixXd w; // out x in
    Eigen::VectorXd b;
};

/// Feed-forward trunk with rectifier activations plus two linear heads:
/// a softmax policy over the action set and a scalar state value.
struct Mlp {
    std::vector<int> trunk_sizes; // input followed by hidden widths
    int action_count = 0;
    std::vector<LayerParams> trunk;
    LayerParams policy_head;
    LayerParams value_head;

    int input_size() const { return trunk_sizes.front(); }
    std::size_t param_count() const;
    bool all_finite() const;
};

/// Shape-congruent with the Mlp that produced them; usable as accumulators.
struct Gradients {
    std::vector<LayerParams> trunk;
    LayerParams policy_head;
    LayerParams value_head;

    void add(const Gradients& other);
    void scale(double factor);
    bool all_finite() const;
};

struct ForwardCache {
    std::vector<Eigen::VectorXd> activations; // [0] = input, then post-relu
    Eigen::VectorXd logits;                   // policy head pre-softmax
    Eigen::VectorXd policy;
    double value = 0.0;
};

struct ForwardResult {
    Eigen::VectorXd policy; // probability simplex over actions
    double value = 0.0;
    ForwardCache cache;
};

/// He-uniform weights (variance 2/fan_in), zero biases; deterministic per
/// seed. trunk_sizes = {input, hidden...}; both heads hang off the last
/// hidden layer.
Mlp init_mlp(const std::vector<int>& trunk_sizes, int action_count, std::uint64_t seed);

ForwardResult forward(const Mlp& mlp, const std::vector<double>& obs);

/// Gradients of  −log π(a|s)·advantage − β·H(π) + ½(value_target − V(s))²
/// with the advantage treated as a constant. Exact (matches central finite
/// differences).
Gradients backward(const Mlp& mlp, const ForwardCache& cache, int action, double advantage,
                   double value_target, double entropy_beta);

/// Backpropagates caller-supplied gradients at the two heads. The policy /
/// value combined loss above and the Q-residual loss both reduce to this.
Gradients backward_from_output_grads(const Mlp& mlp, const ForwardCache& cache,
                                     const Eigen::VectorXd& dlogits, double dvalue);

Gradients zero_gradients(const Mlp& mlp);

/// Root-mean-square optimizer state shared across updates:
///   g2 <- rho*g2 + (1-rho)*grad²;  param <- param - lr*grad/sqrt(g2+eps).
struct OptimState {
    double learning_rate = 7e-4;
    double decay = 0.99;
    double epsilon = 1e-5;
    std::vector<LayerParams> trunk_g2;
    LayerParams policy_g2;
    LayerParams value_g2;

    static OptimState create(const Mlp& mlp, double learning_rate, double decay, double epsilon);
};

/// In-place update of mlp and optim. Returns false (and changes nothing)
/// when grads contain a non-finite value.
bool apply(OptimState& optim, Mlp& mlp, const Gradients& grads);

/// Writes <prefix>.bin (flat little-endian float64 parameters) and
/// <prefix>.json (layer shapes + format version).
void save_checkpoint(const Mlp& mlp, const std::string& prefix);
Mlp load_checkpoint(const std::string& prefix);

std::vector<double> flatten_params(const Mlp& mlp);

struct GradCheckResult {
    double max_rel_error = 0.0;
    int cases = 0;
};

/// Compares analytic gradients of the combined loss against central finite
/// differences (h = 1e-5) on random small nets. Cases that land within 1e-4
/// of a rectifier kink are redrawn, since the loss is not differentiable
/// there.
GradCheckResult gradient_check(std::uint64_t seed, int cases);

} // namespace msched
