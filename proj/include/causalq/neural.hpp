#pragma once

#include "causalq/envs.hpp"
#include "causalq/learners.hpp"
#include "causalq/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace causalq {

enum class Activation { relu, identity };

/// Fully connected layer, weights stored row-major as [out][in].
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> bias;
    Activation activation = Activation::identity;

    double& w(std::size_t o, std::size_t i) { return weights[o * in + i]; }
    double w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }

    bool operator==(const DenseLayer&) const = default;
};

/// Multi-layer perceptron mapping state features to one value per action.
class MlpQNet {
public:
    MlpQNet() = default;

    explicit MlpQNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

    /// Layer sizes `dims` = {input, hidden..., n_actions}; hidden layers use
    /// relu, the output layer is linear. Weights and biases are drawn
    /// uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    static MlpQNet create(std::span<const std::size_t> dims, Rng& rng) {
        if (dims.size() < 2) throw std::invalid_argument("MlpQNet: need at least input and output sizes");
        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            DenseLayer layer{dims[l], dims[l + 1], std::vector<double>(dims[l] * dims[l + 1]),
                             std::vector<double>(dims[l + 1]),
                             l + 2 == dims.size() ? Activation::identity : Activation::relu};
            const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
            for (auto& v : layer.weights) v = rng.uniform(-bound, bound);
            for (auto& v : layer.bias) v = rng.uniform(-bound, bound);
            layers.push_back(std::move(layer));
        }
        return MlpQNet(std::move(layers));
    }

    static MlpQNet zeros(std::span<const std::size_t> dims) {
        Rng unused(0);
        MlpQNet net = create(dims, unused);
        for (auto& l : net.layers_) {
            std::fill(l.weights.begin(), l.weights.end(), 0.0);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
        return net;
    }

    std::size_t input_dim() const { return layers_.front().in; }
    std::size_t output_dim() const { return layers_.back().out; }
    std::size_t n_layers() const { return layers_.size(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    std::size_t n_params() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
        return n;
    }

    /// Flat view helpers (weights then bias, layer by layer).
    double& param(std::size_t k) {
        for (auto& l : layers_) {
            if (k < l.weights.size()) return l.weights[k];
            k -= l.weights.size();
            if (k < l.bias.size()) return l.bias[k];
            k -= l.bias.size();
        }
        throw std::out_of_range("MlpQNet::param");
    }
    double param(std::size_t k) const { return const_cast<MlpQNet&>(*this).param(k); }

    void validate() const {
        if (layers_.empty()) throw std::invalid_argument("MlpQNet: no layers");
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& L = layers_[l];
            if (L.in == 0 || L.out == 0 || L.weights.size() != L.in * L.out || L.bias.size() != L.out)
                throw std::invalid_argument("MlpQNet: layer " + std::to_string(l) + " has inconsistent sizes");
            if (l > 0 && layers_[l - 1].out != L.in) throw std::invalid_argument("MlpQNet: layer sizes do not chain");
            for (double v : L.weights)
                if (!std::isfinite(v)) throw std::invalid_argument("MlpQNet: non-finite weight");
            for (double v : L.bias)
                if (!std::isfinite(v)) throw std::invalid_argument("MlpQNet: non-finite bias");
        }
        if (layers_.back().activation != Activation::identity)
            throw std::invalid_argument("MlpQNet: output layer must be linear");
    }

    bool operator==(const MlpQNet&) const = default;

private:
    std::vector<DenseLayer> layers_;
};

/// Gradient with the same shape as the network parameters.
struct NetGradient {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;

    static NetGradient zeros_like(const MlpQNet& net) {
        NetGradient g;
        for (const auto& l : net.layers()) {
            g.weights.emplace_back(l.weights.size(), 0.0);
            g.bias.emplace_back(l.bias.size(), 0.0);
        }
        return g;
    }

    double flat(std::size_t k) const {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (k < weights[l].size()) return weights[l][k];
            k -= weights[l].size();
            if (k < bias[l].size()) return bias[l][k];
            k -= bias[l].size();
        }
        throw std::out_of_range("NetGradient::flat");
    }
};

namespace detail {

inline std::vector<double> dense_forward(const DenseLayer& L, std::span<const double> in) {
    std::vector<double> z(L.bias);
    for (std::size_t o = 0; o < L.out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < L.in; ++i) acc += L.w(o, i) * in[i];
        z[o] += acc;
    }
    return z;
}

inline void activate(std::vector<double>& z, Activation a) {
    if (a == Activation::relu)
        for (auto& v : z) v = v > 0.0 ? v : 0.0;
}

/// Per-layer inputs and pre-activations of one forward pass.
struct ForwardTrace {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> pre;
    std::vector<double> output;
};

inline ForwardTrace forward_trace(const MlpQNet& net, std::span<const double> features) {
    ForwardTrace tr;
    std::vector<double> a(features.begin(), features.end());
    for (const auto& L : net.layers()) {
        auto z = dense_forward(L, a);
        tr.inputs.push_back(std::move(a));
        tr.pre.push_back(z);
        activate(z, L.activation);
        a = std::move(z);
    }
    tr.output = std::move(a);
    return tr;
}

/// Accumulates d(out . upstream)/d(theta) into g.
inline void backward(const MlpQNet& net, const ForwardTrace& tr, std::vector<double> upstream, NetGradient& g) {
    for (std::size_t l = net.n_layers(); l-- > 0;) {
        const auto& L = net.layers()[l];
        if (L.activation == Activation::relu)
            for (std::size_t o = 0; o < L.out; ++o)
                if (tr.pre[l][o] <= 0.0) upstream[o] = 0.0;
        const auto& in = tr.inputs[l];
        std::vector<double> down(L.in, 0.0);
        for (std::size_t o = 0; o < L.out; ++o) {
            const double d = upstream[o];
            if (d == 0.0) continue;
            g.bias[l][o] += d;
            double* gw = g.weights[l].data() + o * L.in;
            for (std::size_t i = 0; i < L.in; ++i) {
                gw[i] += d * in[i];
                down[i] += d * L.w(o, i);
            }
        }
        upstream = std::move(down);
    }
}

}  // namespace detail

inline std::vector<double> forward(const MlpQNet& net, std::span<const double> features) {
    if (features.size() != net.input_dim())
        throw std::invalid_argument("forward: feature length " + std::to_string(features.size()) +
                                    " does not match input dim " + std::to_string(net.input_dim()));
    std::vector<double> a(features.begin(), features.end());
    for (const auto& L : net.layers()) {
        a = detail::dense_forward(L, a);
        detail::activate(a, L.activation);
    }
    return a;
}

/// B transitions in feature space.
struct Minibatch {
    Table2 states;       // [i][feature]
    std::vector<ActionId> actions;
    std::vector<double> rewards;
    Table2 next_states;  // [i][feature]
    std::vector<char> done;

    std::size_t size() const { return actions.size(); }

    void validate(std::size_t input_dim, std::size_t n_actions, double reward_lo, double reward_hi) const {
        const std::size_t B = actions.size();
        if (B == 0) throw std::invalid_argument("Minibatch: empty");
        if (states.rows() != B || next_states.rows() != B || rewards.size() != B || done.size() != B)
            throw std::invalid_argument("Minibatch: inconsistent lengths");
        if (states.cols() != input_dim || next_states.cols() != input_dim)
            throw std::invalid_argument("Minibatch: feature length does not match the network");
        for (std::size_t i = 0; i < B; ++i) {
            if (actions[i] >= n_actions) throw std::invalid_argument("Minibatch: action out of range");
            if (rewards[i] < reward_lo || rewards[i] > reward_hi)
                throw std::invalid_argument("Minibatch: reward outside [a, b]");
        }
    }

    static Minibatch from_transitions(std::span<const Transition> ts, const FeatureMap& fm) {
        Minibatch b{Table2(ts.size(), fm.dim()), {}, {}, Table2(ts.size(), fm.dim()), {}};
        for (std::size_t i = 0; i < ts.size(); ++i) {
            std::copy_n(fm(ts[i].s).begin(), fm.dim(), b.states.row(i).begin());
            std::copy_n(fm(ts[i].s_next).begin(), fm.dim(), b.next_states.row(i).begin());
            b.actions.push_back(ts[i].x);
            b.rewards.push_back(ts[i].y);
            b.done.push_back(ts[i].done ? 1 : 0);
        }
        return b;
    }
};

/// States considered for the worst-case next state, with terminal flags
/// (a terminal candidate is worth 0).
struct CandidateSet {
    Table2 features;
    std::vector<char> terminal;

    std::size_t size() const { return features.rows(); }
};

/// w_i(x) for the batch: y_i + g max_x' Q(s_{i+1}, x') on the logged action,
/// a + g min_c max_x' Q(c, x') elsewhere, all evaluated with `target_net`.
/// A terminal transition drops the bootstrap on the logged action.
inline Table2 causal_targets(const MlpQNet& target_net, const Minibatch& batch, double a, double gamma,
                             const CandidateSet& candidates) {
    if (candidates.size() == 0) throw std::invalid_argument("causal_targets: no candidate states");
    if (!candidates.terminal.empty() && candidates.terminal.size() != candidates.size())
        throw std::invalid_argument("causal_targets: candidate terminal flags have wrong length");
    const std::size_t X = target_net.output_dim();
    batch.validate(target_net.input_dim(), X, -std::numeric_limits<double>::infinity(),
                   std::numeric_limits<double>::infinity());
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        double v = 0.0;
        if (candidates.terminal.empty() || !candidates.terminal[c]) {
            const auto out = forward(target_net, candidates.features.row(c));
            v = *std::max_element(out.begin(), out.end());
        }
        worst = std::min(worst, v);
    }
    const double other = a + gamma * worst;
    Table2 w(batch.size(), X, other);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double boot = 0.0;
        if (!batch.done[i]) {
            const auto out = forward(target_net, batch.next_states.row(i));
            boot = *std::max_element(out.begin(), out.end());
        }
        w(i, batch.actions[i]) = batch.rewards[i] + gamma * boot;
    }
    return w;
}

/// Mean over the batch of sum_x (w_i(x) - Q(s_i, x))^2 for fixed targets.
inline double causal_loss_with_targets(const MlpQNet& net, const Minibatch& batch, const Table2& targets) {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto q = forward(net, batch.states.row(i));
        for (std::size_t x = 0; x < q.size(); ++x) {
            const double e = targets(i, x) - q[x];
            total += e * e;
        }
    }
    return total / static_cast<double>(batch.size());
}

/// Gradient of causal_loss_with_targets; the targets are constants.
inline NetGradient causal_grad_with_targets(const MlpQNet& net, const Minibatch& batch, const Table2& targets) {
    NetGradient g = NetGradient::zeros_like(net);
    const double scale = 2.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto tr = detail::forward_trace(net, batch.states.row(i));
        std::vector<double> upstream(tr.output.size());
        for (std::size_t x = 0; x < upstream.size(); ++x) upstream[x] = scale * (tr.output[x] - targets(i, x));
        detail::backward(net, tr, std::move(upstream), g);
    }
    return g;
}

inline double causal_loss(const MlpQNet& net, const MlpQNet& target_net, const Minibatch& batch, double a,
                          double gamma, const CandidateSet& candidates) {
    return causal_loss_with_targets(net, batch, causal_targets(target_net, batch, a, gamma, candidates));
}

inline NetGradient causal_grad(const MlpQNet& net, const MlpQNet& target_net, const Minibatch& batch, double a,
                               double gamma, const CandidateSet& candidates) {
    return causal_grad_with_targets(net, batch, causal_targets(target_net, batch, a, gamma, candidates));
}

/// theta <- theta - lr * g
inline void sgd_step(MlpQNet& net, const NetGradient& g, double lr) {
    auto& layers = net.layers();
    if (g.weights.size() != layers.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (g.weights[l].size() != layers[l].weights.size() || g.bias[l].size() != layers[l].bias.size())
            throw std::invalid_argument("sgd_step: gradient shape mismatch");
        for (std::size_t k = 0; k < layers[l].weights.size(); ++k) layers[l].weights[k] -= lr * g.weights[l][k];
        for (std::size_t k = 0; k < layers[l].bias.size(); ++k) layers[l].bias[k] -= lr * g.bias[l][k];
    }
}

inline MlpQNet sync_target(const MlpQNet& net) { return net; }

/// Network architecture for neural_causal_dqn.
struct NetSpec {
    std::vector<std::size_t> hidden{64};
    bool zero_init = false;
    bool frozen = false;  // skip gradient steps entirely
};

struct NeuralResult {
    MlpQNet net;
    LearningCurve curve;
};

/// Q-values of every state of a finite CMDP under the network.
inline QTable net_q_table(const MlpQNet& net, const FeatureMap& fm) {
    QTable q(fm.n_states(), net.output_dim(), QKind::q_lower);
    for (StateId s = 0; s < fm.n_states(); ++s) {
        const auto out = forward(net, fm(s));
        std::copy(out.begin(), out.end(), q.values.row(s).begin());
    }
    return q;
}

/// Causal deep Q-learning: demonstrator query, replay, causal targets from
/// the target network, one SGD step per environment step, periodic sync.
inline NeuralResult neural_causal_dqn(const Cmdp& m, const FeatureMap& fm, const LearnerConfig& cfg,
                                      const NetSpec& spec = {}) {
    cfg.validate_against(m);
    if (cfg.bound_side != BoundSide::lower) throw std::invalid_argument("neural_causal_dqn: only the lower bound is learned");
    if (fm.n_states() != m.n_states()) throw std::invalid_argument("neural_causal_dqn: feature map does not cover the states");
    Rng root(cfg.seed);
    std::vector<std::size_t> dims{fm.dim()};
    dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
    dims.push_back(m.n_actions());
    Rng init_rng = root.split(3);
    MlpQNet net = spec.zero_init ? MlpQNet::zeros(dims) : MlpQNet::create(dims, init_rng);
    MlpQNet target = sync_target(net);

    detail::DemonstratorStream stream(m, cfg, root.split(1));
    Rng replay_rng = root.split(2);
    LearningCurve curve{"causal_neural", cfg.seed, {}};
    const std::size_t period = cfg.eval_period();
    const std::uint64_t eval_seed = root.split(1000).seed();
    const auto start = std::chrono::steady_clock::now();

    for (std::size_t t = 0; t < cfg.total_steps; ++t) {
        stream.advance(t);
        if (!spec.frozen) {
            const auto transitions = stream.buffer().sample_batch(cfg.batch_size, replay_rng);
            const auto batch = Minibatch::from_transitions(transitions, fm);
            const auto cand_states = detail::draw_candidates(stream.buffer(), cfg, m.n_states(), replay_rng);
            CandidateSet cands{Table2(cand_states.size(), fm.dim()), std::vector<char>(cand_states.size(), 0)};
            for (std::size_t k = 0; k < cand_states.size(); ++k) {
                std::copy_n(fm(cand_states[k]).begin(), fm.dim(), cands.features.row(k).begin());
                cands.terminal[k] = stream.seen_terminal()[cand_states[k]];
            }
            const auto w = causal_targets(target, batch, cfg.reward_lo, cfg.gamma, cands);
            sgd_step(net, causal_grad_with_targets(net, batch, w), cfg.learning_rate_at(t));
        }
        const std::size_t done_steps = t + 1;
        if (done_steps % cfg.target_sync_period == 0) target = sync_target(net);
        if (done_steps % period == 0) {
            auto point = evaluate_policy_returns(m, greedy_policy(net_q_table(net, fm)), cfg.eval_episodes,
                                                 cfg.eval_horizon, eval_seed);
            point.step = done_steps;
            point.wall_time = detail::elapsed_seconds(start);
            curve.points.push_back(point);
        }
    }
    return {std::move(net), std::move(curve)};
}

}  // namespace causalq
