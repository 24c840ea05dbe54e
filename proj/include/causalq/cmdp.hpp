#pragma once

#include "causalq/rng.hpp"
#include "causalq/tables.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace causalq {

/// Raw mechanism tables of a confounded MDP with finite state, action and
/// noise spaces. The noise u is drawn i.i.d. per step and feeds the
/// demonstrator, the reward and the transition at the same time.
struct CmdpData {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::size_t n_noise = 0;
    std::vector<double> noise_dist;    // P(u)
    std::vector<double> init_dist;     // P(s_1)
    std::vector<StateId> trans_fn;     // f_S, [s][x][u]
    std::vector<ActionId> behavior_fn; // f_X, [s][u]
    std::vector<double> reward_fn;     // f_Y, [s][x][u]
    double reward_lo = 0.0;
    double reward_hi = 1.0;
    double gamma = 0.9;

    bool operator==(const CmdpData&) const = default;
};

/// Dimensions and known constants shared by every model derived from a CMDP.
struct ModelShape {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    double reward_lo = 0.0;
    double reward_hi = 1.0;
    double gamma = 0.9;
};

/// Validated confounded MDP. Construction throws std::invalid_argument if any
/// invariant of the mechanism tables fails.
class Cmdp {
public:
    explicit Cmdp(CmdpData data) : d_(std::move(data)) {
        validate();
        absorbing_.resize(d_.n_states);
        for (StateId s = 0; s < d_.n_states; ++s) absorbing_[s] = compute_absorbing(s);
    }

    const CmdpData& data() const { return d_; }

    std::size_t n_states() const { return d_.n_states; }
    std::size_t n_actions() const { return d_.n_actions; }
    std::size_t n_noise() const { return d_.n_noise; }
    double gamma() const { return d_.gamma; }
    double reward_lo() const { return d_.reward_lo; }
    double reward_hi() const { return d_.reward_hi; }
    ModelShape shape() const { return {d_.n_states, d_.n_actions, d_.reward_lo, d_.reward_hi, d_.gamma}; }

    std::span<const double> noise_dist() const { return d_.noise_dist; }
    std::span<const double> init_dist() const { return d_.init_dist; }

    StateId next_state(StateId s, ActionId x, std::size_t u) const { return d_.trans_fn[idx3(s, x, u)]; }
    ActionId behavior(StateId s, std::size_t u) const { return d_.behavior_fn[s * d_.n_noise + u]; }
    double reward(StateId s, ActionId x, std::size_t u) const { return d_.reward_fn[idx3(s, x, u)]; }

    /// Self-looping, zero-reward state under every action and noise value.
    /// Entering such a state ends an episode.
    bool is_absorbing(StateId s) const { return absorbing_[s]; }

    bool operator==(const Cmdp& o) const { return d_ == o.d_; }

private:
    std::size_t idx3(StateId s, ActionId x, std::size_t u) const {
        return (s * d_.n_actions + x) * d_.n_noise + u;
    }

    static void check_distribution(std::span<const double> p, std::size_t n, const char* name) {
        if (p.size() != n) throw std::invalid_argument(std::string("Cmdp: ") + name + " has wrong length");
        double sum = 0.0;
        for (double v : p) {
            if (!(v >= 0.0) || !std::isfinite(v))
                throw std::invalid_argument(std::string("Cmdp: ") + name + " has a negative or non-finite entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw std::invalid_argument(std::string("Cmdp: ") + name + " does not sum to 1");
    }

    void validate() const {
        if (d_.n_states < 1 || d_.n_actions < 1 || d_.n_noise < 1)
            throw std::invalid_argument("Cmdp: state, action and noise counts must be >= 1");
        if (!(d_.gamma >= 0.0 && d_.gamma < 1.0)) throw std::invalid_argument("Cmdp: gamma must lie in [0, 1)");
        if (!(d_.reward_lo <= d_.reward_hi) || !std::isfinite(d_.reward_lo) || !std::isfinite(d_.reward_hi))
            throw std::invalid_argument("Cmdp: reward bounds must be finite with lo <= hi");
        check_distribution(d_.noise_dist, d_.n_noise, "noise_dist");
        check_distribution(d_.init_dist, d_.n_states, "init_dist");
        const std::size_t n3 = d_.n_states * d_.n_actions * d_.n_noise;
        if (d_.trans_fn.size() != n3 || d_.reward_fn.size() != n3 || d_.behavior_fn.size() != d_.n_states * d_.n_noise)
            throw std::invalid_argument("Cmdp: mechanism table has wrong size");
        for (StateId s : d_.trans_fn)
            if (s >= d_.n_states) throw std::invalid_argument("Cmdp: trans_fn entry out of range");
        for (ActionId x : d_.behavior_fn)
            if (x >= d_.n_actions) throw std::invalid_argument("Cmdp: behavior_fn entry out of range");
        for (double y : d_.reward_fn)
            if (!(y >= d_.reward_lo && y <= d_.reward_hi))
                throw std::invalid_argument("Cmdp: reward_fn entry outside [reward_lo, reward_hi]");
    }

    bool compute_absorbing(StateId s) const {
        for (ActionId x = 0; x < d_.n_actions; ++x)
            for (std::size_t u = 0; u < d_.n_noise; ++u)
                if (next_state(s, x, u) != s || reward(s, x, u) != 0.0) return false;
        return true;
    }

    CmdpData d_;
    std::vector<bool> absorbing_;
};

struct Transition {
    StateId s = 0;
    ActionId x = 0;
    double y = 0.0;
    StateId s_next = 0;
    bool done = false;

    bool operator==(const Transition&) const = default;
};

enum class Regime { observational, interventional };

struct Trajectory {
    std::vector<Transition> steps;
    Regime regime = Regime::observational;

    bool operator==(const Trajectory&) const = default;
};

/// Checks index ranges, reward bounds and the chaining of consecutive steps.
inline void validate_trajectory(const Trajectory& t, const ModelShape& shape) {
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const auto& r = t.steps[i];
        if (r.s >= shape.n_states || r.s_next >= shape.n_states || r.x >= shape.n_actions)
            throw std::invalid_argument("trajectory: index out of range at step " + std::to_string(i));
        if (r.y < shape.reward_lo || r.y > shape.reward_hi)
            throw std::invalid_argument("trajectory: reward out of bounds at step " + std::to_string(i));
        if (i + 1 < t.steps.size() && !r.done && t.steps[i + 1].s != r.s_next)
            throw std::invalid_argument("trajectory: broken chain at step " + std::to_string(i));
    }
}

/// Interventional transition kernel T(s, x, s') and expected reward R(s, x).
struct InterventionalModel {
    Table3 trans;
    Table2 reward;
};

inline InterventionalModel marginalize_interventional(const Cmdp& m) {
    const std::size_t S = m.n_states(), X = m.n_actions(), U = m.n_noise();
    InterventionalModel out{Table3(S, X, S, 0.0), Table2(S, X, 0.0)};
    for (StateId s = 0; s < S; ++s)
        for (ActionId x = 0; x < X; ++x)
            for (std::size_t u = 0; u < U; ++u) {
                const double pu = m.noise_dist()[u];
                out.trans(s, x, m.next_state(s, x, u)) += pu;
                out.reward(s, x) += pu * m.reward(s, x, u);
            }
    return out;
}

/// Observationally identifiable quantities: P(x|s), the nominal kernel and
/// the nominal mean reward. Pairs with no support keep a uniform placeholder
/// kernel and reward_lo; they are flagged and only ever enter the causal
/// backup with weight P(x|s) = 0. States never visited keep an all-zero
/// P(.|s) row, which makes every backup from them fully pessimistic.
struct NominalModel {
    Table2 p_beh;
    Table3 t_tilde;
    Table2 r_tilde;
    std::vector<std::uint64_t> counts;  // [s * n_actions + x]
    std::vector<char> supported;        // [s * n_actions + x]
    std::vector<char> terminal;         // [s], episode ends on entry
    double reward_lo = 0.0;
    double reward_hi = 1.0;
    double gamma = 0.9;

    std::size_t n_states() const { return p_beh.rows(); }
    std::size_t n_actions() const { return p_beh.cols(); }
    bool is_supported(StateId s, ActionId x) const { return supported[s * n_actions() + x] != 0; }
    bool is_terminal(StateId s) const { return terminal[s] != 0; }
    std::uint64_t count(StateId s, ActionId x) const { return counts[s * n_actions() + x]; }

    static NominalModel empty(const ModelShape& shape) {
        const std::size_t S = shape.n_states, X = shape.n_actions;
        NominalModel n;
        n.p_beh = Table2(S, X, 0.0);
        n.t_tilde = Table3(S, X, S, 1.0 / static_cast<double>(S));
        n.r_tilde = Table2(S, X, shape.reward_lo);
        n.counts.assign(S * X, 0);
        n.supported.assign(S * X, 0);
        n.terminal.assign(S, 0);
        n.reward_lo = shape.reward_lo;
        n.reward_hi = shape.reward_hi;
        n.gamma = shape.gamma;
        return n;
    }

    void validate(double tol = 1e-9) const {
        const std::size_t S = n_states(), X = n_actions();
        if (t_tilde.dim0() != S || t_tilde.dim1() != X || t_tilde.dim2() != S || r_tilde.rows() != S ||
            r_tilde.cols() != X || supported.size() != S * X || counts.size() != S * X || terminal.size() != S)
            throw std::invalid_argument("NominalModel: inconsistent shapes");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("NominalModel: gamma must lie in [0, 1)");
        for (StateId s = 0; s < S; ++s) {
            double row = 0.0;
            for (ActionId x = 0; x < X; ++x) {
                if (!(p_beh(s, x) >= 0.0)) throw std::invalid_argument("NominalModel: negative P(x|s)");
                row += p_beh(s, x);
                if (!is_supported(s, x)) continue;
                double t = 0.0;
                for (double p : t_tilde.row(s, x)) t += p;
                if (std::abs(t - 1.0) > tol) throw std::invalid_argument("NominalModel: kernel row does not sum to 1");
                if (r_tilde(s, x) < reward_lo - tol || r_tilde(s, x) > reward_hi + tol)
                    throw std::invalid_argument("NominalModel: nominal reward outside bounds");
            }
            if (row != 0.0 && std::abs(row - 1.0) > tol)
                throw std::invalid_argument("NominalModel: P(.|s) does not sum to 1");
        }
    }
};

/// Closed-form nominal model of the behavioural process. With
/// `epsilon > 0` the logged action is replaced, with that probability, by a
/// uniformly random executed action drawn independently of u.
inline NominalModel exact_nominal(const Cmdp& m, double epsilon = 0.0) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("exact_nominal: epsilon outside [0, 1]");
    const std::size_t S = m.n_states(), X = m.n_actions(), U = m.n_noise();
    NominalModel n = NominalModel::empty(m.shape());
    Table3 joint(S, X, S, 0.0);
    Table2 reward_mass(S, X, 0.0);
    const double explore = epsilon / static_cast<double>(X);
    for (StateId s = 0; s < S; ++s) {
        n.terminal[s] = m.is_absorbing(s) ? 1 : 0;
        for (std::size_t u = 0; u < U; ++u) {
            const double pu = m.noise_dist()[u];
            for (ActionId x = 0; x < X; ++x) {
                const double w = pu * ((m.behavior(s, u) == x ? 1.0 - epsilon : 0.0) + explore);
                if (w == 0.0) continue;
                n.p_beh(s, x) += w;
                joint(s, x, m.next_state(s, x, u)) += w;
                reward_mass(s, x) += w * m.reward(s, x, u);
            }
        }
        for (ActionId x = 0; x < X; ++x) {
            const double p = n.p_beh(s, x);
            if (p <= 0.0) continue;
            n.supported[s * X + x] = 1;
            for (StateId sp = 0; sp < S; ++sp) n.t_tilde(s, x, sp) = joint(s, x, sp) / p;
            n.r_tilde(s, x) = std::clamp(reward_mass(s, x) / p, m.reward_lo(), m.reward_hi());
        }
    }
    return n;
}

inline StateId sample_initial(const Cmdp& m, Rng& rng) { return rng.categorical(m.init_dist()); }

/// One environment step from state s. `executed` overrides the demonstrator
/// action when set; the noise value is drawn either way.
struct StepOutcome {
    Transition t;
    std::size_t u = 0;
};

inline StepOutcome step_environment(const Cmdp& m, StateId s, Rng& rng, const ActionId* executed) {
    const std::size_t u = rng.categorical(m.noise_dist());
    const ActionId x = executed ? *executed : m.behavior(s, u);
    const StateId sp = m.next_state(s, x, u);
    return {{s, x, m.reward(s, x, u), sp, m.is_absorbing(sp)}, u};
}

inline Trajectory sample_observational(const Cmdp& m, std::size_t horizon, std::uint64_t seed) {
    if (horizon < 1) throw std::invalid_argument("sample_observational: horizon must be >= 1");
    Rng rng(seed);
    Trajectory out{{}, Regime::observational};
    out.steps.reserve(horizon);
    StateId s = sample_initial(m, rng);
    for (std::size_t t = 0; t < horizon; ++t) {
        const auto step = step_environment(m, s, rng, nullptr);
        out.steps.push_back(step.t);
        s = step.t.done ? sample_initial(m, rng) : step.t.s_next;
    }
    return out;
}

inline Trajectory sample_interventional(const Cmdp& m, const Policy& policy, std::size_t horizon,
                                        std::uint64_t seed) {
    if (horizon < 1) throw std::invalid_argument("sample_interventional: horizon must be >= 1");
    if (policy.n_states() != m.n_states() || policy.n_actions() != m.n_actions())
        throw std::invalid_argument("sample_interventional: policy shape mismatch");
    policy.validate();
    Rng rng(seed);
    Rng action_rng = rng.split(1);
    Trajectory out{{}, Regime::interventional};
    out.steps.reserve(horizon);
    StateId s = sample_initial(m, rng);
    for (std::size_t t = 0; t < horizon; ++t) {
        const ActionId x = action_rng.categorical(policy.probs.row(s));
        const auto step = step_environment(m, s, rng, &x);
        out.steps.push_back(step.t);
        s = step.t.done ? sample_initial(m, rng) : step.t.s_next;
    }
    return out;
}

/// Maximum-likelihood nominal model from observational trajectories.
inline NominalModel estimate_nominal(std::span<const Trajectory> data, const ModelShape& shape) {
    if (data.empty()) throw std::invalid_argument("estimate_nominal: no data");
    const std::size_t S = shape.n_states, X = shape.n_actions;
    NominalModel n = NominalModel::empty(shape);
    Table3 next_counts(S, X, S, 0.0);
    Table2 reward_sum(S, X, 0.0);
    std::vector<std::uint64_t> state_counts(S, 0);
    std::size_t total = 0;
    for (const auto& traj : data) {
        if (traj.regime != Regime::observational)
            throw std::invalid_argument("estimate_nominal: interventional data cannot estimate the nominal model");
        validate_trajectory(traj, shape);
        for (const auto& r : traj.steps) {
            ++n.counts[r.s * X + r.x];
            ++state_counts[r.s];
            next_counts(r.s, r.x, r.s_next) += 1.0;
            reward_sum(r.s, r.x) += r.y;
            if (r.done) n.terminal[r.s_next] = 1;
            ++total;
        }
    }
    if (total == 0) throw std::invalid_argument("estimate_nominal: no transitions");
    for (StateId s = 0; s < S; ++s) {
        if (state_counts[s] == 0) continue;
        for (ActionId x = 0; x < X; ++x) {
            const auto c = n.counts[s * X + x];
            n.p_beh(s, x) = static_cast<double>(c) / static_cast<double>(state_counts[s]);
            if (c == 0) continue;
            n.supported[s * X + x] = 1;
            const double inv = 1.0 / static_cast<double>(c);
            for (StateId sp = 0; sp < S; ++sp) n.t_tilde(s, x, sp) = next_counts(s, x, sp) * inv;
            n.r_tilde(s, x) = reward_sum(s, x) * inv;
        }
    }
    return n;
}

inline NominalModel estimate_nominal(const Trajectory& data, const ModelShape& shape) {
    return estimate_nominal(std::span<const Trajectory>(&data, 1), shape);
}

}  // namespace causalq
