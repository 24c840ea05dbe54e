#pragma once

#include "causalq/causalq.hpp"

namespace fixtures {

using namespace causalq;

/// One state, two actions, self-loop; P(x0|s0)=0.6, R~=(1.0, 0.5), a=0, b=1, g=0.5.
inline NominalModel single_state_nominal() {
    NominalModel n = NominalModel::empty({1, 2, 0.0, 1.0, 0.5});
    n.p_beh(0, 0) = 0.6;
    n.p_beh(0, 1) = 0.4;
    n.r_tilde(0, 0) = 1.0;
    n.r_tilde(0, 1) = 0.5;
    n.t_tilde(0, 0, 0) = 1.0;
    n.t_tilde(0, 1, 0) = 1.0;
    n.supported = {1, 1};
    return n;
}

/// CMDP with a single noise value: every mechanism is deterministic.
inline Cmdp deterministic_cmdp(double gamma = 0.9) {
    CmdpData d;
    d.n_states = 3;
    d.n_actions = 2;
    d.n_noise = 1;
    d.gamma = gamma;
    d.reward_lo = 0.0;
    d.reward_hi = 1.0;
    d.noise_dist = {1.0};
    d.init_dist = {1.0, 0.0, 0.0};
    // [s][x][u]
    d.trans_fn = {1, 2, 2, 0, 0, 1};
    d.reward_fn = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    d.behavior_fn = {1, 0, 1};
    return Cmdp(std::move(d));
}

inline Cmdp random_cmdp(std::size_t S, std::size_t X, std::size_t U, std::uint64_t seed, double gamma = 0.9,
                        double strength = 1.0) {
    RandomCmdpOptions o;
    o.n_states = S;
    o.n_actions = X;
    o.n_noise = U;
    o.seed = seed;
    o.gamma = gamma;
    o.confounding_strength = strength;
    return make_random_cmdp(o);
}

/// Max absolute difference on P(x|s) and on supported kernel/reward entries.
inline double nominal_distance(const NominalModel& a, const NominalModel& b) {
    double d = 0.0;
    for (StateId s = 0; s < a.n_states(); ++s)
        for (ActionId x = 0; x < a.n_actions(); ++x) {
            d = std::max(d, std::abs(a.p_beh(s, x) - b.p_beh(s, x)));
            if (!a.is_supported(s, x) || !b.is_supported(s, x)) continue;
            d = std::max(d, std::abs(a.r_tilde(s, x) - b.r_tilde(s, x)));
            for (StateId sp = 0; sp < a.n_states(); ++sp)
                d = std::max(d, std::abs(a.t_tilde(s, x, sp) - b.t_tilde(s, x, sp)));
        }
    return d;
}

// Random valid nominal model that is not tied to any CMDP.
inline NominalModel random_nominal(std::size_t S, std::size_t X, double gamma, Rng& rng) {
    NominalModel n = NominalModel::empty({S, X, -1.0, 2.0, gamma});
    for (StateId s = 0; s < S; ++s) {
        double z = 0.0;
        for (ActionId x = 0; x < X; ++x) z += n.p_beh(s, x) = rng.bernoulli(0.3) ? 0.0 : rng.uniform();
        if (z == 0.0) n.p_beh(s, 0) = z = 1.0;
        for (ActionId x = 0; x < X; ++x) {
            n.p_beh(s, x) /= z;
            n.supported[s * X + x] = n.p_beh(s, x) > 0.0;
            n.r_tilde(s, x) = rng.uniform(-1.0, 2.0);
            double zt = 0.0;
            for (StateId sp = 0; sp < S; ++sp) zt += n.t_tilde(s, x, sp) = rng.uniform();
            for (StateId sp = 0; sp < S; ++sp) n.t_tilde(s, x, sp) /= zt;
        }
    }
    return n;
}

}  // namespace fixtures
