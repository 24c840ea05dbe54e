#pragma once

#include "causalq/cmdp.hpp"
#include "causalq/rng.hpp"
#include "causalq/solvers.hpp"

#include <array>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace causalq {

/// Per-state feature vectors for function approximation, one row per state.
struct FeatureMap {
    Table2 features;

    std::size_t dim() const { return features.cols(); }
    std::size_t n_states() const { return features.rows(); }
    std::span<const double> operator()(StateId s) const { return features.row(s); }

    static FeatureMap one_hot(std::size_t n_states) {
        FeatureMap f{Table2(n_states, n_states, 0.0)};
        for (StateId s = 0; s < n_states; ++s) f.features(s, s) = 1.0;
        return f;
    }
};

struct RandomCmdpOptions {
    std::size_t n_states = 5;
    std::size_t n_actions = 3;
    std::size_t n_noise = 4;
    double gamma = 0.9;
    std::uint64_t seed = 0;
    /// 0: the demonstrator ignores u; 1: its action is a function of u alone.
    double confounding_strength = 1.0;
    bool uniform_noise = false;
};

/// Random CMDP with rewards in [0, 1]. For each state the demonstrator has a
/// default action and a random permutation mapping u to an action; every
/// (s, u) cell follows the permutation with probability equal to the
/// confounding strength.
inline Cmdp make_random_cmdp(const RandomCmdpOptions& o) {
    if (o.n_states < 1 || o.n_actions < 1 || o.n_noise < 1)
        throw std::invalid_argument("make_random_cmdp: sizes must be >= 1");
    if (!(o.confounding_strength >= 0.0 && o.confounding_strength <= 1.0))
        throw std::invalid_argument("make_random_cmdp: confounding_strength outside [0, 1]");
    Rng rng(o.seed);
    const std::size_t S = o.n_states, X = o.n_actions, U = o.n_noise;
    CmdpData d;
    d.n_states = S;
    d.n_actions = X;
    d.n_noise = U;
    d.gamma = o.gamma;
    d.reward_lo = 0.0;
    d.reward_hi = 1.0;

    auto random_simplex = [&](std::size_t n) {
        std::vector<double> p(n);
        for (auto& v : p) v = 0.05 + rng.uniform();
        const double sum = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& v : p) v /= sum;
        // push the round-off into the first entry so the sum is exact to 1 ulp
        p[0] = 1.0 - std::accumulate(p.begin() + 1, p.end(), 0.0);
        return p;
    };
    d.noise_dist = o.uniform_noise ? std::vector<double>(U, 1.0 / static_cast<double>(U)) : random_simplex(U);
    d.init_dist = random_simplex(S);

    d.trans_fn.resize(S * X * U);
    d.reward_fn.resize(S * X * U);
    for (std::size_t i = 0; i < S * X * U; ++i) {
        d.trans_fn[i] = static_cast<StateId>(rng.below(S));
        d.reward_fn[i] = rng.uniform();
    }

    d.behavior_fn.resize(S * U);
    for (StateId s = 0; s < S; ++s) {
        const auto fallback = static_cast<ActionId>(rng.below(X));
        std::vector<ActionId> perm(X);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = X; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
        for (std::size_t u = 0; u < U; ++u) {
            const bool follow_u = rng.uniform() < o.confounding_strength;
            d.behavior_fn[s * U + u] = follow_u ? perm[u % X] : fallback;
        }
    }
    return Cmdp(std::move(d));
}

/// Value of the naive and causal greedy policies in the true model.
struct GapCertificate {
    double naive_value = 0.0;
    double causal_value = 0.0;
    double gap() const { return causal_value - naive_value; }
};

/// The naive policy is greedy for standard value iteration on the nominal
/// model (what unconfounded off-policy learning converges to); the causal one
/// is greedy for the lower causal bound. Both are scored from the initial
/// distribution by exact policy evaluation.
inline GapCertificate confounding_gap(const Cmdp& m, const SolveOptions& opt = {}) {
    const auto nom = exact_nominal(m);
    const auto naive = greedy_policy(standard_value_iteration(nom.t_tilde, nom.r_tilde, nom.gamma, opt).q);
    const auto causal = greedy_policy(causal_bound_vi(nom, BoundSide::lower, opt).q);
    return {policy_value(m, naive, opt), policy_value(m, causal, opt)};
}

// ---------------------------------------------------------------------------
// Confounded gridworld

enum class Move : std::size_t { up = 0, down = 1, left = 2, right = 3 };

struct GridworldOptions {
    std::size_t width = 5;
    std::size_t height = 5;
    /// Distribution over wind {none, up, down, left, right}.
    std::array<double, 5> wind_dist{0.6, 0.1, 0.1, 0.1, 0.1};
    std::uint64_t seed = 0;
    double gamma = 0.95;
    /// Hazard cells as a fraction of the grid (at least one).
    double hazard_fraction = 0.2;
};

struct Gridworld {
    Cmdp cmdp;
    FeatureMap features;
    std::size_t width = 0;
    std::size_t height = 0;
    StateId start = 0;
    StateId goal = 0;
    std::vector<StateId> hazards;
};

namespace detail {

struct GridGeometry {
    std::size_t w, h;

    StateId shift(StateId s, std::size_t dir) const {
        std::size_t r = s / w, c = s % w;
        switch (dir) {
            case 0: r = r > 0 ? r - 1 : r; break;
            case 1: r = r + 1 < h ? r + 1 : r; break;
            case 2: c = c > 0 ? c - 1 : c; break;
            case 3: c = c + 1 < w ? c + 1 : c; break;
            default: break;
        }
        return r * w + c;
    }

    // Wind index 0 is calm; 1..4 map onto the four move directions.
    StateId step(StateId s, ActionId x, std::size_t wind) const {
        const StateId moved = shift(s, x);
        return wind == 0 ? moved : shift(moved, wind - 1);
    }
};

inline std::vector<std::size_t> bfs_distance(const GridGeometry& g, StateId goal, const std::vector<char>& blocked) {
    const std::size_t n = g.w * g.h;
    std::vector<std::size_t> dist(n, std::numeric_limits<std::size_t>::max());
    std::deque<StateId> queue{goal};
    dist[goal] = 0;
    while (!queue.empty()) {
        const StateId s = queue.front();
        queue.pop_front();
        for (std::size_t dir = 0; dir < 4; ++dir) {
            const StateId t = g.shift(s, dir);
            if (blocked[t] || dist[t] != std::numeric_limits<std::size_t>::max()) continue;
            dist[t] = dist[s] + 1;
            queue.push_back(t);
        }
    }
    return dist;
}

}  // namespace detail

/// Gridworld whose wind is the unobserved confounder. The wind shifts the
/// agent after its move (clipped at walls). The demonstrator sees the wind and
/// picks the move whose landing cell is closest to the goal, never a hazard
/// when avoidable. Entering the goal pays +1 and absorbs; entering a hazard
/// pays -1.
inline Gridworld make_confounded_gridworld(const GridworldOptions& o) {
    if (o.width < 2 || o.height < 2) throw std::invalid_argument("make_confounded_gridworld: grid must be >= 2x2");
    const double wind_sum = std::accumulate(o.wind_dist.begin(), o.wind_dist.end(), 0.0);
    if (std::abs(wind_sum - 1.0) > 1e-12) throw std::invalid_argument("make_confounded_gridworld: wind_dist must sum to 1");

    const detail::GridGeometry geo{o.width, o.height};
    const std::size_t S = o.width * o.height, X = 4, U = 5;
    Rng rng(o.seed);

    StateId goal = 0, start = 0;
    std::vector<char> hazard(S, 0);
    std::vector<std::size_t> dist;
    const std::size_t n_hazards =
        std::max<std::size_t>(1, static_cast<std::size_t>(o.hazard_fraction * static_cast<double>(S)));
    for (int attempt = 0;; ++attempt) {
        if (attempt > 1000) throw std::runtime_error("make_confounded_gridworld: could not place a solvable layout");
        goal = rng.below(S);
        start = rng.below(S);
        if (start == goal) continue;
        // Hazards go inside the box spanned by start and goal, so the direct
        // route passes next to them.
        std::vector<StateId> box;
        const std::size_t r0 = std::min(start, goal) / o.width, r1 = std::max(start, goal) / o.width;
        const std::size_t c0 = std::min(start % o.width, goal % o.width), c1 = std::max(start % o.width, goal % o.width);
        for (std::size_t r = r0; r <= r1; ++r)
            for (std::size_t c = c0; c <= c1; ++c)
                if (const StateId cell = r * o.width + c; cell != start && cell != goal) box.push_back(cell);
        if (box.size() < 2) continue;
        std::fill(hazard.begin(), hazard.end(), 0);
        for (std::size_t placed = 0; placed < n_hazards && placed + 1 < box.size();) {
            const StateId c = box[rng.below(box.size())];
            if (hazard[c]) continue;
            hazard[c] = 1;
            ++placed;
        }
        dist = detail::bfs_distance(geo, goal, hazard);
        if (dist[start] != std::numeric_limits<std::size_t>::max() && dist[start] >= 2) break;
    }

    CmdpData d;
    d.n_states = S;
    d.n_actions = X;
    d.n_noise = U;
    d.gamma = o.gamma;
    d.reward_lo = -1.0;
    d.reward_hi = 1.0;
    d.noise_dist.assign(o.wind_dist.begin(), o.wind_dist.end());
    d.init_dist.assign(S, 0.0);
    d.init_dist[start] = 1.0;
    d.trans_fn.resize(S * X * U);
    d.reward_fn.resize(S * X * U);
    d.behavior_fn.resize(S * U);

    auto landing_score = [&](StateId c) -> double {
        if (c == goal) return -1.0;
        if (hazard[c]) return 1e9;
        const auto dc = dist[c];
        return dc == std::numeric_limits<std::size_t>::max() ? 1e6 : static_cast<double>(dc);
    };

    for (StateId s = 0; s < S; ++s) {
        for (std::size_t u = 0; u < U; ++u) {
            ActionId best = 0;
            double best_score = std::numeric_limits<double>::infinity();
            for (ActionId x = 0; x < X; ++x) {
                const StateId sp = s == goal ? goal : geo.step(s, x, u);
                const std::size_t i = (s * X + x) * U + u;
                d.trans_fn[i] = sp;
                d.reward_fn[i] = s == goal ? 0.0 : (sp == goal ? 1.0 : (hazard[sp] ? -1.0 : 0.0));
                const double score = landing_score(sp);
                if (score < best_score) {
                    best_score = score;
                    best = x;
                }
            }
            d.behavior_fn[s * U + u] = best;
        }
    }

    FeatureMap features{Table2(S, S + 2, 0.0)};
    for (StateId s = 0; s < S; ++s) {
        features.features(s, s) = 1.0;
        features.features(s, S) = static_cast<double>(s % o.width) / static_cast<double>(o.width - 1);
        features.features(s, S + 1) = static_cast<double>(s / o.width) / static_cast<double>(o.height - 1);
    }

    std::vector<StateId> hazards;
    for (StateId s = 0; s < S; ++s)
        if (hazard[s]) hazards.push_back(s);
    return {Cmdp(std::move(d)), std::move(features), o.width, o.height, start, goal, std::move(hazards)};
}

// ---------------------------------------------------------------------------
// Adversarial confounded bandit

struct AdversarialBandit {
    Cmdp cmdp;
    ActionId lure = 0;      // looks best in the logs
    ActionId safe = 1;      // truly best
    GapCertificate certificate;
};

/// One decision state followed by an absorbing terminal. Context u = 0 (rare)
/// is the only one where the lure pays 1, and it is the only context in which
/// the demonstrator plays the lure; the safe action pays a constant r. Hence
/// the logged mean of the lure is 1 while its interventional mean is P(u=0),
/// below r. Parameters keep (1 - P(u=0)) r > P(u=0), so the causal lower bound
/// prefers the safe action.
inline AdversarialBandit make_adversarial_confounded_bandit(std::uint64_t seed, double gamma = 0.9) {
    Rng rng(seed);
    const std::size_t U = 2 + rng.below(4);
    const double p_lure_context = rng.uniform(0.05, 0.25);
    const double safe_reward = rng.uniform(0.4, 0.7);
    const ActionId lure = rng.below(2);
    const ActionId safe = 1 - lure;

    CmdpData d;
    d.n_states = 2;
    d.n_actions = 2;
    d.n_noise = U;
    d.gamma = gamma;
    d.reward_lo = 0.0;
    d.reward_hi = 1.0;
    d.noise_dist.assign(U, (1.0 - p_lure_context) / static_cast<double>(U - 1));
    d.noise_dist[0] = 1.0 - std::accumulate(d.noise_dist.begin() + 1, d.noise_dist.end(), 0.0);
    d.init_dist = {1.0, 0.0};
    d.trans_fn.assign(2 * 2 * U, 1);
    d.reward_fn.assign(2 * 2 * U, 0.0);
    d.behavior_fn.assign(2 * U, 0);
    for (std::size_t u = 0; u < U; ++u) {
        d.reward_fn[(0 * 2 + lure) * U + u] = u == 0 ? 1.0 : 0.0;
        d.reward_fn[(0 * 2 + safe) * U + u] = safe_reward;
        d.behavior_fn[0 * U + u] = u == 0 ? lure : safe;
    }
    Cmdp m(std::move(d));
    const auto cert = confounding_gap(m);
    return {std::move(m), lure, safe, cert};
}

}  // namespace causalq
