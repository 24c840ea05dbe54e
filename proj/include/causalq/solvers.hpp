#pragma once

#include "causalq/cmdp.hpp"
#include "causalq/tables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace causalq {

/// Raised when an iterative solver exhausts its iteration budget.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class BoundSide { lower, upper };

struct SolveOptions {
    double tol = 1e-10;
    std::size_t max_iters = 1'000'000;
};

/// Solver output: the table plus iteration diagnostics.
struct Solution {
    QTable q;
    std::size_t iterations = 0;
    double residual = 0.0;     // sup-norm change in the last iteration
    double error_bound = 0.0;  // bound on the sup-norm distance to the fixed point
};

/// Diagnostics as `key=value` lines.
inline void write_diagnostics(std::ostream& os, const Solution& sol) {
    os << "kind=" << to_string(sol.q.kind) << '\n'
       << "iterations=" << sol.iterations << '\n'
       << "residual=" << sol.residual << '\n'
       << "error_bound=" << sol.error_bound << '\n';
}

namespace detail {

inline void check_options(const SolveOptions& opt) {
    if (!(opt.tol > 0.0)) throw std::invalid_argument("solver: tol must be positive");
    if (opt.max_iters < 1) throw std::invalid_argument("solver: max_iters must be >= 1");
}

inline void check_gamma(double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("solver: gamma must lie in [0, 1)");
}

/// Iterates a gamma-contraction `backup` from `q`. For successive iterates
/// q_k, q_{k+1} the fixed point lies within g/(1-g) |q_{k+1} - q_k| of
/// q_{k+1}; iteration stops once that bound is <= tol, which also bounds the
/// Bellman residual of the returned table by tol.
template <class Backup>
Solution iterate_to_fixed_point(QTable q, double gamma, const SolveOptions& opt, Backup&& backup, const char* who) {
    check_options(opt);
    check_gamma(gamma);
    double residual = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= opt.max_iters; ++it) {
        QTable next = backup(q);
        residual = sup_distance(next, q);
        q = std::move(next);
        const double bound = gamma / (1.0 - gamma) * residual;
        if (bound <= opt.tol) return {std::move(q), it, residual, bound};
    }
    throw ConvergenceError(std::string(who) + ": no convergence within max_iters (residual " +
                           std::to_string(residual) + ")");
}

}  // namespace detail

/// max_x q(s, x) for every state; terminal states are pinned to zero.
inline std::vector<double> state_values(const QTable& q, const std::vector<char>* terminal = nullptr) {
    std::vector<double> v(q.n_states());
    for (StateId s = 0; s < q.n_states(); ++s)
        v[s] = (terminal && (*terminal)[s]) ? 0.0 : q.max_value(s);
    return v;
}

/// One Bellman optimality backup under a known kernel and mean reward.
inline QTable bellman_backup(const QTable& q, const Table3& trans, const Table2& reward, double gamma) {
    const std::size_t S = q.n_states(), X = q.n_actions();
    const auto v = state_values(q);
    QTable out(S, X, q.kind);
    for (StateId s = 0; s < S; ++s)
        for (ActionId x = 0; x < X; ++x) {
            double ev = 0.0;
            auto row = trans.row(s, x);
            for (StateId sp = 0; sp < S; ++sp) ev += row[sp] * v[sp];
            out(s, x) = reward(s, x) + gamma * ev;
        }
    return out;
}

inline Solution standard_value_iteration(const Table3& trans, const Table2& reward, double gamma,
                                         const SolveOptions& opt = {}) {
    detail::check_gamma(gamma);
    const std::size_t S = reward.rows(), X = reward.cols();
    if (trans.dim0() != S || trans.dim1() != X || trans.dim2() != S)
        throw std::invalid_argument("standard_value_iteration: shape mismatch");
    QTable q(S, X, QKind::q_star, 0.0);
    return detail::iterate_to_fixed_point(
        std::move(q), gamma, opt, [&](const QTable& cur) { return bellman_backup(cur, trans, reward, gamma); },
        "standard_value_iteration");
}

/// Optimal values of the true CMDP, via the interventional marginals.
inline Solution optimal_q(const Cmdp& m, const SolveOptions& opt = {}) {
    const auto im = marginalize_interventional(m);
    return standard_value_iteration(im.trans, im.reward, m.gamma(), opt);
}

/// Causal Bellman optimality backup.
///
/// Lower side:
///   out(s,x) = P(x|s) (R~(s,x) + g sum_s' T~(s,x,s') V(s'))
///            + (1 - P(x|s)) (a + g min_s' V(s'))
/// with V(s') = max_x' q(s',x'). The upper side uses b and max_s' instead.
/// The extremum over s' ranges over every state. States flagged terminal in
/// the nominal model have V = 0 and their own rows are pinned to 0.
inline QTable apply_causal_operator(const QTable& q, const NominalModel& nom, BoundSide side) {
    const std::size_t S = nom.n_states(), X = nom.n_actions();
    if (q.n_states() != S || q.n_actions() != X) throw std::invalid_argument("apply_causal_operator: shape mismatch");
    const double g = nom.gamma;
    const auto v = state_values(q, &nom.terminal);
    const bool lower = side == BoundSide::lower;
    const double extreme_v = lower ? *std::min_element(v.begin(), v.end()) : *std::max_element(v.begin(), v.end());
    const double fallback = (lower ? nom.reward_lo : nom.reward_hi) + g * extreme_v;

    QTable out(S, X, lower ? QKind::q_lower : QKind::q_upper);
    for (StateId s = 0; s < S; ++s) {
        if (nom.is_terminal(s)) continue;
        for (ActionId x = 0; x < X; ++x) {
            const double p = nom.p_beh(s, x);
            double nominal_branch = 0.0;
            if (p > 0.0) {
                double ev = 0.0;
                auto row = nom.t_tilde.row(s, x);
                for (StateId sp = 0; sp < S; ++sp) ev += row[sp] * v[sp];
                nominal_branch = nom.r_tilde(s, x) + g * ev;
            }
            out(s, x) = p * nominal_branch + (1.0 - p) * fallback;
        }
    }
    return out;
}

/// Fixed point of the causal operator. Starts from `init` when given,
/// otherwise from zeros.
inline Solution causal_bound_vi(const NominalModel& nom, BoundSide side, const SolveOptions& opt = {},
                                const std::optional<QTable>& init = std::nullopt) {
    nom.validate();
    const std::size_t S = nom.n_states(), X = nom.n_actions();
    QTable q = init ? *init : QTable(S, X, QKind::q_lower, 0.0);
    if (q.n_states() != S || q.n_actions() != X) throw std::invalid_argument("causal_bound_vi: init shape mismatch");
    return detail::iterate_to_fixed_point(
        std::move(q), nom.gamma, opt, [&](const QTable& cur) { return apply_causal_operator(cur, nom, side); },
        "causal_bound_vi");
}

/// Deterministic argmax policy; ties go to the lowest action index.
inline Policy greedy_policy(const QTable& q) {
    std::vector<ActionId> actions(q.n_states());
    for (StateId s = 0; s < q.n_states(); ++s) {
        ActionId best = 0;
        for (ActionId x = 1; x < q.n_actions(); ++x)
            if (q(s, x) > q(s, best)) best = x;
        actions[s] = best;
    }
    return Policy::from_actions(actions, q.n_actions());
}

/// Q_pi under a known kernel and mean reward.
inline Solution policy_evaluation(const InterventionalModel& im, double gamma, const Policy& policy,
                                  const SolveOptions& opt = {}) {
    detail::check_gamma(gamma);
    const std::size_t S = im.reward.rows(), X = im.reward.cols();
    if (policy.n_states() != S || policy.n_actions() != X)
        throw std::invalid_argument("policy_evaluation: policy shape mismatch");
    policy.validate();
    QTable q(S, X, QKind::q_policy, 0.0);
    return detail::iterate_to_fixed_point(
        std::move(q), gamma, opt,
        [&](const QTable& cur) {
            std::vector<double> v(S, 0.0);
            for (StateId s = 0; s < S; ++s)
                for (ActionId x = 0; x < X; ++x) v[s] += policy.probs(s, x) * cur(s, x);
            QTable out(S, X, QKind::q_policy);
            for (StateId s = 0; s < S; ++s)
                for (ActionId x = 0; x < X; ++x) {
                    double ev = 0.0;
                    auto row = im.trans.row(s, x);
                    for (StateId sp = 0; sp < S; ++sp) ev += row[sp] * v[sp];
                    out(s, x) = im.reward(s, x) + gamma * ev;
                }
            return out;
        },
        "policy_evaluation");
}

/// Q_pi in the true (interventional) model of the CMDP.
inline Solution policy_evaluation(const Cmdp& m, const Policy& policy, const SolveOptions& opt = {}) {
    return policy_evaluation(marginalize_interventional(m), m.gamma(), policy, opt);
}

/// Expected discounted return of `policy` from the initial distribution.
inline double policy_value(const Cmdp& m, const Policy& policy, const SolveOptions& opt = {}) {
    const auto q = policy_evaluation(m, policy, opt).q;
    double v = 0.0;
    for (StateId s = 0; s < m.n_states(); ++s)
        for (ActionId x = 0; x < m.n_actions(); ++x) v += m.init_dist()[s] * policy.probs(s, x) * q(s, x);
    return v;
}

/// Bounds and evaluations must share one discount factor.
inline void require_same_gamma(const NominalModel& nom, const Cmdp& m) {
    if (nom.gamma != m.gamma()) throw std::invalid_argument("gamma mismatch between nominal model and CMDP");
}

}  // namespace causalq
