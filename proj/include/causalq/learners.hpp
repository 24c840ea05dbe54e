#pragma once

#include "causalq/cmdp.hpp"
#include "causalq/replay.hpp"
#include "causalq/rng.hpp"
#include "causalq/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace causalq {

/// How the worst (or best) next state is estimated for unobserved actions.
enum class CandidateMode {
    buffer,      // K next states drawn from the replay buffer per minibatch
    all_states,  // exact extremum over every state
};

struct LearnerConfig {
    double gamma = 0.9;
    double reward_lo = 0.0;
    double reward_hi = 1.0;
    BoundSide bound_side = BoundSide::lower;

    double learning_rate = 0.5;
    double lr_decay_steps = 1e4;  // lr_t = lr0 / (1 + t / tau); 0 keeps lr constant

    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    double epsilon_decay_fraction = 0.1;

    std::size_t batch_size = 32;
    std::size_t worst_state_candidates = 32;
    CandidateMode candidate_mode = CandidateMode::buffer;
    std::size_t target_sync_period = 500;
    std::size_t total_steps = 200'000;
    std::size_t replay_capacity = 100'000;
    std::size_t episode_horizon = 1000;  // 0: never reset except on absorption
    double init_value = 0.0;

    double eval_fraction = 0.05;
    std::size_t eval_episodes = 10;
    std::size_t eval_horizon = 200;

    std::uint64_t seed = 0;

    /// Defaults with gamma and reward bounds copied from the CMDP.
    static LearnerConfig for_cmdp(const Cmdp& m) {
        LearnerConfig c;
        c.gamma = m.gamma();
        c.reward_lo = m.reward_lo();
        c.reward_hi = m.reward_hi();
        return c;
    }

    void validate() const {
        auto fail = [](const char* what) { throw std::invalid_argument(std::string("LearnerConfig: ") + what); };
        if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) fail("learning_rate must lie in (0, 1]");
        if (!(lr_decay_steps >= 0.0)) fail("lr_decay_steps must be >= 0");
        for (double e : {epsilon_start, epsilon_end})
            if (!(e >= 0.0 && e <= 1.0)) fail("epsilon must lie in [0, 1]");
        if (!(epsilon_decay_fraction >= 0.0 && epsilon_decay_fraction <= 1.0)) fail("epsilon_decay_fraction outside [0, 1]");
        if (batch_size < 1) fail("batch_size must be >= 1");
        if (worst_state_candidates < 1) fail("worst_state_candidates must be >= 1");
        if (target_sync_period < 1) fail("target_sync_period must be >= 1");
        if (total_steps < 1) fail("total_steps must be >= 1");
        if (replay_capacity < 1) fail("replay_capacity must be >= 1");
        if (!(eval_fraction > 0.0 && eval_fraction <= 1.0)) fail("eval_fraction must lie in (0, 1]");
        if (eval_episodes < 1 || eval_horizon < 1) fail("evaluation needs >= 1 episode of >= 1 step");
        if (!(reward_lo <= reward_hi)) fail("reward_lo must not exceed reward_hi");
    }

    void validate_against(const Cmdp& m) const {
        validate();
        if (reward_lo != m.reward_lo() || reward_hi != m.reward_hi())
            throw std::invalid_argument("LearnerConfig: reward bounds differ from the CMDP's");
        if (gamma != m.gamma()) throw std::invalid_argument("LearnerConfig: gamma differs from the CMDP's");
    }

    double learning_rate_at(std::size_t step) const {
        return lr_decay_steps > 0.0 ? learning_rate / (1.0 + static_cast<double>(step) / lr_decay_steps)
                                    : learning_rate;
    }

    double epsilon_at(std::size_t step) const {
        const double horizon = epsilon_decay_fraction * static_cast<double>(total_steps);
        if (horizon <= 0.0 || static_cast<double>(step) >= horizon) return epsilon_end;
        return epsilon_start + (epsilon_end - epsilon_start) * static_cast<double>(step) / horizon;
    }

    std::size_t eval_period() const {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(total_steps))));
    }
};

struct CurvePoint {
    std::size_t step = 0;
    double eval_return_mean = 0.0;
    double eval_return_std = 0.0;
    double wall_time = 0.0;  // seconds since the run started
};

struct LearningCurve {
    std::string algo;
    std::uint64_t seed = 0;
    std::vector<CurvePoint> points;
};

struct LearnResult {
    QTable q;
    LearningCurve curve;
};

/// State with the smallest value among the candidates; ties go to the lowest
/// state index.
inline StateId worst_case_state_estimate(std::span<const double> values, std::span<const StateId> candidates) {
    if (candidates.empty()) throw std::invalid_argument("worst_case_state_estimate: no candidates");
    StateId best = candidates[0];
    for (StateId c : candidates) {
        if (values[c] < values[best] || (values[c] == values[best] && c < best)) best = c;
    }
    return best;
}

inline StateId worst_case_state_estimate(const QTable& q, std::span<const StateId> candidates) {
    return worst_case_state_estimate(state_values(q), candidates);
}

/// Mean and (population) standard deviation of discounted returns of
/// `policy` executed in the true environment.
inline CurvePoint evaluate_policy_returns(const Cmdp& m, const Policy& policy, std::size_t episodes,
                                          std::size_t horizon, std::uint64_t seed) {
    Rng rng(seed);
    Rng action_rng = rng.split(7);
    std::vector<double> returns;
    returns.reserve(episodes);
    for (std::size_t e = 0; e < episodes; ++e) {
        StateId s = sample_initial(m, rng);
        double ret = 0.0, discount = 1.0;
        for (std::size_t t = 0; t < horizon; ++t) {
            const ActionId x = action_rng.categorical(policy.probs.row(s));
            const auto step = step_environment(m, s, rng, &x);
            ret += discount * step.t.y;
            discount *= m.gamma();
            if (step.t.done) break;
            s = step.t.s_next;
        }
        returns.push_back(ret);
    }
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    var /= static_cast<double>(returns.size());
    return {0, mean, std::sqrt(var), 0.0};
}

namespace detail {

inline double elapsed_seconds(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

/// Demonstrator query loop: with probability epsilon a uniformly random
/// action is executed, otherwise the demonstrator acts on the hidden noise.
/// Every transition is stored in the replay buffer.
class DemonstratorStream {
public:
    DemonstratorStream(const Cmdp& m, const LearnerConfig& cfg, Rng rng)
        : m_(m), cfg_(cfg), rng_(rng), explore_rng_(rng.split(11)), buffer_(cfg.replay_capacity),
          seen_terminal_(m.n_states(), 0) {
        s_ = sample_initial(m_, rng_);
    }

    const Transition& advance(std::size_t step) {
        const bool explore = explore_rng_.bernoulli(cfg_.epsilon_at(step));
        const ActionId random_action = explore ? explore_rng_.below(m_.n_actions()) : 0;
        const auto out = step_environment(m_, s_, rng_, explore ? &random_action : nullptr);
        buffer_.push(out.t);
        if (out.t.done && !seen_terminal_[out.t.s_next]) {
            seen_terminal_[out.t.s_next] = 1;
            terminals_changed_ = true;
        }
        ++episode_step_;
        if (out.t.done || (cfg_.episode_horizon > 0 && episode_step_ >= cfg_.episode_horizon)) {
            s_ = sample_initial(m_, rng_);
            episode_step_ = 0;
        } else {
            s_ = out.t.s_next;
        }
        last_ = out.t;
        return last_;
    }

    const ReplayBuffer& buffer() const { return buffer_; }
    const std::vector<char>& seen_terminal() const { return seen_terminal_; }

    /// True once after a new terminal state has been observed.
    bool take_terminals_changed() {
        const bool c = terminals_changed_;
        terminals_changed_ = false;
        return c;
    }

private:
    const Cmdp& m_;
    const LearnerConfig& cfg_;
    Rng rng_;
    Rng explore_rng_;
    ReplayBuffer buffer_;
    std::vector<char> seen_terminal_;
    bool terminals_changed_ = false;
    StateId s_ = 0;
    std::size_t episode_step_ = 0;
    Transition last_;
};

/// Candidate next states for the worst-case branch.
inline std::vector<StateId> draw_candidates(const ReplayBuffer& buffer, const LearnerConfig& cfg, std::size_t n_states,
                                            Rng& rng) {
    std::vector<StateId> out;
    if (cfg.candidate_mode == CandidateMode::all_states) {
        out.resize(n_states);
        for (StateId s = 0; s < n_states; ++s) out[s] = s;
        return out;
    }
    out.reserve(cfg.worst_state_candidates);
    for (std::size_t k = 0; k < cfg.worst_state_candidates; ++k) out.push_back(buffer.sample(rng).s_next);
    return out;
}

}  // namespace detail

/// Tabular Q-learner holding the online table and a periodically synced
/// target table. Targets only ever read the target table.
class TabularQLearner {
public:
    enum class Rule { causal, naive };

    TabularQLearner(std::size_t n_states, std::size_t n_actions, const LearnerConfig& cfg, Rule rule)
        : cfg_(cfg), rule_(rule),
          q_(n_states, n_actions, rule == Rule::causal ? (cfg.bound_side == BoundSide::lower ? QKind::q_lower : QKind::q_upper)
                                                       : QKind::q_star,
             cfg.init_value),
          target_(q_), terminal_(n_states, 0) {
        refresh_target_values();
    }

    const QTable& q() const { return q_; }
    QTable& q() { return q_; }
    const QTable& target() const { return target_; }

    void sync() {
        target_ = q_;
        refresh_target_values();
    }

    void set_terminals(const std::vector<char>& terminal) {
        terminal_ = terminal;
        refresh_target_values();
    }

    /// Target-table value of a state (0 for observed terminal states).
    double target_value(StateId s) const { return target_values_[s]; }

    /// Value used for actions other than the logged one.
    double counterfactual_value(std::span<const StateId> candidates) const {
        const bool lower = cfg_.bound_side == BoundSide::lower;
        double v = lower ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        if (lower) {
            v = target_values_[worst_case_state_estimate(target_values_, candidates)];
        } else {
            for (StateId c : candidates) v = std::max(v, target_values_[c]);
        }
        return (lower ? cfg_.reward_lo : cfg_.reward_hi) + cfg_.gamma * v;
    }

    /// w(x) for every action given one stored transition.
    std::vector<double> targets(const Transition& t, std::span<const StateId> candidates) const {
        const std::size_t X = q_.n_actions();
        std::vector<double> w(X, 0.0);
        const double observed = t.y + (t.done ? 0.0 : cfg_.gamma * target_values_[t.s_next]);
        const double other = rule_ == Rule::causal ? counterfactual_value(candidates) : 0.0;
        for (ActionId x = 0; x < X; ++x) w[x] = x == t.x ? observed : other;
        return w;
    }

    /// Applies one minibatch. Causal: every action of row s_i moves toward
    /// its target. Naive: only the logged action does.
    void update(std::span<const Transition> batch, std::span<const StateId> candidates, double lr) {
        for (const auto& t : batch) {
            const auto w = targets(t, candidates);
            if (rule_ == Rule::causal) {
                for (ActionId x = 0; x < q_.n_actions(); ++x) q_(t.s, x) += lr * (w[x] - q_(t.s, x));
            } else {
                q_(t.s, t.x) += lr * (w[t.x] - q_(t.s, t.x));
            }
        }
    }

private:
    void refresh_target_values() { target_values_ = state_values(target_, &terminal_); }

    LearnerConfig cfg_;
    Rule rule_;
    QTable q_;
    QTable target_;
    std::vector<char> terminal_;
    std::vector<double> target_values_;
};

namespace detail {

inline LearnResult run_tabular(const Cmdp& m, const LearnerConfig& cfg, TabularQLearner::Rule rule, const char* algo) {
    cfg.validate_against(m);
    Rng root(cfg.seed);
    DemonstratorStream stream(m, cfg, root.split(1));
    Rng replay_rng = root.split(2);
    TabularQLearner learner(m.n_states(), m.n_actions(), cfg, rule);
    LearningCurve curve{algo, cfg.seed, {}};
    const std::size_t period = cfg.eval_period();
    const std::uint64_t eval_seed = root.split(1000).seed();
    const auto start = std::chrono::steady_clock::now();

    for (std::size_t t = 0; t < cfg.total_steps; ++t) {
        stream.advance(t);
        if (stream.take_terminals_changed()) learner.set_terminals(stream.seen_terminal());
        const auto batch = stream.buffer().sample_batch(cfg.batch_size, replay_rng);
        const auto candidates = rule == TabularQLearner::Rule::causal
                                    ? draw_candidates(stream.buffer(), cfg, m.n_states(), replay_rng)
                                    : std::vector<StateId>{};
        learner.update(batch, candidates, cfg.learning_rate_at(t));
        const std::size_t done_steps = t + 1;
        if (done_steps % cfg.target_sync_period == 0) learner.sync();
        if (done_steps % period == 0) {
            auto point = evaluate_policy_returns(m, greedy_policy(learner.q()), cfg.eval_episodes, cfg.eval_horizon,
                                                 eval_seed);
            point.step = done_steps;
            point.wall_time = elapsed_seconds(start);
            curve.points.push_back(point);
        }
    }
    return {learner.q(), std::move(curve)};
}

}  // namespace detail

/// Causal Q-learning from demonstrator data with experience replay and a
/// target table.
inline LearnResult tabular_causal_q(const Cmdp& m, const LearnerConfig& cfg) {
    return detail::run_tabular(m, cfg, TabularQLearner::Rule::causal, "causal_tabular");
}

/// Standard off-policy Q-learning on the same confounded data stream.
inline LearnResult tabular_naive_q(const Cmdp& m, const LearnerConfig& cfg) {
    return detail::run_tabular(m, cfg, TabularQLearner::Rule::naive, "naive_tabular");
}

}  // namespace causalq
