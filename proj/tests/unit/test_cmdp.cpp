#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace causalq;
using fixtures::random_cmdp;

namespace {

CmdpData valid_data() { return fixtures::deterministic_cmdp().data(); }

}  // namespace

TEST(Cmdp, RejectsInvalidConstruction) {
    auto d = valid_data();
    d.noise_dist = {0.9};
    EXPECT_THROW(Cmdp{d}, std::invalid_argument);

    d = valid_data();
    d.trans_fn[2] = 3;
    EXPECT_THROW(Cmdp{d}, std::invalid_argument);

    d = valid_data();
    d.behavior_fn[0] = 2;
    EXPECT_THROW(Cmdp{d}, std::invalid_argument);

    d = valid_data();
    d.reward_fn[4] = 1.5;
    EXPECT_THROW(Cmdp{d}, std::invalid_argument);

    d = valid_data();
    d.gamma = 1.0;
    EXPECT_THROW(Cmdp{d}, std::invalid_argument);

    d = valid_data();
    d.reward_lo = 2.0;
    EXPECT_THROW(Cmdp{d}, std::invalid_argument);

    d = valid_data();
    d.init_dist = {0.5, 0.5, 0.5};
    EXPECT_THROW(Cmdp{d}, std::invalid_argument);
}

TEST(Marginalize, SingleNoiseValueGivesZeroOneKernel) {
    const auto m = fixtures::deterministic_cmdp();
    const auto im = marginalize_interventional(m);
    for (StateId s = 0; s < 3; ++s)
        for (ActionId x = 0; x < 2; ++x) {
            for (StateId sp = 0; sp < 3; ++sp)
                EXPECT_EQ(im.trans(s, x, sp), sp == m.next_state(s, x, 0) ? 1.0 : 0.0);
            EXPECT_EQ(im.reward(s, x), m.reward(s, x, 0));
        }
}

TEST(Marginalize, UniformTwoNoiseSplitsEvenly) {
    CmdpData d;
    d.n_states = 2;
    d.n_actions = 1;
    d.n_noise = 2;
    d.noise_dist = {0.5, 0.5};
    d.init_dist = {1.0, 0.0};
    d.trans_fn = {0, 1, 0, 1};
    d.reward_fn = {0, 0, 0, 0};
    d.behavior_fn = {0, 0, 0, 0};
    const auto im = marginalize_interventional(Cmdp(d));
    EXPECT_EQ(im.trans(0, 0, 0), 0.5);
    EXPECT_EQ(im.trans(0, 0, 1), 0.5);
}

TEST(Marginalize, MatchesEnumerationOracle) {
    const auto m = random_cmdp(4, 3, 5, 7);
    const auto im = marginalize_interventional(m);
    std::vector<double> trans;
    double reward = 0.0;
    for (StateId s = 0; s < 4; ++s)
        for (ActionId x = 0; x < 3; ++x) {
            oracle::enumerate_interventional(m, s, x, trans, reward);
            for (StateId sp = 0; sp < 4; ++sp) EXPECT_NEAR(im.trans(s, x, sp), trans[sp], 1e-15);
            EXPECT_NEAR(im.reward(s, x), reward, 1e-15);
        }
}

TEST(Marginalize, RowsNormalizedOnRandomInstances) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto m = random_cmdp(1 + seed % 6, 1 + seed % 4, 1 + seed % 5, seed);
        const auto im = marginalize_interventional(m);
        for (StateId s = 0; s < m.n_states(); ++s)
            for (ActionId x = 0; x < m.n_actions(); ++x) {
                double sum = 0.0;
                for (double p : im.trans.row(s, x)) sum += p;
                EXPECT_NEAR(sum, 1.0, 1e-12);
            }
    }
}

TEST(ExactNominal, ConstantBehaviourIsOneHot) {
    const auto m = random_cmdp(4, 3, 5, 3, 0.9, /*strength=*/0.0);
    const auto n = exact_nominal(m);
    for (StateId s = 0; s < 4; ++s) {
        int ones = 0;
        for (ActionId x = 0; x < 3; ++x) {
            EXPECT_TRUE(n.p_beh(s, x) == 0.0 || std::abs(n.p_beh(s, x) - 1.0) < 1e-12);
            ones += n.p_beh(s, x) > 0.5;
            EXPECT_EQ(n.is_supported(s, x), n.p_beh(s, x) > 0.0);
        }
        EXPECT_EQ(ones, 1);
    }
}

TEST(ExactNominal, SingleNoiseMatchesInterventionalOnSupportedAction) {
    const auto m = fixtures::deterministic_cmdp();
    const auto n = exact_nominal(m);
    const auto im = marginalize_interventional(m);
    for (StateId s = 0; s < 3; ++s) {
        const ActionId x = m.behavior(s, 0);
        ASSERT_TRUE(n.is_supported(s, x));
        EXPECT_FALSE(n.is_supported(s, 1 - x));
        for (StateId sp = 0; sp < 3; ++sp) EXPECT_EQ(n.t_tilde(s, x, sp), im.trans(s, x, sp));
        EXPECT_EQ(n.r_tilde(s, x), im.reward(s, x));
        // placeholder for the unsupported action
        EXPECT_EQ(n.r_tilde(s, 1 - x), m.reward_lo());
    }
}

TEST(ExactNominal, NoConfoundingCollapse) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto m = random_cmdp(5, 3, 4, seed, 0.9, 0.0);
        const auto n = exact_nominal(m);
        const auto im = marginalize_interventional(m);
        for (StateId s = 0; s < 5; ++s)
            for (ActionId x = 0; x < 3; ++x) {
                if (!n.is_supported(s, x)) continue;
                EXPECT_NEAR(n.r_tilde(s, x), im.reward(s, x), 1e-12);
                for (StateId sp = 0; sp < 5; ++sp) EXPECT_NEAR(n.t_tilde(s, x, sp), im.trans(s, x, sp), 1e-12);
            }
    }
}

TEST(ExactNominal, InvariantsHold) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto n = exact_nominal(random_cmdp(6, 4, 5, seed));
        EXPECT_NO_THROW(n.validate());
        for (StateId s = 0; s < 6; ++s) {
            double sum = 0.0;
            for (ActionId x = 0; x < 4; ++x) sum += n.p_beh(s, x);
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
    }
}

TEST(ExactNominal, EpsilonMixtureSupportsEveryAction) {
    const auto n = exact_nominal(random_cmdp(4, 3, 5, 7), 0.1);
    for (StateId s = 0; s < 4; ++s)
        for (ActionId x = 0; x < 3; ++x) {
            EXPECT_TRUE(n.is_supported(s, x));
            EXPECT_GE(n.p_beh(s, x), 0.1 / 3 - 1e-15);
        }
}

TEST(SampleObservational, DeterministicMechanismsIgnoreSeed) {
    const auto m = fixtures::deterministic_cmdp();
    const auto a = sample_observational(m, 50, 1);
    const auto b = sample_observational(m, 50, 999);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.regime, Regime::observational);
    EXPECT_NO_THROW(validate_trajectory(a, m.shape()));
}

TEST(SampleObservational, SameSeedSameTrajectory) {
    const auto m = random_cmdp(4, 3, 5, 7);
    EXPECT_EQ(sample_observational(m, 1000, 42), sample_observational(m, 1000, 42));
    EXPECT_NE(sample_observational(m, 1000, 42), sample_observational(m, 1000, 43));
}

TEST(SampleObservational, BehaviourFrequenciesMatchExactNominal) {
    // instance whose behaviour chain visits both states often
    const auto m = random_cmdp(2, 2, 3, 1);
    const auto traj = sample_observational(m, 100'000, 3);
    const auto est = estimate_nominal(traj, m.shape());
    const auto exact = exact_nominal(m);
    for (StateId s = 0; s < 2; ++s) {
        ASSERT_GT(est.count(s, 0) + est.count(s, 1), 10'000u);
        for (ActionId x = 0; x < 2; ++x) EXPECT_NEAR(est.p_beh(s, x), exact.p_beh(s, x), 0.01);
    }
}

TEST(SampleObservational, RejectsZeroHorizon) {
    EXPECT_THROW(sample_observational(fixtures::deterministic_cmdp(), 0, 1), std::invalid_argument);
}

TEST(SampleInterventional, DeterministicPolicyAndNoise) {
    const auto m = fixtures::deterministic_cmdp();
    const std::vector<ActionId> acts{0, 1, 0};
    const auto pi = Policy::from_actions(acts, 2);
    const auto a = sample_interventional(m, pi, 30, 1);
    const auto b = sample_interventional(m, pi, 30, 77);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.regime, Regime::interventional);
    for (const auto& t : a.steps) EXPECT_EQ(t.x, acts[t.s]);
}

TEST(SampleInterventional, BehaviourPolicyWithoutConfoundingMatchesObservationalLaw) {
    const auto m = random_cmdp(3, 3, 4, 9, 0.9, 0.0);
    std::vector<ActionId> acts(3);
    for (StateId s = 0; s < 3; ++s) acts[s] = m.behavior(s, 0);
    const auto obs = sample_observational(m, 100'000, 1);
    const auto itv = sample_interventional(m, Policy::from_actions(acts, 3), 100'000, 2);
    std::map<std::tuple<StateId, ActionId, StateId>, double> fo, fi;
    for (const auto& t : obs.steps) fo[{t.s, t.x, t.s_next}] += 1e-5;
    for (const auto& t : itv.steps) fi[{t.s, t.x, t.s_next}] += 1e-5;
    for (const auto& [k, v] : fo) EXPECT_NEAR(v, fi[k], 0.01);
    for (const auto& [k, v] : fi) EXPECT_NEAR(v, fo[k], 0.01);
}

TEST(SampleInterventional, UniformPolicyNextStateFrequenciesMatchMarginals) {
    const auto m = random_cmdp(2, 2, 3, 11);
    const auto traj = sample_interventional(m, Policy::uniform(2, 2), 100'000, 11);
    Table3 counts(2, 2, 2, 0.0);
    Table2 visits(2, 2, 0.0);
    for (const auto& t : traj.steps) {
        counts(t.s, t.x, t.s_next) += 1.0;
        visits(t.s, t.x) += 1.0;
    }
    const auto im = marginalize_interventional(m);
    for (StateId s = 0; s < 2; ++s)
        for (ActionId x = 0; x < 2; ++x) {
            ASSERT_GT(visits(s, x), 1000.0);
            for (StateId sp = 0; sp < 2; ++sp) EXPECT_NEAR(counts(s, x, sp) / visits(s, x), im.trans(s, x, sp), 0.01);
        }
}

TEST(EstimateNominal, SingleTransition) {
    Trajectory t{{{0, 1, 0.5, 2, false}}, Regime::observational};
    const auto n = estimate_nominal(t, {3, 2, 0.0, 1.0, 0.9});
    EXPECT_EQ(n.p_beh(0, 1), 1.0);
    EXPECT_EQ(n.p_beh(0, 0), 0.0);
    EXPECT_EQ(n.r_tilde(0, 1), 0.5);
    EXPECT_EQ(n.t_tilde(0, 1, 2), 1.0);
    EXPECT_EQ(n.count(0, 1), 1u);
    EXPECT_TRUE(n.is_supported(0, 1));
    EXPECT_FALSE(n.is_supported(0, 0));
    EXPECT_FALSE(n.is_supported(1, 0));
    // unvisited state keeps an all-zero behaviour row
    EXPECT_EQ(n.p_beh(1, 0) + n.p_beh(1, 1), 0.0);
    EXPECT_NO_THROW(n.validate());
}

TEST(EstimateNominal, DuplicatedDataGivesSameModel) {
    const auto m = random_cmdp(4, 3, 5, 2);
    const auto traj = sample_observational(m, 5000, 8);
    const std::vector<Trajectory> twice{traj, traj};
    const auto a = estimate_nominal(traj, m.shape());
    const auto b = estimate_nominal(twice, m.shape());
    // sums are accumulated in a different order, so allow round-off
    EXPECT_LT(fixtures::nominal_distance(a, b), 1e-12);
    EXPECT_EQ(a.supported, b.supported);
    EXPECT_EQ(2 * a.count(0, 0), b.count(0, 0));
}

TEST(EstimateNominal, RejectsInterventionalData) {
    const auto m = random_cmdp(3, 2, 2, 1);
    const auto itv = sample_interventional(m, Policy::uniform(3, 2), 100, 1);
    EXPECT_THROW(estimate_nominal(itv, m.shape()), std::invalid_argument);
    EXPECT_THROW(estimate_nominal(std::span<const Trajectory>{}, m.shape()), std::invalid_argument);
}

TEST(EstimateNominal, MillionStepsMatchExact) {
    const auto m = random_cmdp(4, 3, 5, 7);
    const auto est = estimate_nominal(sample_observational(m, 1'000'000, 3), m.shape());
    const auto exact = exact_nominal(m);
    EXPECT_LT(fixtures::nominal_distance(est, exact), 0.01);
    EXPECT_EQ(est.supported, exact.supported);
}

TEST(EstimateNominal, ErrorShrinksWithSampleSize) {
    const auto m = random_cmdp(3, 2, 3, 4);
    const auto exact = exact_nominal(m);
    double prev = 1e9;
    for (std::size_t n : {1'000u, 100'000u, 10'000'000u}) {
        const auto est = estimate_nominal(sample_observational(m, n, 21), m.shape());
        const double err = fixtures::nominal_distance(est, exact);
        EXPECT_LT(err, prev) << "n=" << n;
        prev = err;
    }
}

TEST(EstimateNominal, RecordsTerminalStates) {
    const auto bandit = make_adversarial_confounded_bandit(3);
    const auto n = estimate_nominal(sample_observational(bandit.cmdp, 200, 1), bandit.cmdp.shape());
    EXPECT_FALSE(n.is_terminal(0));
    EXPECT_TRUE(n.is_terminal(1));
}

TEST(Trajectory, ChainValidation) {
    Trajectory t{{{0, 0, 0.1, 1, false}, {2, 0, 0.1, 1, false}}, Regime::observational};
    EXPECT_THROW(validate_trajectory(t, {3, 1, 0.0, 1.0, 0.9}), std::invalid_argument);
    t.steps[0].done = true;
    EXPECT_NO_THROW(validate_trajectory(t, {3, 1, 0.0, 1.0, 0.9}));
}
