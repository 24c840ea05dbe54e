// Walks through the adversarial confounded bandit: the logged rewards favour
// one action, the true rewards favour the other, and the causal lower bound
// picks the right one.

#include "causalq/causalq.hpp"

#include <cstdio>

int main() {
    using namespace causalq;
    const auto bandit = make_adversarial_confounded_bandit(/*seed=*/1);
    const auto& m = bandit.cmdp;
    const auto truth = marginalize_interventional(m);
    const auto nominal = exact_nominal(m);
    const auto lower = causal_bound_vi(nominal, BoundSide::lower).q;
    const auto upper = causal_bound_vi(nominal, BoundSide::upper).q;
    const auto qstar = optimal_q(m).q;

    std::printf("%-6s %8s %8s %8s %8s %8s %8s\n", "action", "P(x|s)", "R~", "R", "Q_lo", "Q*", "Q_hi");
    for (ActionId x = 0; x < m.n_actions(); ++x) {
        std::printf("%-6s %8.3f %8.3f %8.3f %8.3f %8.3f %8.3f\n", x == bandit.lure ? "lure" : "safe",
                    nominal.p_beh(0, x), nominal.r_tilde(0, x), truth.reward(0, x), lower(0, x), qstar(0, x),
                    upper(0, x));
    }
    std::printf("naive greedy value  %.4f\ncausal greedy value %.4f\n", bandit.certificate.naive_value,
                bandit.certificate.causal_value);
    return 0;
}
