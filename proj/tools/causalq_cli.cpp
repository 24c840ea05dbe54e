// Command-line front end: generate environments, solve bounds, sample logs,
// run experiments and aggregate results.

#include "causalq/causalq.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace causalq;

struct GenArgs {
    std::string family = "random";
    std::string out;
    std::uint64_t seed = 0;
    double gamma = -1.0;
    std::size_t states = 5, actions = 3, noise = 4;
    double strength = 1.0;
    bool uniform_noise = false;
    std::size_t width = 5, height = 5;
    std::vector<double> wind;
    double hazard_fraction = 0.2;
};

int run_gen(const GenArgs& a) {
    if (a.family == "random") {
        RandomCmdpOptions o;
        o.n_states = a.states;
        o.n_actions = a.actions;
        o.n_noise = a.noise;
        if (a.gamma >= 0.0) o.gamma = a.gamma;
        o.seed = a.seed;
        o.confounding_strength = a.strength;
        o.uniform_noise = a.uniform_noise;
        save_cmdp(a.out, make_random_cmdp(o));
    } else if (a.family == "gridworld") {
        GridworldOptions o;
        o.width = a.width;
        o.height = a.height;
        o.seed = a.seed;
        o.hazard_fraction = a.hazard_fraction;
        if (a.gamma >= 0.0) o.gamma = a.gamma;
        if (!a.wind.empty()) {
            if (a.wind.size() != 5) throw std::invalid_argument("--wind needs 5 probabilities (none,up,down,left,right)");
            std::copy(a.wind.begin(), a.wind.end(), o.wind_dist.begin());
        }
        const auto g = make_confounded_gridworld(o);
        save_cmdp(a.out, g.cmdp, &g.features);
        const auto cert = confounding_gap(g.cmdp);
        std::cerr << "start=" << g.start << "\ngoal=" << g.goal << "\nnaive_value=" << cert.naive_value
                  << "\ncausal_value=" << cert.causal_value << "\ngap=" << cert.gap() << '\n';
    } else if (a.family == "bandit") {
        const auto b = make_adversarial_confounded_bandit(a.seed, a.gamma >= 0.0 ? a.gamma : 0.9);
        save_cmdp(a.out, b.cmdp);
        std::cerr << "naive_value=" << b.certificate.naive_value << "\ncausal_value=" << b.certificate.causal_value
                  << "\ngap=" << b.certificate.gap() << '\n';
    } else {
        throw std::invalid_argument("unknown family: " + a.family);
    }
    return 0;
}

struct SolveArgs {
    std::string env;
    std::string method = "causal-lower";
    std::string data;
    std::string out;
    double tol = 1e-10;
    std::size_t max_iters = 1'000'000;
};

int run_solve(const SolveArgs& a) {
    const auto loaded = load_cmdp(a.env);
    const auto& m = loaded.cmdp;
    const SolveOptions opt{a.tol, a.max_iters};
    Solution sol;
    if (a.method == "vi") {
        sol = optimal_q(m, opt);
    } else {
        NominalModel nom = exact_nominal(m);
        if (!a.data.empty()) {
            std::ifstream is(a.data);
            if (!is) throw std::runtime_error("cannot open " + a.data);
            nom = estimate_nominal(read_trajectory_csv(is), m.shape());
        }
        sol = causal_bound_vi(nom, a.method == "causal-upper" ? BoundSide::upper : BoundSide::lower, opt);
    }
    if (a.out.empty()) {
        write_qtable_csv(std::cout, sol.q);
    } else {
        std::ofstream os(a.out);
        if (!os) throw std::runtime_error("cannot open " + a.out);
        write_qtable_csv(os, sol.q);
    }
    write_diagnostics(std::cerr, sol);
    return 0;
}

struct SampleArgs {
    std::string env;
    std::string out;
    std::size_t horizon = 1000;
    std::uint64_t seed = 0;
};

int run_sample(const SampleArgs& a) {
    const auto loaded = load_cmdp(a.env);
    const auto traj = sample_observational(loaded.cmdp, a.horizon, a.seed);
    if (a.out.empty()) {
        write_trajectory_csv(std::cout, traj);
    } else {
        std::ofstream os(a.out);
        if (!os) throw std::runtime_error("cannot open " + a.out);
        write_trajectory_csv(os, traj);
    }
    return 0;
}

struct ReportArgs {
    std::string dir;
    std::string metric;
    std::size_t bootstrap = 0;
    double confidence = 0.95;
    std::uint64_t seed = 0;
};

int run_report(const ReportArgs& a) {
    ReportOptions opt;
    if (!a.metric.empty()) opt.metric = aggregate_from_string(a.metric);
    opt.bootstrap = a.bootstrap;
    opt.confidence = a.confidence;
    opt.seed = a.seed;
    const auto rows = report_directory(a.dir, opt);
    write_report_table(std::cout, rows);
    const auto path = (fs::path(a.dir) / "report.csv").string();
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_report_csv(os, rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Confounding-robust off-policy Q-learning toolkit"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate an environment file");
    g->add_option("--family", gen.family, "random | gridworld | bandit")->check(CLI::IsMember({"random", "gridworld", "bandit"}));
    g->add_option("--out,-o", gen.out, "Output path (JSON)")->required();
    g->add_option("--seed", gen.seed);
    g->add_option("--gamma", gen.gamma, "Discount factor (family default when omitted)");
    g->add_option("--states", gen.states);
    g->add_option("--actions", gen.actions);
    g->add_option("--noise", gen.noise);
    g->add_option("--strength", gen.strength, "Confounding strength in [0, 1]");
    g->add_flag("--uniform-noise", gen.uniform_noise);
    g->add_option("--width", gen.width);
    g->add_option("--height", gen.height);
    g->add_option("--wind", gen.wind, "Wind probabilities: none,up,down,left,right")->delimiter(',');
    g->add_option("--hazard-fraction", gen.hazard_fraction);

    SolveArgs solve;
    auto* s = app.add_subcommand("solve", "Solve for Q* or the causal bounds");
    s->add_option("--env", solve.env)->required()->check(CLI::ExistingFile);
    s->add_option("--method", solve.method)->check(CLI::IsMember({"vi", "causal-lower", "causal-upper"}));
    s->add_option("--data", solve.data, "Observational trajectory CSV; the nominal model is estimated from it")
        ->check(CLI::ExistingFile);
    s->add_option("--out,-o", solve.out, "Q-table CSV (stdout when omitted)");
    s->add_option("--tol", solve.tol);
    s->add_option("--max-iters", solve.max_iters);

    SampleArgs sample;
    auto* sm = app.add_subcommand("sample", "Sample an observational trajectory");
    sm->add_option("--env", sample.env)->required()->check(CLI::ExistingFile);
    sm->add_option("--horizon", sample.horizon);
    sm->add_option("--seed", sample.seed);
    sm->add_option("--out,-o", sample.out);

    std::string config_path;
    std::size_t workers = 0;
    auto* t = app.add_subcommand("train", "Run an experiment from a config file");
    t->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
    t->add_option("--workers", workers, "Override the worker count");

    ReportArgs report;
    auto* r = app.add_subcommand("report", "Aggregate results in a directory");
    r->add_option("--dir", report.dir)->required()->check(CLI::ExistingDirectory);
    r->add_option("--metric", report.metric)->check(CLI::IsMember({"mean", "median", "iqm"}));
    r->add_option("--bootstrap", report.bootstrap, "Number of bootstrap resamples (0: no intervals)");
    r->add_option("--confidence", report.confidence);
    r->add_option("--seed", report.seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*g) return run_gen(gen);
        if (*s) return run_solve(solve);
        if (*sm) return run_sample(sample);
        if (*t) {
            auto cfg = load_experiment_config(config_path);
            if (workers > 0) cfg.workers = workers;
            const auto records = run_experiment(cfg);
            std::cerr << "records=" << records.size() << "\noutput_dir=" << cfg.output_dir << '\n';
            return 0;
        }
        if (*r) return run_report(report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
