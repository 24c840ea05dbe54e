#pragma once

#include "causalq/envs.hpp"
#include "causalq/io.hpp"
#include "causalq/learners.hpp"
#include "causalq/metrics.hpp"
#include "causalq/neural.hpp"
#include "causalq/solvers.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace causalq {

namespace fs = std::filesystem;

inline const std::vector<std::string>& known_algorithms() {
    static const std::vector<std::string> algos{"causal_tabular", "naive_tabular", "causal_neural", "exact_lower_vi",
                                                "exact_vi"};
    return algos;
}

/// Which environment to build: a generator with parameters, or a CMDP file.
struct EnvSpec {
    std::string generator = "random";  // random | gridworld | bandit | file
    std::map<std::string, std::string> params;
    std::string path;
    std::string env_id;
};

struct ExperimentConfig {
    EnvSpec environment;
    std::vector<std::string> algorithms;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, std::string> learner;  // overrides applied onto LearnerConfig::for_cmdp
    std::string output_dir = "results";
    std::size_t workers = 1;

    void validate() const {
        if (algorithms.empty()) throw std::invalid_argument("ExperimentConfig: no algorithms");
        if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: no seeds");
        for (const auto& a : algorithms)
            if (std::find(known_algorithms().begin(), known_algorithms().end(), a) == known_algorithms().end())
                throw std::invalid_argument("ExperimentConfig: unknown algorithm '" + a + "'");
        if (environment.generator == "file" && !fs::exists(environment.path))
            throw std::invalid_argument("ExperimentConfig: environment file not found: " + environment.path);
        if (workers < 1) throw std::invalid_argument("ExperimentConfig: workers must be >= 1");
    }
};

struct ResultRecord {
    std::string env_id;
    std::string algo;
    std::uint64_t seed = 0;
    std::size_t step = 0;
    double eval_return = 0.0;
    double wall_time = 0.0;

    bool operator==(const ResultRecord&) const = default;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double param_double(const std::map<std::string, std::string>& p, const std::string& key, double def) {
    auto it = p.find(key);
    return it == p.end() ? def : std::stod(it->second);
}

inline std::uint64_t param_uint(const std::map<std::string, std::string>& p, const std::string& key, std::uint64_t def) {
    auto it = p.find(key);
    return it == p.end() ? def : std::stoull(it->second);
}

}  // namespace detail

/// Reads the INI-style experiment file with sections [environment],
/// [algorithms], [learner] and [output]. Relative environment paths resolve
/// against the config file's directory.
inline ExperimentConfig load_experiment_config(const std::string& path) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    ExperimentConfig cfg;
    const fs::path base = fs::path(path).parent_path();
    for (const auto& [section, body] : tree) {
        if (section != "environment" && section != "algorithms" && section != "learner" && section != "output")
            throw std::invalid_argument("config: unknown section [" + section + "]");
    }
    if (auto env = tree.get_child_optional("environment")) {
        for (const auto& [key, node] : *env) {
            const auto value = detail::trim(node.data());
            if (key == "generator") cfg.environment.generator = value;
            else if (key == "path") cfg.environment.path = fs::path(value).is_absolute() ? value : (base / value).string();
            else if (key == "env_id") cfg.environment.env_id = value;
            else cfg.environment.params[key] = value;
        }
    } else {
        throw std::invalid_argument("config: missing [environment] section");
    }
    if (auto algos = tree.get_child_optional("algorithms")) {
        for (const auto& [key, node] : *algos) {
            const auto value = detail::trim(node.data());
            if (key == "list") cfg.algorithms = detail::split_list(value);
            else if (key == "seeds")
                for (const auto& s : detail::split_list(value)) cfg.seeds.push_back(std::stoull(s));
            else if (key == "workers") cfg.workers = std::stoul(value);
            else throw std::invalid_argument("config: unknown key algorithms." + key);
        }
    }
    if (auto learner = tree.get_child_optional("learner"))
        for (const auto& [key, node] : *learner) cfg.learner[key] = detail::trim(node.data());
    if (auto out = tree.get_child_optional("output")) {
        for (const auto& [key, node] : *out) {
            if (key != "dir") throw std::invalid_argument("config: unknown key output." + key);
            const auto value = detail::trim(node.data());
            cfg.output_dir = fs::path(value).is_absolute() ? value : (base / value).string();
        }
    }
    cfg.validate();
    return cfg;
}

/// A built environment with its feature map and identifier.
struct BuiltEnv {
    Cmdp cmdp;
    FeatureMap features;
    std::string env_id;
};

inline BuiltEnv build_environment(const EnvSpec& spec) {
    const auto& p = spec.params;
    auto id_or = [&](std::string def) { return spec.env_id.empty() ? def : spec.env_id; };
    if (spec.generator == "random") {
        RandomCmdpOptions o;
        o.n_states = detail::param_uint(p, "n_states", o.n_states);
        o.n_actions = detail::param_uint(p, "n_actions", o.n_actions);
        o.n_noise = detail::param_uint(p, "n_noise", o.n_noise);
        o.gamma = detail::param_double(p, "gamma", o.gamma);
        o.seed = detail::param_uint(p, "seed", o.seed);
        o.confounding_strength = detail::param_double(p, "confounding_strength", o.confounding_strength);
        o.uniform_noise = detail::param_uint(p, "uniform_noise", 0) != 0;
        auto m = make_random_cmdp(o);
        auto fm = FeatureMap::one_hot(m.n_states());
        return {std::move(m), std::move(fm), id_or("random-seed" + std::to_string(o.seed))};
    }
    if (spec.generator == "gridworld") {
        GridworldOptions o;
        o.width = detail::param_uint(p, "width", o.width);
        o.height = detail::param_uint(p, "height", o.height);
        o.seed = detail::param_uint(p, "seed", o.seed);
        o.gamma = detail::param_double(p, "gamma", o.gamma);
        o.hazard_fraction = detail::param_double(p, "hazard_fraction", o.hazard_fraction);
        if (auto it = p.find("wind"); it != p.end()) {
            const auto parts = detail::split_list(it->second);
            if (parts.size() != 5) throw std::invalid_argument("gridworld: wind needs 5 probabilities");
            for (std::size_t i = 0; i < 5; ++i) o.wind_dist[i] = std::stod(parts[i]);
        }
        auto g = make_confounded_gridworld(o);
        return {std::move(g.cmdp), std::move(g.features), id_or("gridworld-seed" + std::to_string(o.seed))};
    }
    if (spec.generator == "bandit") {
        const auto seed = detail::param_uint(p, "seed", 0);
        auto b = make_adversarial_confounded_bandit(seed, detail::param_double(p, "gamma", 0.9));
        auto fm = FeatureMap::one_hot(b.cmdp.n_states());
        return {std::move(b.cmdp), std::move(fm), id_or("bandit-seed" + std::to_string(seed))};
    }
    if (spec.generator == "file") {
        auto loaded = load_cmdp(spec.path);
        auto fm = loaded.features ? std::move(*loaded.features) : FeatureMap::one_hot(loaded.cmdp.n_states());
        return {std::move(loaded.cmdp), std::move(fm), id_or(fs::path(spec.path).stem().string())};
    }
    throw std::invalid_argument("unknown environment generator: " + spec.generator);
}

/// Applies key=value overrides onto a learner configuration.
inline void apply_learner_overrides(LearnerConfig& c, const std::map<std::string, std::string>& kv,
                                    NetSpec* net = nullptr) {
    for (const auto& [k, v] : kv) {
        if (k == "gamma") c.gamma = std::stod(v);
        else if (k == "learning_rate") c.learning_rate = std::stod(v);
        else if (k == "lr_decay_steps") c.lr_decay_steps = std::stod(v);
        else if (k == "epsilon_start") c.epsilon_start = std::stod(v);
        else if (k == "epsilon_end") c.epsilon_end = std::stod(v);
        else if (k == "epsilon_decay_fraction") c.epsilon_decay_fraction = std::stod(v);
        else if (k == "epsilon") c.epsilon_start = c.epsilon_end = std::stod(v);
        else if (k == "batch_size") c.batch_size = std::stoul(v);
        else if (k == "worst_state_candidates") c.worst_state_candidates = std::stoul(v);
        else if (k == "candidate_mode") {
            if (v == "buffer") c.candidate_mode = CandidateMode::buffer;
            else if (v == "all_states") c.candidate_mode = CandidateMode::all_states;
            else throw std::invalid_argument("learner.candidate_mode must be buffer or all_states");
        } else if (k == "target_sync_period") c.target_sync_period = std::stoul(v);
        else if (k == "total_steps") c.total_steps = std::stoul(v);
        else if (k == "replay_capacity") c.replay_capacity = std::stoul(v);
        else if (k == "episode_horizon") c.episode_horizon = std::stoul(v);
        else if (k == "init_value") c.init_value = std::stod(v);
        else if (k == "eval_fraction") c.eval_fraction = std::stod(v);
        else if (k == "eval_episodes") c.eval_episodes = std::stoul(v);
        else if (k == "eval_horizon") c.eval_horizon = std::stoul(v);
        else if (k == "reward_lo") c.reward_lo = std::stod(v);
        else if (k == "hidden" && net) {
            net->hidden.clear();
            for (const auto& h : detail::split_list(v)) net->hidden.push_back(std::stoul(h));
        } else {
            throw std::invalid_argument("unknown learner key: " + k);
        }
    }
}

/// Reference returns for normalisation: a uniformly random policy and the
/// optimal policy of the true model (the demonstrator proxy).
struct ReferenceScores {
    double random_ref = 0.0;
    double demo_ref = 0.0;
};

inline ReferenceScores reference_scores(const Cmdp& m) {
    const auto uniform = Policy::uniform(m.n_states(), m.n_actions());
    const auto best = greedy_policy(optimal_q(m).q);
    return {policy_value(m, uniform), policy_value(m, best)};
}

inline std::string cell_file(const std::string& dir, const std::string& env_id, const std::string& algo,
                             std::uint64_t seed) {
    return (fs::path(dir) / (env_id + "__" + algo + "__seed" + std::to_string(seed) + ".csv")).string();
}

inline constexpr const char* kResultsHeader = "env_id,algo,seed,step,eval_return,wall_time";

inline void write_results_csv(std::ostream& os, const std::vector<ResultRecord>& recs) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << kResultsHeader << '\n';
    for (const auto& r : recs)
        os << r.env_id << ',' << r.algo << ',' << r.seed << ',' << r.step << ',' << r.eval_return << ',' << r.wall_time << '\n';
}

inline std::vector<ResultRecord> read_results_csv(std::istream& is) {
    io::expect_header(is, kResultsHeader);
    std::vector<ResultRecord> out;
    io::for_each_row(is, 6, [&](const std::vector<std::string>& c) {
        out.push_back({c[0], c[1], std::stoull(c[2]), std::stoul(c[3]), std::stod(c[4]), std::stod(c[5])});
    });
    return out;
}

inline std::vector<ResultRecord> read_results_file(const std::string& path) {
    auto is = io::open_in(path);
    return read_results_csv(is);
}

/// Runs a single (algorithm, seed) cell and returns its records.
inline std::vector<ResultRecord> run_cell(const BuiltEnv& env, const std::string& algo, std::uint64_t seed,
                                          const std::map<std::string, std::string>& overrides) {
    LearnerConfig cfg = LearnerConfig::for_cmdp(env.cmdp);
    NetSpec net;
    apply_learner_overrides(cfg, overrides, &net);
    cfg.seed = seed;
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    std::vector<ResultRecord> out;
    auto from_curve = [&](const LearningCurve& c) {
        for (const auto& p : c.points) out.push_back({env.env_id, algo, seed, p.step, p.eval_return_mean, p.wall_time});
    };
    if (algo == "causal_tabular") {
        from_curve(tabular_causal_q(env.cmdp, cfg).curve);
    } else if (algo == "naive_tabular") {
        from_curve(tabular_naive_q(env.cmdp, cfg).curve);
    } else if (algo == "causal_neural") {
        from_curve(neural_causal_dqn(env.cmdp, env.features, cfg, net).curve);
    } else if (algo == "exact_vi" || algo == "exact_lower_vi") {
        const QTable q = algo == "exact_vi" ? optimal_q(env.cmdp).q
                                            : causal_bound_vi(exact_nominal(env.cmdp), BoundSide::lower).q;
        const auto point = evaluate_policy_returns(env.cmdp, greedy_policy(q), cfg.eval_episodes, cfg.eval_horizon,
                                                   Rng(seed).split(1000).seed());
        out.push_back({env.env_id, algo, seed, 0, point.eval_return_mean, elapsed()});
    } else {
        throw std::invalid_argument("unknown algorithm: " + algo);
    }
    return out;
}

/// Executes every (algorithm, seed) cell, up to `workers` at a time. Each cell
/// writes its own CSV atomically; cells whose file already exists are loaded
/// instead of rerun. The merged `<env_id>.results.csv` and the reference
/// scores `<env_id>.refs.csv` are written at the end.
inline std::vector<ResultRecord> run_experiment(const ExperimentConfig& config) {
    config.validate();
    const BuiltEnv env = build_environment(config.environment);
    fs::create_directories(config.output_dir);

    struct Cell {
        std::string algo;
        std::uint64_t seed;
        std::vector<ResultRecord> records;
        std::exception_ptr error;
    };
    std::vector<Cell> cells;
    for (const auto& a : config.algorithms)
        for (auto s : config.seeds) cells.push_back({a, s, {}, nullptr});

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            auto& cell = cells[i];
            try {
                const auto path = cell_file(config.output_dir, env.env_id, cell.algo, cell.seed);
                if (fs::exists(path)) {
                    cell.records = read_results_file(path);
                    continue;
                }
                cell.records = run_cell(env, cell.algo, cell.seed, config.learner);
                const auto tmp = path + ".tmp";
                {
                    auto os = io::open_out(tmp);
                    write_results_csv(os, cell.records);
                }
                fs::rename(tmp, path);
            } catch (...) {
                cell.error = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min(config.workers, cells.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::vector<ResultRecord> all;
    for (auto& cell : cells) {
        if (cell.error) std::rethrow_exception(cell.error);
        all.insert(all.end(), cell.records.begin(), cell.records.end());
    }
    {
        auto os = io::open_out((fs::path(config.output_dir) / (env.env_id + ".results.csv")).string());
        write_results_csv(os, all);
    }
    {
        const auto refs = reference_scores(env.cmdp);
        auto os = io::open_out((fs::path(config.output_dir) / (env.env_id + ".refs.csv")).string());
        os << std::setprecision(std::numeric_limits<double>::max_digits10);
        os << "env_id,random_ref,demo_ref\n" << env.env_id << ',' << refs.random_ref << ',' << refs.demo_ref << '\n';
    }
    return all;
}

// ---------------------------------------------------------------------------
// Reporting

struct AggregateRow {
    std::string algo;
    Aggregate metric = Aggregate::mean;
    Interval value;
    std::size_t n_envs = 0;
    std::size_t n_runs = 0;
    bool normalized = false;
};

struct ReportOptions {
    std::optional<Aggregate> metric;  // all three when unset
    std::size_t bootstrap = 0;        // 0 disables intervals
    double confidence = 0.95;
    std::uint64_t seed = 0;
};

/// Final score per (env, algo, seed) is the record with the largest step.
/// Scores are normalised per environment when references are available.
inline std::vector<AggregateRow> aggregate_results(const std::vector<ResultRecord>& records,
                                                   const std::map<std::string, ReferenceScores>& refs,
                                                   const ReportOptions& opt) {
    std::map<std::tuple<std::string, std::string, std::uint64_t>, const ResultRecord*> last;
    for (const auto& r : records) {
        auto key = std::make_tuple(r.algo, r.env_id, r.seed);
        auto it = last.find(key);
        if (it == last.end() || it->second->step <= r.step) last[key] = &r;
    }
    std::map<std::string, std::map<std::string, std::vector<double>>> by_algo;
    bool all_normalized = true;
    for (const auto& [key, rec] : last) {
        const auto& [algo, env_id, seed] = key;
        double score = rec->eval_return;
        if (auto it = refs.find(env_id); it != refs.end() && it->second.demo_ref != it->second.random_ref)
            score = normalized_score(score, it->second.random_ref, it->second.demo_ref);
        else
            all_normalized = false;
        by_algo[algo][env_id].push_back(score);
    }
    std::vector<Aggregate> metrics = opt.metric ? std::vector<Aggregate>{*opt.metric}
                                                : std::vector<Aggregate>{Aggregate::mean, Aggregate::median, Aggregate::iqm};
    std::vector<AggregateRow> rows;
    for (const auto& [algo, envs] : by_algo) {
        StratifiedScores strata;
        std::size_t runs = 0;
        for (const auto& [env_id, scores] : envs) {
            strata.push_back(scores);
            runs += scores.size();
        }
        for (auto m : metrics) {
            Interval iv;
            if (opt.bootstrap > 0) {
                iv = stratified_bootstrap_ci(strata, m, opt.bootstrap, opt.confidence, opt.seed);
            } else {
                iv.point = iv.lo = iv.hi = aggregate_scores(strata, m);
            }
            rows.push_back({algo, m, iv, strata.size(), runs, all_normalized});
        }
    }
    return rows;
}

/// Loads `*.results.csv` and `*.refs.csv` from a directory and aggregates.
inline std::vector<AggregateRow> report_directory(const std::string& dir, const ReportOptions& opt) {
    if (!fs::is_directory(dir)) throw std::invalid_argument("report: not a directory: " + dir);
    std::vector<ResultRecord> records;
    std::map<std::string, ReferenceScores> refs;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    auto ends_with = [](const std::string& s, const std::string& suf) {
        return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
    };
    for (const auto& f : files) {
        const auto name = f.filename().string();
        if (ends_with(name, ".results.csv")) {
            auto recs = read_results_file(f.string());
            records.insert(records.end(), recs.begin(), recs.end());
        } else if (ends_with(name, ".refs.csv")) {
            auto is = io::open_in(f.string());
            io::expect_header(is, "env_id,random_ref,demo_ref");
            io::for_each_row(is, 3, [&](const std::vector<std::string>& c) {
                refs[c[0]] = {std::stod(c[1]), std::stod(c[2])};
            });
        }
    }
    if (records.empty()) throw std::invalid_argument("report: no *.results.csv files in " + dir);
    return aggregate_results(records, refs, opt);
}

inline void write_report_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "algo,metric,value,ci_lo,ci_hi,n_envs,n_runs,normalized\n";
    for (const auto& r : rows)
        os << r.algo << ',' << to_string(r.metric) << ',' << r.value.point << ',' << r.value.lo << ',' << r.value.hi << ','
           << r.n_envs << ',' << r.n_runs << ',' << (r.normalized ? 1 : 0) << '\n';
}

inline void write_report_table(std::ostream& os, const std::vector<AggregateRow>& rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %-7s %10s %10s %10s %6s %6s\n", "algo", "metric", "value", "ci_lo", "ci_hi",
                  "envs", "runs");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-16s %-7s %10.4f %10.4f %10.4f %6zu %6zu\n", r.algo.c_str(),
                      std::string(to_string(r.metric)).c_str(), r.value.point, r.value.lo, r.value.hi, r.n_envs, r.n_runs);
        os << buf;
    }
}

}  // namespace causalq
