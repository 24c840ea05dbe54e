#pragma once

#include "causalq/cmdp.hpp"
#include "causalq/envs.hpp"
#include "causalq/learners.hpp"
#include "causalq/neural.hpp"
#include "causalq/tables.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace causalq {

namespace io {

using json = nlohmann::json;

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline void expect_header(std::istream& is, const std::string& header) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("CSV: missing header, expected '" + header + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw std::runtime_error("CSV: header '" + line + "' does not match '" + header + "'");
}

/// Reads data rows (skipping blank lines) and checks the column count.
template <class RowFn>
void for_each_row(std::istream& is, std::size_t n_cols, RowFn&& fn) {
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != n_cols)
            throw std::runtime_error("CSV: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                     " columns, expected " + std::to_string(n_cols));
        fn(cells);
    }
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    return is;
}

}  // namespace io

// ---------------------------------------------------------------------------
// CMDP files (JSON)

inline nlohmann::json cmdp_to_json(const Cmdp& m, const FeatureMap* features = nullptr) {
    const auto& d = m.data();
    const std::size_t S = d.n_states, X = d.n_actions, U = d.n_noise;
    nlohmann::json j;
    j["n_states"] = S;
    j["n_actions"] = X;
    j["n_noise"] = U;
    j["gamma"] = d.gamma;
    j["reward_lo"] = d.reward_lo;
    j["reward_hi"] = d.reward_hi;
    j["noise_dist"] = d.noise_dist;
    j["init_dist"] = d.init_dist;
    auto trans = nlohmann::json::array(), reward = nlohmann::json::array(), behavior = nlohmann::json::array();
    for (StateId s = 0; s < S; ++s) {
        auto ts = nlohmann::json::array(), rs = nlohmann::json::array();
        for (ActionId x = 0; x < X; ++x) {
            auto tx = nlohmann::json::array(), rx = nlohmann::json::array();
            for (std::size_t u = 0; u < U; ++u) {
                tx.push_back(m.next_state(s, x, u));
                rx.push_back(m.reward(s, x, u));
            }
            ts.push_back(std::move(tx));
            rs.push_back(std::move(rx));
        }
        trans.push_back(std::move(ts));
        reward.push_back(std::move(rs));
        auto bs = nlohmann::json::array();
        for (std::size_t u = 0; u < U; ++u) bs.push_back(m.behavior(s, u));
        behavior.push_back(std::move(bs));
    }
    j["trans_fn"] = std::move(trans);
    j["behavior_fn"] = std::move(behavior);
    j["reward_fn"] = std::move(reward);
    if (features) {
        auto f = nlohmann::json::array();
        for (StateId s = 0; s < features->n_states(); ++s) {
            auto row = (*features)(s);
            f.push_back(std::vector<double>(row.begin(), row.end()));
        }
        j["features"] = std::move(f);
    }
    return j;
}

struct LoadedEnv {
    Cmdp cmdp;
    std::optional<FeatureMap> features;
};

inline LoadedEnv cmdp_from_json(const nlohmann::json& j) {
    try {
        CmdpData d;
        d.n_states = j.at("n_states").get<std::size_t>();
        d.n_actions = j.at("n_actions").get<std::size_t>();
        d.n_noise = j.at("n_noise").get<std::size_t>();
        d.gamma = j.at("gamma").get<double>();
        d.reward_lo = j.at("reward_lo").get<double>();
        d.reward_hi = j.at("reward_hi").get<double>();
        d.noise_dist = j.at("noise_dist").get<std::vector<double>>();
        d.init_dist = j.at("init_dist").get<std::vector<double>>();
        const auto trans = j.at("trans_fn").get<std::vector<std::vector<std::vector<StateId>>>>();
        const auto reward = j.at("reward_fn").get<std::vector<std::vector<std::vector<double>>>>();
        const auto behavior = j.at("behavior_fn").get<std::vector<std::vector<ActionId>>>();
        auto bad = [](const char* key) { return std::invalid_argument(std::string("Cmdp file: ") + key + " has the wrong shape"); };
        if (trans.size() != d.n_states) throw bad("trans_fn");
        if (reward.size() != d.n_states) throw bad("reward_fn");
        if (behavior.size() != d.n_states) throw bad("behavior_fn");
        for (StateId s = 0; s < d.n_states; ++s) {
            if (trans[s].size() != d.n_actions) throw bad("trans_fn");
            if (reward[s].size() != d.n_actions) throw bad("reward_fn");
            if (behavior[s].size() != d.n_noise) throw bad("behavior_fn");
            for (ActionId x = 0; x < d.n_actions; ++x) {
                if (trans[s][x].size() != d.n_noise) throw bad("trans_fn");
                if (reward[s][x].size() != d.n_noise) throw bad("reward_fn");
                d.trans_fn.insert(d.trans_fn.end(), trans[s][x].begin(), trans[s][x].end());
                d.reward_fn.insert(d.reward_fn.end(), reward[s][x].begin(), reward[s][x].end());
            }
            d.behavior_fn.insert(d.behavior_fn.end(), behavior[s].begin(), behavior[s].end());
        }
        std::optional<FeatureMap> features;
        if (j.contains("features")) {
            const auto rows = j.at("features").get<std::vector<std::vector<double>>>();
            if (rows.size() != d.n_states || rows.empty()) throw bad("features");
            FeatureMap fm{Table2(rows.size(), rows[0].size())};
            for (StateId s = 0; s < rows.size(); ++s) {
                if (rows[s].size() != fm.dim()) throw bad("features");
                std::copy(rows[s].begin(), rows[s].end(), fm.features.row(s).begin());
            }
            features = std::move(fm);
        }
        return {Cmdp(std::move(d)), std::move(features)};
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("Cmdp file: ") + e.what());
    }
}

inline void save_cmdp(const std::string& path, const Cmdp& m, const FeatureMap* features = nullptr) {
    auto os = io::open_out(path);
    os << cmdp_to_json(m, features).dump(1) << '\n';
}

inline LoadedEnv load_cmdp(const std::string& path) {
    auto is = io::open_in(path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("Cmdp file " + path + ": " + e.what());
    }
    return cmdp_from_json(j);
}

// ---------------------------------------------------------------------------
// Trajectories: s,x,y,s_next,done

inline void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "s,x,y,s_next,done\n";
    for (const auto& r : t.steps) os << r.s << ',' << r.x << ',' << r.y << ',' << r.s_next << ',' << (r.done ? 1 : 0) << '\n';
}

/// The CSV carries no regime tag; the caller states it.
inline Trajectory read_trajectory_csv(std::istream& is, Regime regime = Regime::observational) {
    io::expect_header(is, "s,x,y,s_next,done");
    Trajectory t{{}, regime};
    io::for_each_row(is, 5, [&](const std::vector<std::string>& c) {
        t.steps.push_back({std::stoul(c[0]), std::stoul(c[1]), std::stod(c[2]), std::stoul(c[3]), std::stoi(c[4]) != 0});
    });
    return t;
}

// ---------------------------------------------------------------------------
// Q tables: s,x,value,kind

inline void write_qtable_csv(std::ostream& os, const QTable& q) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "s,x,value,kind\n";
    for (StateId s = 0; s < q.n_states(); ++s)
        for (ActionId x = 0; x < q.n_actions(); ++x) os << s << ',' << x << ',' << q(s, x) << ',' << to_string(q.kind) << '\n';
}

inline QTable read_qtable_csv(std::istream& is) {
    io::expect_header(is, "s,x,value,kind");
    struct Row { StateId s; ActionId x; double v; };
    std::vector<Row> rows;
    std::optional<QKind> kind;
    std::size_t S = 0, X = 0;
    io::for_each_row(is, 4, [&](const std::vector<std::string>& c) {
        Row r{std::stoul(c[0]), std::stoul(c[1]), std::stod(c[2])};
        const auto k = qkind_from_string(c[3]);
        if (kind && *kind != k) throw std::runtime_error("QTable CSV: mixed kinds");
        kind = k;
        S = std::max(S, r.s + 1);
        X = std::max(X, r.x + 1);
        rows.push_back(r);
    });
    if (rows.size() != S * X) throw std::runtime_error("QTable CSV: table is not dense");
    QTable q(S, X, kind.value_or(QKind::q_star));
    for (const auto& r : rows) q(r.s, r.x) = r.v;
    return q;
}

// ---------------------------------------------------------------------------
// Learning curves: step,eval_return_mean,eval_return_std,algo,seed

inline void write_curve_csv(std::ostream& os, const LearningCurve& c, bool header = true) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    if (header) os << "step,eval_return_mean,eval_return_std,algo,seed\n";
    for (const auto& p : c.points)
        os << p.step << ',' << p.eval_return_mean << ',' << p.eval_return_std << ',' << c.algo << ',' << c.seed << '\n';
}

// ---------------------------------------------------------------------------
// Network checkpoints (JSON)

inline nlohmann::json net_to_json(const MlpQNet& net) {
    auto layers = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        layers.push_back({{"in", l.in},
                          {"out", l.out},
                          {"activation", l.activation == Activation::relu ? "relu" : "identity"},
                          {"weights", l.weights},
                          {"bias", l.bias}});
    }
    return {{"layers", std::move(layers)}};
}

inline MlpQNet net_from_json(const nlohmann::json& j) {
    try {
        std::vector<DenseLayer> layers;
        for (const auto& l : j.at("layers")) {
            const auto act = l.at("activation").get<std::string>();
            if (act != "relu" && act != "identity") throw std::invalid_argument("checkpoint: unknown activation " + act);
            layers.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                              l.at("weights").get<std::vector<double>>(), l.at("bias").get<std::vector<double>>(),
                              act == "relu" ? Activation::relu : Activation::identity});
        }
        return MlpQNet(std::move(layers));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("checkpoint: ") + e.what());
    }
}

inline void save_net(const std::string& path, const MlpQNet& net) {
    auto os = io::open_out(path);
    os << net_to_json(net).dump(1) << '\n';
}

inline MlpQNet load_net(const std::string& path) {
    auto is = io::open_in(path);
    nlohmann::json j;
    is >> j;
    return net_from_json(j);
}

}  // namespace causalq
