#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace causalq {

using StateId = std::size_t;
using ActionId = std::size_t;

/// Dense row-major 2-D array of doubles.
class Table2 {
public:
    Table2() = default;
    Table2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool operator==(const Table2&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Dense 3-D array indexed [i][j][k], used for transition kernels [s][x][s'].
class Table3 {
public:
    Table3() = default;
    Table3(std::size_t n0, std::size_t n1, std::size_t n2, double fill = 0.0)
        : n0_(n0), n1_(n1), n2_(n2), data_(n0 * n1 * n2, fill) {}

    std::size_t dim0() const { return n0_; }
    std::size_t dim1() const { return n1_; }
    std::size_t dim2() const { return n2_; }

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * n1_ + j) * n2_ + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * n1_ + j) * n2_ + k];
    }

    std::span<double> row(std::size_t i, std::size_t j) { return {data_.data() + (i * n1_ + j) * n2_, n2_}; }
    std::span<const double> row(std::size_t i, std::size_t j) const {
        return {data_.data() + (i * n1_ + j) * n2_, n2_};
    }

    const std::vector<double>& data() const { return data_; }

    bool operator==(const Table3&) const = default;

private:
    std::size_t n0_ = 0, n1_ = 0, n2_ = 0;
    std::vector<double> data_;
};

enum class QKind { q_star, q_lower, q_upper, q_policy };

inline std::string_view to_string(QKind k) {
    switch (k) {
        case QKind::q_star: return "q_star";
        case QKind::q_lower: return "q_lower";
        case QKind::q_upper: return "q_upper";
        case QKind::q_policy: return "q_policy";
    }
    return "unknown";
}

inline QKind qkind_from_string(std::string_view s) {
    if (s == "q_star") return QKind::q_star;
    if (s == "q_lower") return QKind::q_lower;
    if (s == "q_upper") return QKind::q_upper;
    if (s == "q_policy") return QKind::q_policy;
    throw std::invalid_argument("unknown QTable kind: " + std::string(s));
}

/// State-action values together with the quantity they represent.
struct QTable {
    Table2 values;
    QKind kind = QKind::q_star;

    QTable() = default;
    QTable(std::size_t n_states, std::size_t n_actions, QKind k, double fill = 0.0)
        : values(n_states, n_actions, fill), kind(k) {}

    std::size_t n_states() const { return values.rows(); }
    std::size_t n_actions() const { return values.cols(); }

    double operator()(StateId s, ActionId x) const { return values(s, x); }
    double& operator()(StateId s, ActionId x) { return values(s, x); }

    double max_value(StateId s) const {
        auto r = values.row(s);
        return *std::max_element(r.begin(), r.end());
    }

    bool all_finite() const {
        return std::all_of(values.data().begin(), values.data().end(),
                           [](double v) { return std::isfinite(v); });
    }
};

/// Stochastic policy pi(x | s).
struct Policy {
    Table2 probs;
    bool deterministic = false;

    std::size_t n_states() const { return probs.rows(); }
    std::size_t n_actions() const { return probs.cols(); }

    static Policy uniform(std::size_t n_states, std::size_t n_actions) {
        return {Table2(n_states, n_actions, 1.0 / static_cast<double>(n_actions)), n_actions == 1};
    }

    static Policy from_actions(std::span<const ActionId> actions, std::size_t n_actions) {
        Policy p{Table2(actions.size(), n_actions, 0.0), true};
        for (std::size_t s = 0; s < actions.size(); ++s) p.probs(s, actions[s]) = 1.0;
        return p;
    }

    /// Action with the largest probability (lowest index on ties).
    ActionId mode(StateId s) const {
        auto r = probs.row(s);
        return static_cast<ActionId>(std::max_element(r.begin(), r.end()) - r.begin());
    }

    void validate(double tol = 1e-12) const {
        for (std::size_t s = 0; s < n_states(); ++s) {
            double sum = 0.0;
            for (double p : probs.row(s)) {
                if (!(p >= 0.0)) throw std::invalid_argument("Policy: negative probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > tol) throw std::invalid_argument("Policy: row does not sum to 1");
        }
    }
};

/// Sup-norm distance between two equally shaped tables.
inline double sup_distance(const Table2& a, const Table2& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("sup_distance: shape mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

inline double sup_distance(const QTable& a, const QTable& b) { return sup_distance(a.values, b.values); }

}  // namespace causalq
