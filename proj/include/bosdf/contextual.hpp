#pragma once

#include "bosdf/environments.hpp"
#include "bosdf/kernel.hpp"
#include "bosdf/policies.hpp"
#include "bosdf/posterior.hpp"
#include "bosdf/regret.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bosdf {

/// Order in which context ids arrive; each is repeated `repeat_count`
/// times consecutively.
struct ContextSchedule {
    std::vector<std::size_t> order;
    std::size_t repeat_count = 1;

    [[nodiscard]] std::size_t rounds() const { return order.size() * repeat_count; }

    /// Context of round t (1-based).
    [[nodiscard]] std::size_t context_at(long t) const {
        if (t < 1 || static_cast<std::size_t>(t) > rounds()) {
            throw std::out_of_range("round " + std::to_string(t) + " outside the context schedule");
        }
        return order[(static_cast<std::size_t>(t) - 1) / repeat_count];
    }
};

inline ContextSchedule sequential_schedule(std::size_t contexts, std::size_t repeat_count) {
    if (contexts == 0 || repeat_count == 0) {
        throw std::invalid_argument("context schedule needs >= 1 context and repeat_count >= 1");
    }
    ContextSchedule s;
    s.repeat_count = repeat_count;
    for (std::size_t i = 0; i < contexts; ++i) s.order.push_back(i);
    return s;
}

/// g(z, x) tabulated over contexts x queries.
struct ContextualObjective {
    std::vector<Vector> contexts;
    Domain queries;
    Matrix values;  // rows: contexts, cols: query ids
    double noise = 0.05;
    double B_y = 1.0;

    [[nodiscard]] std::size_t optimum_id(std::size_t z) const {
        Eigen::Index idx = 0;
        values.row(static_cast<Eigen::Index>(z)).maxCoeff(&idx);
        return static_cast<std::size_t>(idx);
    }
    [[nodiscard]] double optimum(std::size_t z) const { return values.row(static_cast<Eigen::Index>(z)).maxCoeff(); }
    [[nodiscard]] double value(std::size_t z, std::size_t x) const {
        return values(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(x));
    }
    [[nodiscard]] double regret(std::size_t z, std::size_t x) const { return optimum(z) - value(z, x); }

    /// Joint inputs [z; x] for every query under context z.
    [[nodiscard]] std::vector<Vector> slice(std::size_t z) const {
        std::vector<Vector> out;
        out.reserve(queries.size());
        for (const auto& x : queries.points()) out.push_back(join_input(contexts.at(z), x));
        return out;
    }
};

inline std::vector<Vector> context_slice(const Vector& z, const Domain& queries) {
    std::vector<Vector> out;
    out.reserve(queries.size());
    for (const auto& x : queries.points()) out.push_back(join_input(z, x));
    return out;
}

/// Chooses a query for context z_t under an SDF rule: the joint posterior
/// is restricted to {(z_t, x) : x in Q} and the usual UCB / TS rule runs
/// on that slice.  Rebinds the state's candidate set when needed.
template <CovarianceKernel K>
std::size_t select_contextual(Rule rule, PosteriorState<K>& state, const Vector& z, const Domain& queries,
                              double nu, Rng& rng) {
    auto slice = context_slice(z, queries);
    if (state.candidates() != slice) {
        state.bind_candidates(std::move(slice));
    }
    switch (rule) {
        case Rule::UcbSdf:
            return select_ucb_sdf(state, nu);
        case Rule::TsSdf:
            return select_ts_sdf(state, nu, rng);
        default:
            throw std::invalid_argument("select_contextual: use the run loop for baseline rules");
    }
}

/// Per-round regret against the per-context optimum.
inline RegretLog contextual_regret(const ContextualObjective& objective,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& trace) {
    RegretLog log;
    double cum = 0.0;
    long t = 0;
    for (const auto& [z, x] : trace) {
        LogRow row;
        row.t = ++t;
        row.point_id = x;
        row.inst_regret = objective.regret(z, x);
        cum += row.inst_regret;
        row.cum_regret = cum;
        log.rows.push_back(row);
    }
    return log;
}

struct Standardization {
    Vector mean;
    Vector scale;
};

/// Keeps the first `features` columns and standardizes them to zero mean
/// and unit variance (population std; constant columns keep scale 1).
inline std::pair<std::vector<Vector>, Standardization> standardize_contexts(const std::vector<Vector>& raw,
                                                                            std::size_t features) {
    if (raw.empty()) {
        throw std::invalid_argument("standardize_contexts: no contexts");
    }
    const auto d = std::min<Eigen::Index>(static_cast<Eigen::Index>(features), raw.front().size());
    if (d < 1) {
        throw std::invalid_argument("standardize_contexts: need at least one feature");
    }
    Standardization st{Vector::Zero(d), Vector::Ones(d)};
    const auto n = static_cast<double>(raw.size());
    for (const auto& r : raw) st.mean += r.head(d);
    st.mean /= n;
    Vector var = Vector::Zero(d);
    for (const auto& r : raw) var += (r.head(d) - st.mean).cwiseAbs2();
    var /= n;
    for (Eigen::Index j = 0; j < d; ++j) st.scale[j] = var[j] > 0.0 ? std::sqrt(var[j]) : 1.0;
    std::vector<Vector> out;
    for (const auto& r : raw) out.push_back((r.head(d) - st.mean).cwiseQuotient(st.scale));
    return {std::move(out), std::move(st)};
}

/// Contextual objective drawn from GP(0, k_z (x) k_x) on contexts x queries
/// via the Kronecker factorization G = L_z E L_x^T, normalized to [0, 1].
inline ContextualObjective sample_contextual(const SqExpKernel& context_kernel, const SqExpKernel& query_kernel,
                                             std::vector<Vector> contexts, Domain queries, std::uint64_t seed,
                                             double noise = 0.05) {
    const Matrix kz = cross_gram(context_kernel, std::span<const Vector>(contexts), std::span<const Vector>(contexts));
    const Matrix kx = cross_gram(query_kernel, std::span<const Vector>(queries.points()),
                                 std::span<const Vector>(queries.points()));
    const Matrix lz = factor_with_jitter(kz);
    const Matrix lx = factor_with_jitter(kx);
    Rng rng = make_rng(seed, Stream::Objective);
    Matrix e(lz.rows(), lx.rows());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
        for (Eigen::Index j = 0; j < e.cols(); ++j) e(i, j) = normal(rng);
    }
    Matrix g = lz * e * lx.transpose();
    const Vector flat = Eigen::Map<const Vector>(g.data(), g.size());
    const Vector unit = normalize_unit(flat);
    g = Eigen::Map<const Matrix>(unit.data(), g.rows(), g.cols());
    return ContextualObjective{std::move(contexts), std::move(queries), std::move(g), noise};
}

/// Loads a contextual tabular benchmark.
///
/// table:    task_id,<dim_1>,...,<dim_n>,value   (every task lists the same configurations)
/// contexts: task_id,<feature_1>,...            (one row per task)
///
/// Tasks are ordered by first appearance in the context file; the first
/// `features` context columns are standardized.
inline ContextualObjective load_contextual(const std::string& table_path, const std::string& contexts_path,
                                           std::size_t features, TabularOptions opts = {}, double noise = 0.0,
                                           Standardization* standardization = nullptr) {
    const auto ctx = detail::read_numeric_csv(contexts_path);
    if (ctx.header.size() < 2) {
        throw std::runtime_error("'" + contexts_path + "' needs task_id and at least one feature");
    }
    std::map<long, std::size_t> task_index;
    std::vector<Vector> raw;
    for (std::size_t r = 0; r < ctx.rows.size(); ++r) {
        const auto& row = ctx.rows[r];
        const long id = std::lround(row[0]);
        if (!task_index.emplace(id, raw.size()).second) {
            throw std::runtime_error(contexts_path + ":" + std::to_string(ctx.lines[r]) + ": duplicate task_id");
        }
        raw.emplace_back(Eigen::Map<const Vector>(row.data() + 1, static_cast<Eigen::Index>(row.size() - 1)));
    }
    auto [contexts, st] = standardize_contexts(raw, features);
    if (standardization) *standardization = st;

    const auto tab = detail::read_numeric_csv(table_path);
    if (tab.header.size() < 3) {
        throw std::runtime_error("'" + table_path + "' needs task_id, >= 1 dimension and value");
    }
    const auto dims = static_cast<Eigen::Index>(tab.header.size() - 2);
    std::vector<std::map<std::vector<double>, double>> per_task(contexts.size());
    std::vector<std::vector<double>> config_order;
    for (std::size_t r = 0; r < tab.rows.size(); ++r) {
        const auto& row = tab.rows[r];
        const std::string where = table_path + ":" + std::to_string(tab.lines[r]);
        const auto it = task_index.find(std::lround(row[0]));
        if (it == task_index.end()) {
            throw std::runtime_error(where + ": task_id has no context row");
        }
        std::vector<double> key(row.begin() + 1, row.end() - 1);
        const double v = row.back();
        if (v < 0.0 || v > 1.0) {
            throw std::runtime_error(where + ": value outside [0, 1]");
        }
        auto& task = per_task[it->second];
        if (!task.emplace(key, v).second) {
            throw std::runtime_error(where + ": duplicate configuration for task");
        }
        if (it->second == 0) config_order.push_back(key);
    }
    if (config_order.empty()) {
        throw std::runtime_error("'" + table_path + "' has no rows for the first task");
    }
    Matrix values(static_cast<Eigen::Index>(contexts.size()), static_cast<Eigen::Index>(config_order.size()));
    for (std::size_t z = 0; z < per_task.size(); ++z) {
        if (per_task[z].size() != config_order.size()) {
            throw std::runtime_error("'" + table_path + "': task " + std::to_string(z) +
                                     " does not cover the shared configuration set");
        }
        for (std::size_t c = 0; c < config_order.size(); ++c) {
            const auto found = per_task[z].find(config_order[c]);
            if (found == per_task[z].end()) {
                throw std::runtime_error("'" + table_path + "': task " + std::to_string(z) +
                                         " is missing a configuration");
            }
            values(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(c)) = found->second;
        }
    }
    std::vector<Vector> pts;
    for (const auto& key : config_order) pts.emplace_back(Eigen::Map<const Vector>(key.data(), dims));
    if (opts.scale_inputs) detail::unit_scale_columns(pts);
    if (opts.normalize) {
        const Vector flat = Eigen::Map<const Vector>(values.data(), values.size());
        const Vector unit = normalize_unit(flat);
        values = Eigen::Map<const Matrix>(unit.data(), values.rows(), values.cols());
    }
    return ContextualObjective{std::move(contexts), Domain(std::move(pts)), std::move(values), noise};
}

}  // namespace bosdf
