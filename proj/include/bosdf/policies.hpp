#pragma once

#include "bosdf/ledger.hpp"
#include "bosdf/posterior.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bosdf {

enum class Rule {
    UcbSdf,           // GP-UCB-SDF: censored posterior, nu_t width
    TsSdf,            // GP-TS-SDF
    UcbIgnore,        // GP-UCB on completed queries only
    AsyTs,            // asynchronous TS on completed queries only
    BucbHallucinate,  // GP-BUCB: completed-only mean, all-queries variance
    BtsHallucinate,   // GP-BTS
};

inline constexpr std::array<std::pair<Rule, std::string_view>, 6> kRuleNames{{
    {Rule::UcbSdf, "UCB_SDF"},
    {Rule::TsSdf, "TS_SDF"},
    {Rule::UcbIgnore, "UCB_IGNORE"},
    {Rule::AsyTs, "ASY_TS"},
    {Rule::BucbHallucinate, "BUCB"},
    {Rule::BtsHallucinate, "BTS"},
}};

inline std::string_view rule_name(Rule r) {
    for (const auto& [rule, name] : kRuleNames) {
        if (rule == r) return name;
    }
    return "?";
}

inline Rule parse_rule(std::string_view s) {
    for (const auto& [rule, name] : kRuleNames) {
        if (name == s) return rule;
    }
    if (s == "BUCB_HALLUCINATE") return Rule::BucbHallucinate;
    if (s == "BTS_HALLUCINATE") return Rule::BtsHallucinate;
    throw std::invalid_argument("unknown policy rule '" + std::string(s) + "'");
}

inline bool is_sdf(Rule r) { return r == Rule::UcbSdf || r == Rule::TsSdf; }
inline bool is_thompson(Rule r) { return r == Rule::TsSdf || r == Rule::AsyTs || r == Rule::BtsHallucinate; }
inline bool is_hallucinating(Rule r) { return r == Rule::BucbHallucinate || r == Rule::BtsHallucinate; }

/// Base confidence width beta_t.  The theoretical form substitutes the
/// realized information gain for the maximum information gain.
struct WidthSchedule {
    enum class Mode { Theoretical, Constant };
    Mode mode = Mode::Constant;
    double constant_value = 1.0;
    double B_f = 1.0;
    double B_y = 1.0;
    double R = 0.05;
    double delta = 0.1;

    [[nodiscard]] double beta(double info_gain) const {
        if (mode == Mode::Constant) {
            return constant_value;
        }
        if (!(delta > 0.0 && delta < 1.0)) {
            throw std::invalid_argument("WidthSchedule: delta must be in (0, 1)");
        }
        return B_f + (R + B_y) * std::sqrt(2.0 * (info_gain + 1.0 + std::log(2.0 / delta)));
    }
};

struct PolicySpec {
    Rule rule = Rule::UcbSdf;
    WidthSchedule width;
};

/// B_y * sum of posterior stds at the pending queries' slots.
template <CovarianceKernel K>
double pending_width(const PosteriorState<K>& state, std::span<const std::size_t> pending_slots, double B_y) {
    double sum = 0.0;
    for (std::size_t slot : pending_slots) {
        sum += state.posterior_at(state.points().at(slot)).std;
    }
    return B_y * sum;
}

/// nu_t = B_y * sum_pending sigma + beta_t.
template <CovarianceKernel K>
double sdf_width(const PosteriorState<K>& state, std::span<const std::size_t> pending_slots,
                 const WidthSchedule& width) {
    return pending_width(state, pending_slots, width.B_y) + width.beta(state.realized_info_gain());
}

/// Index of the maximum, first index on ties.
inline std::size_t argmax_lowest(const Vector& values) {
    if (values.size() == 0) {
        throw std::invalid_argument("argmax over an empty set");
    }
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i) {
        if (values[i] > values[static_cast<Eigen::Index>(best)]) {
            best = static_cast<std::size_t>(i);
        }
    }
    return best;
}

inline std::size_t select_ucb(const Vector& means, const Vector& stds, double nu) {
    if (!(nu >= 0.0)) {
        throw std::invalid_argument("select_ucb: width must be >= 0");
    }
    return argmax_lowest(means + nu * stds);
}

/// argmax over the bound candidate set of mu + nu * sigma.
template <CovarianceKernel K>
std::size_t select_ucb_sdf(const PosteriorState<K>& state, double nu) {
    return select_ucb(state.candidate_means(), state.candidate_stds(), nu);
}

/// argmax of one posterior draw with covariance scaled by nu^2.
template <CovarianceKernel K>
std::size_t select_ts_sdf(const PosteriorState<K>& state, double nu, Rng& rng) {
    return argmax_lowest(state.sample_candidates(nu, rng));
}

/// Baselines.  `completed` holds only revealed queries; `all` holds every
/// selected query (its targets are irrelevant here, only its covariance
/// is read).  Both must be bound to the same candidate set.
template <CovarianceKernel K>
std::size_t select_baseline(Rule rule, const PosteriorState<K>& completed, const PosteriorState<K>& all,
                            double width, Rng& rng) {
    switch (rule) {
        case Rule::UcbIgnore:
            return select_ucb(completed.candidate_means(), completed.candidate_stds(), width);
        case Rule::AsyTs:
            return argmax_lowest(completed.sample_candidates(width, rng));
        case Rule::BucbHallucinate:
            return select_ucb(completed.candidate_means(), all.candidate_stds(), width);
        case Rule::BtsHallucinate: {
            const Matrix l = factor_with_jitter(all.candidate_cov());
            const Vector z = standard_normal(rng, l.rows());
            return argmax_lowest(completed.candidate_means() + width * (l * z));
        }
        default:
            throw std::invalid_argument("select_baseline: not a baseline rule");
    }
}

struct BatchSetup {
    FixedDelay delay;
    long m = 0;
};

/// Batch BO of size B_x as delayed feedback: every delay is B_x - 1 and
/// the window m = B_x - 1 so that nothing is ever censored for good.
inline BatchSetup batch_adapter(long batch_size) {
    if (batch_size < 2) {
        throw std::invalid_argument("batch_adapter: batch size must be >= 2");
    }
    return {FixedDelay{batch_size - 1}, batch_size - 1};
}

}  // namespace bosdf
