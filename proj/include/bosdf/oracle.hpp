#pragma once

// Brute-force references for the test suites and the `verify` command.
// Nothing here reuses the incremental factorization in posterior.hpp.

#include "bosdf/kernel.hpp"
#include "bosdf/ledger.hpp"
#include "bosdf/policies.hpp"
#include "bosdf/posterior.hpp"
#include "bosdf/rng.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace bosdf::oracle {

struct DensePosterior {
    double mean = 0.0;
    double variance = 0.0;
};

/// Posterior mean and variance at x from a fresh solve of (K + lambda I).
template <CovarianceKernel K>
DensePosterior dense_posterior(std::span<const Vector> points, const Vector& targets, const K& kernel, double lambda,
                               const Vector& x) {
    if (static_cast<std::size_t>(targets.size()) != points.size()) {
        throw std::invalid_argument("dense_posterior: targets and points differ in length");
    }
    const double prior = kernel(x, x);
    if (points.empty()) {
        return {0.0, prior};
    }
    const auto n = static_cast<Eigen::Index>(points.size());
    Matrix a(n, n);
    Vector k(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            a(i, j) = kernel(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]);
        }
        a(i, i) += lambda;
        k[i] = kernel(points[static_cast<std::size_t>(i)], x);
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    if (qr.rank() < n) {
        throw std::runtime_error("dense_posterior: singular system");
    }
    const Vector alpha = qr.solve(targets);
    const Vector beta = qr.solve(k);
    return {k.dot(alpha), prior - k.dot(beta)};
}

/// P(X <= m) for X ~ Poisson(mean), summing pmf terms k = 0..m in
/// increasing order with each term computed in log space.
inline double poisson_cdf(double mean, long m) {
    if (mean < 0.0 || m < 0) {
        throw std::invalid_argument("poisson_cdf: need mean >= 0 and m >= 0");
    }
    if (mean == 0.0) return 1.0;
    double sum = 0.0;
    for (long k = 0; k <= m; ++k) {
        sum += std::exp(static_cast<double>(k) * std::log(mean) - mean - std::lgamma(static_cast<double>(k) + 1.0));
    }
    return std::min(1.0, sum);
}

/// P(X > m), summed from the far tail downwards.  A second route to the
/// CDF: poisson_cdf(mean, m) ~= 1 - poisson_upper_tail(mean, m).
inline double poisson_upper_tail(double mean, long m) {
    if (mean == 0.0) return 0.0;
    const long hi = m + 1 + static_cast<long>(std::ceil(mean + 40.0 * std::sqrt(mean) + 50.0));
    double sum = 0.0;
    for (long k = hi; k > m; --k) {
        sum += std::exp(static_cast<double>(k) * std::log(mean) - mean - std::lgamma(static_cast<double>(k) + 1.0));
    }
    return sum;
}

/// |mu - rho f| > nu sigma.
inline bool ellipsoid_violated(double mean, double rho, double f, double nu, double sigma) {
    return std::abs(mean - rho * f) > nu * sigma;
}

struct CoverageConfig {
    std::size_t grid_size = 30;
    long horizon = 40;
    double delay_mean = 3.0;
    long m = 6;
    double delta = 0.1;
    double B_f = 1.0;
    double B_y = 1.0;
    double R = 0.05;
    double lengthscale = 0.2;
    std::size_t centers = 5;  // support points of the random RKHS function
    double f_scale = 1.0;     // multiplies f after construction
    std::uint64_t seed = 0;
};

struct CoverageReport {
    std::size_t trials = 0;
    std::size_t checked = 0;
    std::size_t violations = 0;
    [[nodiscard]] double coverage() const {
        return checked == 0 ? 1.0 : 1.0 - static_cast<double>(violations) / static_cast<double>(checked);
    }
};

/// Random f = sum_j a_j k(., c_j) over the grid with RKHS norm B_f.
inline Vector random_rkhs_function(const SqExpKernel& kernel, const Domain& domain, std::size_t centers, double norm,
                                   Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, domain.size() - 1);
    std::vector<Vector> c;
    for (std::size_t j = 0; j < centers; ++j) c.push_back(domain[pick(rng)]);
    const Vector a = standard_normal(rng, static_cast<Eigen::Index>(centers));
    const Matrix kc = cross_gram(kernel, std::span<const Vector>(c), std::span<const Vector>(c));
    const double current = std::sqrt(std::max(a.dot(kc * a), 1e-300));
    const Matrix kd = cross_gram(kernel, std::span<const Vector>(domain.points()), std::span<const Vector>(c));
    return kd * a * (norm / current);
}

/// Monte Carlo check of the confidence ellipsoid |mu - rho_m f| <= nu sigma
/// along GP-UCB-SDF trajectories with the theoretical width.  Every (t, x)
/// pair of every trial is checked.  When `f_override` is non-empty it
/// replaces the random function in every trial.
inline CoverageReport coverage_test(const CoverageConfig& cfg, std::size_t trials, const Vector& f_override = {}) {
    const Domain domain = grid_domain(0.0, 1.0, cfg.grid_size);
    const SqExpKernel kernel(cfg.lengthscale);
    const double lambda = 1.0 + 2.0 / static_cast<double>(cfg.horizon);
    const double rho = poisson_cdf(cfg.delay_mean, cfg.m);
    WidthSchedule width;
    width.mode = WidthSchedule::Mode::Theoretical;
    width.B_f = cfg.B_f;
    width.B_y = cfg.B_y;
    width.R = cfg.R;
    width.delta = cfg.delta;

    CoverageReport report;
    report.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = make_rng(cfg.seed, Stream::Test, trial);
        Vector f = f_override.size() > 0 ? f_override
                                         : random_rkhs_function(kernel, domain, cfg.centers, cfg.B_f, rng);
        f *= cfg.f_scale;

        PosteriorState<SqExpKernel> state(kernel, lambda);
        state.bind_candidates(domain.points());
        Ledger ledger(static_cast<double>(cfg.m));
        std::poisson_distribution<long> delay(cfg.delay_mean > 0 ? cfg.delay_mean : 1.0);
        std::normal_distribution<double> noise(0.0, cfg.R > 0 ? cfg.R : 1.0);

        for (long t = 1; t <= cfg.horizon; ++t) {
            for (const auto& r : ledger.advance(t)) state.set_target(r.slot, r.observation);
            std::vector<std::size_t> pending;
            for (const auto& e : ledger.pending()) pending.push_back(e.slot);
            const double nu = sdf_width(state, pending, width);

            const Vector mu = state.candidate_means();
            const Vector sd = state.candidate_stds();
            for (Eigen::Index i = 0; i < mu.size(); ++i) {
                ++report.checked;
                if (ellipsoid_violated(mu[i], rho, f[i], nu, sd[i])) ++report.violations;
            }

            const std::size_t x = select_ucb(mu, sd, nu);
            const std::size_t slot = state.append(domain[x], x);
            double y = f[static_cast<Eigen::Index>(x)] + (cfg.R > 0 ? noise(rng) : 0.0);
            y = std::clamp(y, -cfg.B_y, cfg.B_y);
            const double d = cfg.delay_mean > 0 ? static_cast<double>(delay(rng)) : 0.0;
            ledger.enqueue({slot, x, static_cast<double>(t), d, y});
        }
    }
    return report;
}

struct SublinearityVerdict {
    bool pass = false;
    double second_quarter = 0.0;  // mean of R_t / t over the second quarter
    double final_quarter = 0.0;   // mean of R_t / t over the final quarter
    double asymptote = 0.0;       // a in R_t / t ~ a + b / sqrt(t), fitted on the last half
};

/// Empirical sub-linearity of a cumulative-regret series (t = 1..n).
/// Passes iff the average regret rate R_t/t over the final quarter is
/// below that over the second quarter AND the extrapolated rate from a
/// least-squares fit a + b/sqrt(t) on the last half is under half of the
/// final-quarter rate.  The second condition rejects linear regret with a
/// decaying transient such as 0.5 t + sqrt(t).
inline SublinearityVerdict sublinearity_check(std::span<const double> cumulative) {
    const std::size_t n = cumulative.size();
    if (n < 40) {
        throw std::invalid_argument("sublinearity_check: need at least 40 iterations");
    }
    auto rate = [&](std::size_t i) { return cumulative[i] / static_cast<double>(i + 1); };
    auto window_mean = [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += rate(i);
        return s / static_cast<double>(hi - lo);
    };
    SublinearityVerdict v;
    v.second_quarter = window_mean(n / 4, n / 2);
    v.final_quarter = window_mean(3 * n / 4, n);

    const std::size_t lo = n / 2;
    Matrix a(static_cast<Eigen::Index>(n - lo), 2);
    Vector b(static_cast<Eigen::Index>(n - lo));
    for (std::size_t i = lo; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i - lo);
        a(r, 0) = 1.0;
        a(r, 1) = 1.0 / std::sqrt(static_cast<double>(i + 1));
        b[r] = rate(i);
    }
    const Vector coef = a.colPivHouseholderQr().solve(b);
    v.asymptote = coef[0];
    v.pass = v.final_quarter < v.second_quarter && v.asymptote < 0.5 * v.final_quarter;
    return v;
}

}  // namespace bosdf::oracle
