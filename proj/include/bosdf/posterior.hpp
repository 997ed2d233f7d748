#pragma once

#include "bosdf/kernel.hpp"
#include "bosdf/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bosdf {

/// Raised when a factorization cannot be completed.  Never swallowed by
/// the library: callers either handle it or abort the run.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PosteriorQuery {
    double mean = 0.0;
    double std = 0.0;
    double variance = 0.0;
};

struct JitterLadder {
    double start = 1e-10;
    double max = 1e-4;
};

/// Cholesky factor of `cov + jitter*I`, escalating jitter x10 per step.
inline Matrix factor_with_jitter(const Matrix& cov, JitterLadder ladder = {}) {
    const Eigen::Index n = cov.rows();
    for (double jitter = ladder.start; jitter <= ladder.max * (1.0 + 1e-9); jitter *= 10.0) {
        Matrix a = cov;
        a.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(a);
        if (llt.info() == Eigen::Success) {
            return llt.matrixL();
        }
    }
    throw NumericalError("covariance factorization failed with jitter up to " +
                         std::to_string(ladder.max) + " (n=" + std::to_string(n) + ")");
}

/// Gaussian log marginal likelihood of `targets` under N(0, K + lambda I).
/// Returns nullopt when the gram matrix cannot be factored.
template <CovarianceKernel K>
std::optional<double> log_marginal_likelihood(const K& kernel, std::span<const Vector> points,
                                              const Vector& targets, double lambda) {
    const Matrix g = gram_matrix(kernel, points, lambda);
    Eigen::LLT<Matrix> llt(g);
    if (llt.info() != Eigen::Success) {
        return std::nullopt;
    }
    const Vector alpha = llt.matrixL().solve(targets);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double n = static_cast<double>(targets.size());
    const double value = -0.5 * alpha.squaredNorm() - 0.5 * logdet -
                         0.5 * n * std::log(2.0 * std::numbers::pi);
    if (!std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

template <CovarianceKernel K>
struct RefitResult {
    K kernel;
    std::size_t index = 0;
    double log_ml = -std::numeric_limits<double>::infinity();
    bool ok = false;  // false: every candidate failed, previous kernel kept
};

/// GP posterior conditioned on every selected query, with targets that the
/// caller keeps censored (0) until the observation is revealed:
///
///   mu(x)      = k(x)^T (K + lambda I)^{-1} y
///   s^2(x, x') = k(x, x') - k(x)^T (K + lambda I)^{-1} k(x')
///
/// The lower Cholesky factor of K + lambda I grows by one row per appended
/// query.  An optional candidate set (the domain, or the current context
/// slice) is tracked with V = L^{-1} K(X, C) so that posterior variances
/// over it cost O(|C|) per append.
///
/// Single writer; const members are safe to call concurrently.
template <CovarianceKernel K>
class PosteriorState {
public:
    static constexpr std::size_t kNoId = std::numeric_limits<std::size_t>::max();

    PosteriorState(K kernel, double lambda, double lambda_floor = 1e-6)
        : kernel_(std::move(kernel)), lambda_(lambda) {
        if (!(lambda_ >= lambda_floor) || !(lambda_ > 0.0)) {
            throw std::invalid_argument("PosteriorState: lambda " + std::to_string(lambda) +
                                        " below floor " + std::to_string(lambda_floor));
        }
    }

    [[nodiscard]] std::size_t size() const { return points_.size(); }
    [[nodiscard]] bool empty() const { return points_.empty(); }
    [[nodiscard]] const K& kernel() const { return kernel_; }
    [[nodiscard]] double lambda() const { return lambda_; }
    [[nodiscard]] const std::vector<Vector>& points() const { return points_; }
    [[nodiscard]] const std::vector<std::size_t>& ids() const { return ids_; }
    [[nodiscard]] Vector targets() const { return targets_.head(n()); }
    [[nodiscard]] double target(std::size_t slot) const { return targets_[checked(slot)]; }

    /// Current factor L with L L^T = K + lambda I.
    [[nodiscard]] Matrix factor() const {
        return chol_.topLeftCorner(n(), n()).template triangularView<Eigen::Lower>();
    }

    /// Adds a query with a censored (0) target.  Returns its slot.
    std::size_t append(const Vector& x, std::size_t id = kNoId) { return append(x, 0.0, id); }

    /// Adds a query with a known target.  Extends the factor by one row;
    /// throws NumericalError (state unchanged) if the new pivot is not
    /// positive.
    std::size_t append(const Vector& x, double target, std::size_t id) {
        const Eigen::Index t = n();
        Vector kx(t);
        for (Eigen::Index i = 0; i < t; ++i) {
            kx[i] = kernel_(points_[static_cast<std::size_t>(i)], x);
        }
        Vector row = kx;
        if (t > 0) {
            chol_.topLeftCorner(t, t).template triangularView<Eigen::Lower>().solveInPlace(row);
        }
        const double pivot_sq = kernel_(x, x) + lambda_ - row.squaredNorm();
        if (!(pivot_sq > std::numeric_limits<double>::min()) || !std::isfinite(pivot_sq)) {
            throw NumericalError("append: factor extension failed at size " + std::to_string(t) +
                                 " (pivot^2=" + std::to_string(pivot_sq) + ", lambda too small?)");
        }
        const double pivot = std::sqrt(pivot_sq);

        reserve(static_cast<std::size_t>(t) + 1);
        chol_.row(t).head(t) = row.transpose();
        chol_(t, t) = pivot;
        targets_[t] = target;

        if (has_candidates()) {
            const auto nc = static_cast<Eigen::Index>(candidates_.size());
            Eigen::RowVectorXd vrow(nc);
            for (Eigen::Index j = 0; j < nc; ++j) {
                vrow[j] = kernel_(x, candidates_[static_cast<std::size_t>(j)]);
            }
            if (t > 0) {
                vrow.noalias() -= row.transpose() * cand_v_.topRows(t);
            }
            vrow /= pivot;
            cand_v_.row(t) = vrow;
            cand_sqnorm_ += vrow.transpose().cwiseAbs2();
        }

        points_.push_back(x);
        ids_.push_back(id);
        return static_cast<std::size_t>(t);
    }

    /// Replaces the target of `slot`.  The factor does not depend on targets.
    void set_target(std::size_t slot, double value) { targets_[checked(slot)] = value; }

    [[nodiscard]] PosteriorQuery posterior_at(const Vector& x) const {
        const double prior = kernel_(x, x);
        if (empty()) {
            return {0.0, std::sqrt(prior), prior};
        }
        Vector v(n());
        for (Eigen::Index i = 0; i < n(); ++i) {
            v[i] = kernel_(points_[static_cast<std::size_t>(i)], x);
        }
        lower().solveInPlace(v);
        const double mean = v.dot(weights());
        const double var = std::max(0.0, prior - v.squaredNorm());
        return {mean, std::sqrt(var), var};
    }

    /// Full posterior covariance over `xs` (no lambda on the diagonal).
    [[nodiscard]] Matrix posterior_cross_cov(std::span<const Vector> xs) const {
        Matrix cov = cross_gram(kernel_, xs, xs);
        if (!empty()) {
            Matrix v = cross_gram(kernel_, std::span<const Vector>(points_), xs);
            lower().solveInPlace(v);
            cov.noalias() -= v.transpose() * v;
        }
        return symmetrize(std::move(cov));
    }

    /// 1/2 log det(I + K / lambda) of the queries selected so far.
    [[nodiscard]] double realized_info_gain() const {
        if (empty()) {
            return 0.0;
        }
        const double logdet_half = chol_.diagonal().head(n()).array().log().sum();
        return std::max(0.0, logdet_half - 0.5 * static_cast<double>(n()) * std::log(lambda_));
    }

    /// Replaces the kernel and rebuilds the factor (and candidate cache)
    /// from scratch.  Targets are untouched.
    void set_kernel(K kernel) {
        const Matrix g = gram_matrix(kernel, std::span<const Vector>(points_), lambda_);
        Eigen::LLT<Matrix> llt(g);
        if (!empty() && llt.info() != Eigen::Success) {
            throw NumericalError("set_kernel: gram matrix not positive definite");
        }
        kernel_ = std::move(kernel);
        if (!empty()) {
            chol_.topLeftCorner(n(), n()) = llt.matrixL();
        }
        rebuild_candidates();
    }

    /// Picks the candidate kernel with the highest log marginal likelihood
    /// on the current (points, targets), ties to the first in order, and
    /// installs it.  Only the trailing `window` queries enter the
    /// likelihood when window > 0.
    RefitResult<K> refit_hyperparameters(std::span<const K> candidates, std::size_t window = 0) {
        if (empty()) {
            throw std::invalid_argument("refit_hyperparameters: state is empty");
        }
        if (candidates.empty()) {
            throw std::invalid_argument("refit_hyperparameters: no candidates");
        }
        const std::size_t first = (window > 0 && window < size()) ? size() - window : 0;
        const std::span<const Vector> pts(points_.data() + first, size() - first);
        const Vector y = targets_.segment(static_cast<Eigen::Index>(first),
                                          static_cast<Eigen::Index>(size() - first));
        RefitResult<K> best{kernel_, 0, -std::numeric_limits<double>::infinity(), false};
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto ll = log_marginal_likelihood(candidates[i], pts, y, lambda_);
            if (ll && (!best.ok || *ll > best.log_ml)) {
                best = {candidates[i], i, *ll, true};
            }
        }
        if (best.ok && !(best.kernel == kernel_)) {
            set_kernel(best.kernel);
        }
        return best;
    }

    // -- candidate set ----------------------------------------------------

    /// Tracks posterior quantities over `pts` from now on.  Rebinding to a
    /// new set costs one triangular solve against the current factor.
    void bind_candidates(std::vector<Vector> pts) {
        candidates_ = std::move(pts);
        rebuild_candidates();
    }

    [[nodiscard]] bool has_candidates() const { return !candidates_.empty(); }
    [[nodiscard]] const std::vector<Vector>& candidates() const { return candidates_; }

    [[nodiscard]] Vector candidate_means() const {
        require_candidates();
        if (empty()) {
            return Vector::Zero(static_cast<Eigen::Index>(candidates_.size()));
        }
        return cand_v_.topRows(n()).transpose() * weights();
    }

    [[nodiscard]] Vector candidate_variances() const {
        require_candidates();
        return (cand_prior_ - cand_sqnorm_).cwiseMax(0.0);
    }

    [[nodiscard]] Vector candidate_stds() const { return candidate_variances().cwiseSqrt(); }

    [[nodiscard]] Matrix candidate_cov() const {
        require_candidates();
        if (!cand_gram_) {
            cand_gram_ = cross_gram(kernel_, std::span<const Vector>(candidates_),
                                    std::span<const Vector>(candidates_));
        }
        Matrix cov = *cand_gram_;
        if (!empty()) {
            // lower triangle only, then mirrored
            cov.template selfadjointView<Eigen::Lower>().rankUpdate(cand_v_.topRows(n()).transpose(), -1.0);
            return Matrix(cov.template selfadjointView<Eigen::Lower>());
        }
        return cov;
    }

    /// One joint draw from N(mu, scale^2 Sigma) over the candidate set.
    [[nodiscard]] Vector sample_candidates(double scale, Rng& rng, JitterLadder ladder = {}) const {
        if (!(scale > 0.0)) {
            throw std::invalid_argument("sample_candidates: scale must be positive");
        }
        const Matrix l = factor_with_jitter(candidate_cov(), ladder);
        const Vector z = standard_normal(rng, l.rows());
        return candidate_means() + scale * (l * z);
    }

private:
    [[nodiscard]] Eigen::Index n() const { return static_cast<Eigen::Index>(points_.size()); }

    [[nodiscard]] auto lower() const {
        return chol_.topLeftCorner(n(), n()).template triangularView<Eigen::Lower>();
    }

    /// L^{-1} y, recomputed from the current targets.
    [[nodiscard]] Vector weights() const { return lower().solve(targets_.head(n())); }

    [[nodiscard]] Eigen::Index checked(std::size_t slot) const {
        if (slot >= size()) {
            throw std::out_of_range("slot " + std::to_string(slot) + " out of range (size " +
                                    std::to_string(size()) + ")");
        }
        return static_cast<Eigen::Index>(slot);
    }

    void require_candidates() const {
        if (!has_candidates()) {
            throw std::logic_error("no candidate set bound");
        }
    }

    void reserve(std::size_t need) {
        const auto cap = static_cast<std::size_t>(chol_.rows());
        if (need <= cap) {
            return;
        }
        const std::size_t next = std::max<std::size_t>(16, std::max(need, cap * 2));
        const auto ni = static_cast<Eigen::Index>(next);
        chol_.conservativeResize(ni, ni);
        targets_.conservativeResize(ni);
        if (has_candidates()) {
            cand_v_.conservativeResize(ni, cand_v_.cols());
        }
    }

    void rebuild_candidates() {
        const auto nc = static_cast<Eigen::Index>(candidates_.size());
        cand_prior_.resize(nc);
        for (Eigen::Index j = 0; j < nc; ++j) {
            cand_prior_[j] = kernel_.diag(candidates_[static_cast<std::size_t>(j)]);
        }
        cand_v_.resize(chol_.rows(), nc);
        cand_sqnorm_ = Vector::Zero(nc);
        cand_gram_.reset();
        if (empty() || nc == 0) {
            return;
        }
        Matrix v = cross_gram(kernel_, std::span<const Vector>(points_),
                              std::span<const Vector>(candidates_));
        lower().solveInPlace(v);
        cand_v_.topRows(n()) = v;
        cand_sqnorm_ = v.colwise().squaredNorm().transpose();
    }

    static Matrix symmetrize(Matrix m) {
        const Matrix t = m.transpose();
        m = 0.5 * (m + t);
        return m;
    }

    K kernel_;
    double lambda_;
    std::vector<Vector> points_;
    std::vector<std::size_t> ids_;
    Matrix chol_;
    Vector targets_;

    std::vector<Vector> candidates_;
    Vector cand_prior_;
    Matrix cand_v_;
    Vector cand_sqnorm_;
    mutable std::optional<Matrix> cand_gram_;  // prior gram over candidates, built on first use
};

/// One joint draw from N(mu, scale^2 Sigma) over arbitrary points.
template <CovarianceKernel K>
Vector sample_function(const PosteriorState<K>& state, std::span<const Vector> points, double scale,
                       std::uint64_t seed, JitterLadder ladder = {}) {
    if (!(scale > 0.0)) {
        throw std::invalid_argument("sample_function: scale must be positive");
    }
    const Matrix l = factor_with_jitter(state.posterior_cross_cov(points), ladder);
    Vector mean(static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        mean[static_cast<Eigen::Index>(i)] = state.posterior_at(points[i]).mean;
    }
    Rng rng = make_rng(seed, Stream::Sampling);
    const Vector z = standard_normal(rng, l.rows());
    return mean + scale * (l * z);
}

/// Builds the kernel list for a (lengthscale x variance) grid, lengthscale
/// varying slowest.
inline std::vector<SqExpKernel> se_candidate_grid(std::span<const double> lengthscales,
                                                  std::span<const double> variances) {
    std::vector<SqExpKernel> out;
    for (double l : lengthscales) {
        for (double v : variances) {
            out.emplace_back(l, v);
        }
    }
    return out;
}

/// Product-kernel grid: context lengthscale slowest, then query
/// lengthscale, then query variance.  The context kernel keeps unit
/// variance so that a single-context problem reduces exactly to the
/// query kernel.
inline std::vector<ProductKernel> product_candidate_grid(std::span<const double> context_lengthscales,
                                                         std::span<const double> lengthscales,
                                                         std::span<const double> variances,
                                                         Eigen::Index context_dim) {
    std::vector<ProductKernel> out;
    for (double lz : context_lengthscales) {
        for (double l : lengthscales) {
            for (double v : variances) {
                out.emplace_back(SqExpKernel(lz, 1.0), SqExpKernel(l, v), context_dim);
            }
        }
    }
    return out;
}

/// Log-spaced values from lo to hi inclusive.
inline std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
    if (count == 0 || !(lo > 0.0) || !(hi >= lo)) {
        throw std::invalid_argument("log_spaced: need count >= 1 and 0 < lo <= hi");
    }
    std::vector<double> out;
    if (count == 1) {
        out.push_back(lo);
        return out;
    }
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1)));
    }
    return out;
}

}  // namespace bosdf
