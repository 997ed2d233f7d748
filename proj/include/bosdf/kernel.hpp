#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bosdf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Squared-exponential kernel with per-dimension (ARD) lengthscales.
///
///   k(x, x') = variance * exp(-0.5 * sum_i ((x_i - x'_i) / l_i)^2)
///
/// A single lengthscale is broadcast to every dimension, so an isotropic
/// kernel can be evaluated on inputs of any dimension.
class SqExpKernel {
public:
    SqExpKernel() : SqExpKernel(1.0) {}

    explicit SqExpKernel(double lengthscale, double variance = 1.0)
        : SqExpKernel(std::vector<double>{lengthscale}, variance) {}

    SqExpKernel(std::vector<double> lengthscales, double variance)
        : lengthscales_(std::move(lengthscales)), variance_(variance) {
        if (lengthscales_.empty()) {
            throw std::invalid_argument("SqExpKernel: at least one lengthscale required");
        }
        for (double l : lengthscales_) {
            if (!(l > 0.0) || !std::isfinite(l)) {
                throw std::invalid_argument("SqExpKernel: lengthscales must be positive");
            }
        }
        if (!(variance_ > 0.0) || !std::isfinite(variance_)) {
            throw std::invalid_argument("SqExpKernel: variance must be positive");
        }
    }

    [[nodiscard]] double operator()(const Vector& a, const Vector& b) const {
        if (a.size() != b.size()) {
            throw std::invalid_argument("SqExpKernel: input dimension mismatch (" +
                                        std::to_string(a.size()) + " vs " +
                                        std::to_string(b.size()) + ")");
        }
        const bool iso = lengthscales_.size() == 1;
        if (!iso && static_cast<std::size_t>(a.size()) != lengthscales_.size()) {
            throw std::invalid_argument("SqExpKernel: input dimension does not match lengthscales");
        }
        double sq = 0.0;
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            const double l = iso ? lengthscales_[0] : lengthscales_[static_cast<std::size_t>(i)];
            const double d = (a[i] - b[i]) / l;
            sq += d * d;
        }
        return variance_ * std::exp(-0.5 * sq);
    }

    /// Prior variance k(x, x); constant for a stationary kernel.
    [[nodiscard]] double diag(const Vector& /*x*/) const { return variance_; }

    [[nodiscard]] double variance() const { return variance_; }
    [[nodiscard]] const std::vector<double>& lengthscales() const { return lengthscales_; }

    /// Same kernel with an isotropic lengthscale and a new variance.
    [[nodiscard]] SqExpKernel with(double lengthscale, double variance) const {
        return SqExpKernel(lengthscale, variance);
    }

    friend bool operator==(const SqExpKernel&, const SqExpKernel&) = default;

private:
    std::vector<double> lengthscales_;
    double variance_;
};

/// Separable kernel over joint (context, query) inputs.  Joint inputs are
/// stored as one concatenated vector [z; x] whose first `context_dim`
/// entries hold the context.
class ProductKernel {
public:
    ProductKernel(SqExpKernel context_kernel, SqExpKernel query_kernel, Eigen::Index context_dim)
        : context_(std::move(context_kernel)), query_(std::move(query_kernel)), context_dim_(context_dim) {
        if (context_dim_ < 1) {
            throw std::invalid_argument("ProductKernel: context dimension must be >= 1");
        }
    }

    [[nodiscard]] double operator()(const Vector& a, const Vector& b) const {
        if (a.size() != b.size() || a.size() <= context_dim_) {
            throw std::invalid_argument("ProductKernel: joint input dimension mismatch");
        }
        const Eigen::Index qd = a.size() - context_dim_;
        return context_(a.head(context_dim_), b.head(context_dim_)) *
               query_(a.tail(qd), b.tail(qd));
    }

    [[nodiscard]] double diag(const Vector& /*x*/) const { return context_.variance() * query_.variance(); }

    [[nodiscard]] const SqExpKernel& context_kernel() const { return context_; }
    [[nodiscard]] const SqExpKernel& query_kernel() const { return query_; }
    [[nodiscard]] Eigen::Index context_dim() const { return context_dim_; }

    friend bool operator==(const ProductKernel&, const ProductKernel&) = default;

private:
    SqExpKernel context_;
    SqExpKernel query_;
    Eigen::Index context_dim_;
};

/// Anything usable as a covariance function by the posterior.
template <typename K>
concept CovarianceKernel = requires(const K& k, const Vector& x) {
    { k(x, x) } -> std::convertible_to<double>;
    { k.diag(x) } -> std::convertible_to<double>;
};

/// Joint input [z; x].
inline Vector join_input(const Vector& context, const Vector& query) {
    Vector out(context.size() + query.size());
    out << context, query;
    return out;
}

/// Finite, duplicate-free set of points of a common dimension.  Point ids
/// are positions in the construction order and never change.
class Domain {
public:
    explicit Domain(std::vector<Vector> points) : points_(std::move(points)) {
        if (points_.empty()) {
            throw std::invalid_argument("Domain: must contain at least one point");
        }
        dim_ = points_.front().size();
        std::map<std::vector<double>, std::size_t> seen;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (points_[i].size() != dim_) {
                throw std::invalid_argument("Domain: point " + std::to_string(i) +
                                            " has inconsistent dimension");
            }
            std::vector<double> key(points_[i].data(), points_[i].data() + dim_);
            auto [it, inserted] = seen.emplace(std::move(key), i);
            if (!inserted) {
                throw std::invalid_argument("Domain: point " + std::to_string(i) +
                                            " duplicates point " + std::to_string(it->second));
            }
        }
    }

    [[nodiscard]] std::size_t size() const { return points_.size(); }
    [[nodiscard]] Eigen::Index dim() const { return dim_; }
    [[nodiscard]] const Vector& operator[](std::size_t id) const { return points_.at(id); }
    [[nodiscard]] const std::vector<Vector>& points() const { return points_; }

private:
    std::vector<Vector> points_;
    Eigen::Index dim_ = 0;
};

/// Equally spaced 1-D grid over [lo, hi], endpoints included.
inline Domain grid_domain(double lo, double hi, std::size_t size) {
    if (size < 2) {
        throw std::invalid_argument("grid_domain: size must be >= 2");
    }
    if (!(lo < hi)) {
        throw std::invalid_argument("grid_domain: lo must be < hi");
    }
    std::vector<Vector> pts;
    pts.reserve(size);
    const double step = (hi - lo) / static_cast<double>(size - 1);
    for (std::size_t i = 0; i < size; ++i) {
        Vector p(1);
        p[0] = (i + 1 == size) ? hi : lo + step * static_cast<double>(i);
        pts.push_back(std::move(p));
    }
    return Domain(std::move(pts));
}

/// Cartesian product of per-axis equally spaced grids (first axis slowest).
inline Domain product_grid(std::span<const std::pair<double, double>> ranges,
                           std::span<const std::size_t> sizes) {
    if (ranges.size() != sizes.size() || ranges.empty()) {
        throw std::invalid_argument("product_grid: ranges and sizes must match and be non-empty");
    }
    std::vector<Domain> axes;
    for (std::size_t d = 0; d < ranges.size(); ++d) {
        axes.push_back(grid_domain(ranges[d].first, ranges[d].second, sizes[d]));
    }
    std::vector<Vector> pts{Vector(0)};
    for (const auto& axis : axes) {
        std::vector<Vector> next;
        next.reserve(pts.size() * axis.size());
        for (const auto& p : pts) {
            for (const auto& a : axis.points()) {
                next.push_back(join_input(p, a));
            }
        }
        pts = std::move(next);
    }
    return Domain(std::move(pts));
}

/// Cross-covariance matrix k(a_i, b_j).
template <CovarianceKernel K>
Matrix cross_gram(const K& kernel, std::span<const Vector> a, std::span<const Vector> b) {
    Matrix out(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel(a[i], b[j]);
        }
    }
    return out;
}

/// K + lambda I over `points`.
template <CovarianceKernel K>
Matrix gram_matrix(const K& kernel, std::span<const Vector> points, double lambda) {
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("gram_matrix: lambda must be positive");
    }
    const auto n = static_cast<Eigen::Index>(points.size());
    Matrix g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = kernel(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]);
            g(i, j) = v;
            g(j, i) = v;
        }
        g(i, i) += lambda;
    }
    return g;
}

}  // namespace bosdf
