#include "bosdf/kernel.hpp"
#include "bosdf/rng.hpp"

#include <gtest/gtest.h>

#include <Eigen/Cholesky>

#include <cmath>
#include <random>
#include <vector>

using namespace bosdf;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

Vector v2(double a, double b) {
    Vector out(2);
    out << a, b;
    return out;
}

}  // namespace

TEST(SqExpKernel, IdenticalInputsGiveVariance) {
    const SqExpKernel k(0.2);
    EXPECT_EQ(k(v1(0.3), v1(0.3)), 1.0);
    EXPECT_EQ(SqExpKernel(0.2, 2.5)(v1(0.3), v1(0.3)), 2.5);
}

TEST(SqExpKernel, OneLengthscaleApartIsExpMinusHalf) {
    // exp(-0.5), evaluated independently
    EXPECT_NEAR(SqExpKernel(0.2)(v1(0.0), v1(0.2)), 0.60653065971263342, 1e-15);
}

TEST(SqExpKernel, ArdLengthscalesScalePerDimension) {
    const SqExpKernel k(std::vector<double>{0.1, 1.0}, 1.0);
    // (0.1/0.1)^2 + (0.5/1)^2 = 1.25
    EXPECT_NEAR(k(v2(0, 0), v2(0.1, 0.5)), std::exp(-0.625), 1e-15);
    EXPECT_THROW(k(Vector::Zero(3), Vector::Zero(3)), std::invalid_argument);
}

TEST(SqExpKernel, RejectsBadParametersAndDimensions) {
    EXPECT_THROW(SqExpKernel(0.0), std::invalid_argument);
    EXPECT_THROW(SqExpKernel(-1.0), std::invalid_argument);
    EXPECT_THROW(SqExpKernel(1.0, 0.0), std::invalid_argument);
    EXPECT_THROW(SqExpKernel(std::vector<double>{}, 1.0), std::invalid_argument);
    EXPECT_THROW(SqExpKernel(0.2)(v1(0), v2(0, 0)), std::invalid_argument);
}

TEST(ProductKernel, IdenticalJointInputIsOne) {
    const ProductKernel k(SqExpKernel(0.5), SqExpKernel(0.2), 2);
    const Vector zx = join_input(v2(0.1, -0.4), v1(0.7));
    EXPECT_EQ(k(zx, zx), 1.0);
    EXPECT_EQ(k.diag(zx), 1.0);
}

TEST(ProductKernel, RejectsMismatchedJointDimension) {
    const ProductKernel k(SqExpKernel(0.5), SqExpKernel(0.2), 2);
    EXPECT_THROW(k(v2(0, 0), v2(0, 0)), std::invalid_argument);  // no query part
    EXPECT_THROW(ProductKernel(SqExpKernel(1.0), SqExpKernel(1.0), 0), std::invalid_argument);
}

TEST(GramMatrix, SinglePoint) {
    const std::vector<Vector> pts{v1(0.4)};
    const Matrix g = gram_matrix(SqExpKernel(1.0), std::span<const Vector>(pts), 1.0);
    ASSERT_EQ(g.rows(), 1);
    EXPECT_EQ(g(0, 0), 2.0);
}

TEST(GramMatrix, TwoIdenticalPoints) {
    const std::vector<Vector> pts{v1(0.4), v1(0.4)};
    const Matrix g = gram_matrix(SqExpKernel(1.0), std::span<const Vector>(pts), 1.0);
    Matrix expected(2, 2);
    expected << 2, 1, 1, 2;
    EXPECT_EQ(g, expected);
}

TEST(GramMatrix, TwoPointsOneLengthscaleApart) {
    const std::vector<Vector> pts{v1(0.0), v1(0.2)};
    const Matrix g = gram_matrix(SqExpKernel(0.2), std::span<const Vector>(pts), 1.0);
    EXPECT_EQ(g(0, 0), 2.0);
    EXPECT_EQ(g(1, 1), 2.0);
    EXPECT_NEAR(g(0, 1), 0.60653065971263342, 1e-15);
    EXPECT_EQ(g(0, 1), g(1, 0));
}

TEST(GramMatrix, RejectsNonPositiveLambda) {
    const std::vector<Vector> pts{v1(0.0)};
    EXPECT_THROW(gram_matrix(SqExpKernel(1.0), std::span<const Vector>(pts), 0.0), std::invalid_argument);
    EXPECT_THROW(gram_matrix(SqExpKernel(1.0), std::span<const Vector>(pts), -1.0), std::invalid_argument);
}

TEST(GridDomain, UnitIntervalThousandPoints) {
    const Domain d = grid_domain(0.0, 1.0, 1000);
    EXPECT_EQ(d.size(), 1000u);
    EXPECT_EQ(d[0][0], 0.0);
    EXPECT_EQ(d[999][0], 1.0);
}

TEST(GridDomain, EndpointsAndMidpoint) {
    const Domain two = grid_domain(0.0, 1.0, 2);
    ASSERT_EQ(two.size(), 2u);
    EXPECT_EQ(two[0][0], 0.0);
    EXPECT_EQ(two[1][0], 1.0);
    const Domain three = grid_domain(0.0, 1.0, 3);
    ASSERT_EQ(three.size(), 3u);
    EXPECT_EQ(three[1][0], 0.5);
    EXPECT_EQ(three[2][0], 1.0);
}

TEST(GridDomain, RejectsDegenerateInput) {
    EXPECT_THROW(grid_domain(0.0, 1.0, 1), std::invalid_argument);
    EXPECT_THROW(grid_domain(0.0, 1.0, 0), std::invalid_argument);
    EXPECT_THROW(grid_domain(1.0, 1.0, 5), std::invalid_argument);
    EXPECT_THROW(grid_domain(2.0, 1.0, 5), std::invalid_argument);
}

TEST(Domain, RejectsEmptyDuplicatesAndMixedDimensions) {
    EXPECT_THROW(Domain(std::vector<Vector>{}), std::invalid_argument);
    EXPECT_THROW(Domain(std::vector<Vector>{v1(0.1), v1(0.2), v1(0.1)}), std::invalid_argument);
    EXPECT_THROW(Domain(std::vector<Vector>{v1(0.1), v2(0.1, 0.2)}), std::invalid_argument);
    EXPECT_THROW(Domain(std::vector<Vector>{v1(0.1)})[1], std::out_of_range);
}

TEST(ProductGrid, FirstAxisVariesSlowest) {
    const std::vector<std::pair<double, double>> ranges{{0.0, 1.0}, {0.0, 2.0}};
    const std::vector<std::size_t> sizes{2, 3};
    const Domain d = product_grid(ranges, sizes);
    ASSERT_EQ(d.size(), 6u);
    EXPECT_EQ(d.dim(), 2);
    EXPECT_EQ(d[0], v2(0, 0));
    EXPECT_EQ(d[1], v2(0, 1));
    EXPECT_EQ(d[2], v2(0, 2));
    EXPECT_EQ(d[3], v2(1, 0));
    EXPECT_EQ(d[5], v2(1, 2));
}

// -- properties ---------------------------------------------------------------

TEST(KernelProperty, SymmetricAndBoundedByVarianceOnRandomPairs) {
    Rng rng = make_rng(1, Stream::Test);
    std::uniform_real_distribution<double> u(-2.0, 2.0), ls(0.01, 3.0), var(0.1, 4.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const SqExpKernel k(std::vector<double>{ls(rng), ls(rng), ls(rng)}, var(rng));
        const Vector a = Vector::NullaryExpr(3, [&] { return u(rng); });
        const Vector b = Vector::NullaryExpr(3, [&] { return u(rng); });
        EXPECT_EQ(k(a, b), k(b, a));
        EXPECT_LE(k(a, b), k.variance());
        EXPECT_GE(k(a, b), 0.0);
    }
}

TEST(KernelProperty, GramOfDistinctPointsIsPositiveDefinite) {
    Rng rng = make_rng(2, Stream::Test);
    std::uniform_real_distribution<double> u(0.0, 1.0), ls(0.02, 2.0);
    std::uniform_int_distribution<int> size(1, 50), dim(1, 3);
    const double lambdas[] = {1e-6, 1e-3, 1.0, 1.0 + 2.0 / 150.0};
    for (int trial = 0; trial < 200; ++trial) {
        const int d = dim(rng);
        std::vector<Vector> pts;
        for (int i = size(rng); i > 0; --i) pts.push_back(Vector::NullaryExpr(d, [&] { return u(rng); }));
        const Domain unique(pts);  // duplicates would throw
        const SqExpKernel k(ls(rng));
        for (double lambda : lambdas) {
            const Matrix g = gram_matrix(k, std::span<const Vector>(unique.points()), lambda);
            EXPECT_EQ(g, g.transpose());
            EXPECT_EQ(Eigen::LLT<Matrix>(g).info(), Eigen::Success) << "trial " << trial << " lambda " << lambda;
        }
    }
}

TEST(KernelProperty, ProductKernelFactorizesExactly) {
    Rng rng = make_rng(3, Stream::Test);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const SqExpKernel kz(std::vector<double>{0.7, 1.3}, 1.0);
    const SqExpKernel kx(0.25, 1.7);
    const ProductKernel k(kz, kx, 2);
    for (int trial = 0; trial < 1000; ++trial) {
        const Vector z1 = Vector::NullaryExpr(2, [&] { return u(rng); });
        const Vector z2 = Vector::NullaryExpr(2, [&] { return u(rng); });
        const Vector x1 = Vector::NullaryExpr(3, [&] { return u(rng); });
        const Vector x2 = Vector::NullaryExpr(3, [&] { return u(rng); });
        EXPECT_EQ(k(join_input(z1, x1), join_input(z2, x2)) - kz(z1, z2) * kx(x1, x2), 0.0);
    }
}
