#include <filesystem>

#include <gtest/gtest.h>

#include "vie/kernel.hpp"
#include "vie/oracles.hpp"

using namespace vie;

TEST(ScalarGreen, ClosedForm)
{
    const double k0 = 2.0, R = 0.7;
    const cplx g = scalar_green(R, k0);
    EXPECT_NEAR(std::abs(g - std::exp(cplx(0.0, -k0 * R)) / (4.0 * kPi * R)), 0.0, 1e-15);
    EXPECT_THROW(scalar_green(0.0, k0), DomainError);
}

TEST(DyadicGreen, MatchesFiniteDifferenceHessian)
{
    const double k0 = 1.3;
    const Vec3 r{0.8, -0.5, 0.3};
    const double h = 1e-3;
    auto g = [&](double x, double y, double z) { return scalar_green(std::sqrt(x * x + y * y + z * z), k0); };
    const Matrix3c G = dyadic_green(r, k0);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            auto at = [&](int sa, int sb) {
                Vec3 p = r;
                p[a] += sa * h;
                p[b] += sb * h;
                return g(p[0], p[1], p[2]);
            };
            const cplx hess = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
            const cplx expect = hess + (a == b ? k0 * k0 * g(r[0], r[1], r[2]) : cplx(0.0));
            EXPECT_NEAR(std::abs(G(a, b) - expect), 0.0, 1e-5 * G.cwiseAbs().maxCoeff()) << a << b;
        }
}

TEST(DyadicGreen, SymmetricAndEven)
{
    const Vec3 r{0.4, 1.1, -0.9};
    const Matrix3c G = dyadic_green(r, 0.9);
    const Matrix3c Gm = dyadic_green({-r[0], -r[1], -r[2]}, 0.9);
    EXPECT_LT((G - G.transpose()).norm(), 1e-15);
    EXPECT_LT((G - Gm).norm(), 1e-15);
}

// Series in k0 using the unit-cube pair moments <1/R> = 1.8823126444,
// <R> = 0.6617071823 (Robbins), <R^2> = 1/2, <R^3>, <R^4> = 11/30.
TEST(CubeGreenIntegral, MatchesMomentSeriesOracle)
{
    const CubeGreenIntegral J = cube_green_integral(1.0, 0.5);
    EXPECT_NEAR(J.value.real(), 0.1432927, 2e-7);
    EXPECT_NEAR(J.value.imag(), -0.0389673, 2e-7);
    EXPECT_LE(J.achieved_tol, 1e-13);
}

TEST(CubeGreenIntegral, StaticLimitIsMeanInverseDistance)
{
    const CubeGreenIntegral J = cube_green_integral(1.0, 1e-9);
    EXPECT_NEAR(4.0 * kPi * J.value.real(), 1.8823126444, 1e-9);
    const CubeGreenIntegral J2 = cube_green_integral(2.0, 1e-9);
    EXPECT_NEAR(J2.value.real() / J.value.real(), 4.0, 1e-9);
}

TEST(SelfTerm, DiagonalIsotropicAndFrozen)
{
    const Matrix3c S = self_term(1.0, 0.5);
    const cplx expect = (2.0 / 3.0) * (1.0 + 0.25 * cplx(0.1432927, -0.0389673));
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            EXPECT_NEAR(std::abs(S(a, b) - (a == b ? expect : cplx(0.0))), 0.0, 1e-7);
}

TEST(SelfTerm, StaticLimitIsTwoThirds)
{
    const Matrix3c S = self_term(1e-9, 1.0);
    EXPECT_NEAR(std::abs(S(0, 0) - 2.0 / 3.0), 0.0, 1e-12);
}

TEST(AssembleKernel, MatchesBruteForcePairLoop)
{
    const VoxelGrid g(3, 2, 4, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.7);
    const DenseMatrix N = dense_kernel(K);
    const DenseMatrix B = oracle::brute_force_kernel(g, 0.7);
    EXPECT_LT((N - B).cwiseAbs().maxCoeff(), 1e-13 * B.cwiseAbs().maxCoeff());
}

TEST(AssembleKernel, FarOffsetsUseCentroidRule)
{
    const VoxelGrid g(4, 4, 4, 0.5);
    const ToeplitzKernel K = assemble_kernel(g, 1.0);
    const Matrix3c G = dyadic_green({3 * 0.5, -2 * 0.5, 1 * 0.5}, 1.0) * g.voxel_volume();
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) EXPECT_NEAR(std::abs(K.entry(a, b, 3, -2, 1) - G(a, b)), 0.0, 1e-15);
}

TEST(AssembleKernel, ParityAndSymmetry)
{
    const VoxelGrid g(3, 3, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx) {
                EXPECT_EQ(K.entry(0, 1, dx, dy, dz), -K.entry(0, 1, -dx, dy, dz));
                EXPECT_EQ(K.entry(0, 1, dx, dy, dz), K.entry(0, 1, dx, dy, -dz));
                EXPECT_EQ(K.entry(0, 0, dx, dy, dz), K.entry(0, 0, -dx, -dy, -dz));
                EXPECT_EQ(K.entry(1, 2, dx, dy, dz), -K.entry(1, 2, dx, -dy, dz));
            }
    const DenseMatrix N = dense_kernel(K);
    EXPECT_LT((N - N.transpose()).norm(), 1e-14 * N.norm());
}

TEST(AssembleKernel, NearNeighbourGaussChangesOnlyNeighbours)
{
    const VoxelGrid g(4, 3, 3, 1.0);
    KernelOptions opt;
    opt.near_neighbor_gauss = true;
    const ToeplitzKernel A = assemble_kernel(g, 0.5);
    const ToeplitzKernel B = assemble_kernel(g, 0.5, opt);
    EXPECT_EQ(A.entry(0, 0, 0, 0, 0), B.entry(0, 0, 0, 0, 0));
    EXPECT_EQ(A.entry(0, 0, 3, 2, 2), B.entry(0, 0, 3, 2, 2));
    EXPECT_NE(A.entry(0, 0, 1, 0, 0), B.entry(0, 0, 1, 0, 0));
    EXPECT_NEAR(std::abs(A.entry(0, 0, 1, 0, 0) / B.entry(0, 0, 1, 0, 0)), 1.0, 0.3);
}

TEST(AssembleKernel, RejectsUnderResolvedGrid)
{
    EXPECT_THROW(assemble_kernel(VoxelGrid(2, 2, 2, 1.0), 2.5), DomainError);
}

TEST(AssembleKernel, SliceEqualsSmallerAssembly)
{
    const ToeplitzKernel big = assemble_kernel(VoxelGrid(5, 4, 3, 1.0), 0.6);
    const ToeplitzKernel small = assemble_kernel(VoxelGrid(3, 2, 3, 1.0), 0.6);
    const ToeplitzKernel cut = big.slice(3, 2, 3, {0.0, 0.0, 0.0});
    for (int c = 0; c < kNumComps; ++c) {
        ASSERT_EQ(cut.tensor(c).size(), small.tensor(c).size());
        for (std::size_t i = 0; i < cut.tensor(c).size(); ++i) EXPECT_EQ(cut.tensor(c)[i], small.tensor(c)[i]);
    }
}

TEST(KernelFile, RoundTrip)
{
    const ToeplitzKernel K = assemble_kernel(VoxelGrid(3, 2, 2, 0.25), 0.9);
    const auto path = std::filesystem::temp_directory_path() / "vie_kernel_roundtrip.bin";
    write_kernel(K, path);
    const ToeplitzKernel R = read_kernel(path);
    EXPECT_EQ(R.grid(), K.grid());
    for (int c = 0; c < kNumComps; ++c) EXPECT_EQ(R.tensor(c), K.tensor(c));
}
