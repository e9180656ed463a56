#include <random>

#include <gtest/gtest.h>

#include "vie/circulant.hpp"
#include "vie/oracles.hpp"
#include "vie/solver.hpp"

using namespace vie;

namespace {

FieldVector random_field(std::size_t n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::normal_distribution<double> d;
    FieldVector x(static_cast<Eigen::Index>(n));
    for (auto& v : x) v = cplx(d(rng), d(rng));
    return x;
}

PermittivityMap uniform(const VoxelGrid& g, cplx eps) { return PermittivityMap(g, eps); }

} // namespace

TEST(Chan, HandCase)
{
    const std::vector<cplx> col{1.0, 2.0, 3.0};
    const std::vector<cplx> row{1.0, -1.0, -2.0};
    const auto c = chan_circulant<cplx>(col, row);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_NEAR(std::abs(c[0] - 1.0), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(c[1] - 2.0 / 3.0), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(c[2] - 1.0 / 3.0), 0.0, 1e-15);
}

TEST(Chan, MatchesFrobeniusProjection)
{
    std::mt19937 rng(17);
    std::normal_distribution<double> d;
    std::uniform_int_distribution<int> size(2, 16);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = size(rng);
        std::vector<cplx> col(n), row(n);
        for (auto& v : col) v = cplx(d(rng), d(rng));
        for (auto& v : row) v = cplx(d(rng), d(rng));
        row[0] = col[0];
        const auto c = chan_circulant<cplx>(col, row);
        const auto ref = oracle::frobenius_circulant(oracle::toeplitz(col, row));
        for (int i = 0; i < n; ++i) ASSERT_NEAR(std::abs(c[i] - ref[i]), 0.0, 1e-12) << "n=" << n;
    }
}

TEST(Chan, CirculantIsFixedPoint)
{
    const std::vector<cplx> c{cplx(1, 1), cplx(2, 0), cplx(0, -1), cplx(3, 2)};
    std::vector<cplx> row(4);
    row[0] = c[0];
    for (int i = 1; i < 4; ++i) row[i] = c[4 - i];
    EXPECT_EQ(chan_circulant<cplx>(c, row), c);
    const DenseMatrix C = circulant_matrix(c);
    EXPECT_EQ(C(1, 0), c[1]);
    EXPECT_EQ(C(0, 1), c[3]);
}

TEST(Chan, RejectsMismatch)
{
    const std::vector<cplx> a{1.0, 2.0};
    const std::vector<cplx> b{1.0};
    EXPECT_THROW(chan_circulant<cplx>(a, b), DomainError);
}

TEST(PrecLevel, Names)
{
    for (auto l : {PrecLevel::None, PrecLevel::OneLevel, PrecLevel::ReducedOneLevel, PrecLevel::TwoLevel,
                   PrecLevel::Blocked})
        EXPECT_EQ(parse_prec_level(to_string(l)), l);
    EXPECT_THROW(parse_prec_level("three-level"), ConfigError);
}

class OneLevelExact : public ::testing::TestWithParam<std::array<int, 3>> {};

TEST_P(OneLevelExact, InvertsChanOperator)
{
    const auto [nx, ny, nz] = GetParam();
    const VoxelGrid g(nx, ny, nz, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    const CoefficientMap mt = homogenize(oracle::random_map(g, 3), Homogenization::MeanX);
    const DenseMatrix C = oracle::chan_x_operator(K, mt);
    const OneLevelPrec P = build_one_level(K, mt);
    const FieldVector x = random_field(g.unknowns(), 1);
    EXPECT_LT((C * P.apply(x) - x).norm(), 1e-12 * x.norm());
    EXPECT_EQ(P.frequencies(), std::size_t(nx));
    EXPECT_EQ(P.block_dim(), std::size_t(3 * ny * nz));
    EXPECT_EQ(P.bytes(), std::size_t(nx) * P.block_dim() * P.block_dim() * 16);
}

INSTANTIATE_TEST_SUITE_P(Grids, OneLevelExact,
                         ::testing::Values(std::array<int, 3>{1, 2, 2}, std::array<int, 3>{4, 2, 1},
                                           std::array<int, 3>{5, 3, 2}, std::array<int, 3>{6, 1, 3}));

TEST(OneLevel, BlocksMatchChanOperatorEigenblocks)
{
    const VoxelGrid g(4, 2, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.5);
    const CoefficientMap mt = homogenize(uniform(g, 5.8), Homogenization::Mode);
    const DenseMatrix C = oracle::chan_x_operator(K, mt);
    const std::size_t nx = 4, nyz = 4, nv = 16;
    for (std::size_t k = 0; k < nx; ++k) {
        // Apply C to a Fourier mode along x and read off the block action.
        const DenseMatrix D = one_level_block(K, mt, k);
        for (std::size_t col = 0; col < 3 * nyz; ++col) {
            FieldVector x = FieldVector::Zero(48);
            const std::size_t a = col / nyz, yz = col % nyz;
            for (std::size_t ix = 0; ix < nx; ++ix)
                x[Eigen::Index(a * nv + ix + nx * yz)] = std::polar(1.0, 2.0 * kPi * double(k * ix) / double(nx));
            const FieldVector y = C * x;
            for (std::size_t row = 0; row < 3 * nyz; ++row) {
                const std::size_t b = row / nyz, yz2 = row % nyz;
                EXPECT_NEAR(std::abs(y[Eigen::Index(b * nv + nx * yz2)] - D(row, col)), 0.0, 1e-13);
            }
        }
    }
}

TEST(OneLevel, RequiresHomogenizedMap)
{
    const VoxelGrid g(4, 2, 1, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    EXPECT_THROW(build_one_level(K, medium_coefficient(oracle::random_map(g, 2))), BuildError);
}

TEST(OneLevel, ByteCapRefusesBuild)
{
    const VoxelGrid g(4, 2, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    CirculantOptions opt;
    opt.max_bytes = 1000;
    EXPECT_THROW(build_one_level(K, homogenize(uniform(g, 4.0), Homogenization::Mode), opt), BuildError);
}

TEST(OneLevel, ThreadedBuildIsIdentical)
{
    const VoxelGrid g(6, 3, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    const CoefficientMap mt = homogenize(oracle::random_map(g, 5), Homogenization::RealMeanX);
    CirculantOptions opt;
    opt.threads = 3;
    const FieldVector x = random_field(g.unknowns(), 6);
    EXPECT_EQ(build_one_level(K, mt).apply(x), build_one_level(K, mt, opt).apply(x));
}

TEST(Reduced, ProxyIsFixedBlockEntry)
{
    const VoxelGrid g(6, 3, 3, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.5);
    const CoefficientMap mt = homogenize(uniform(g, 5.8), Homogenization::Mode);
    const OneLevelPrec P = build_reduced_one_level(K, mt, 0.0);
    // ceil(3/2) * ceil(3/2) = 4, 0-based column 3.
    for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(P.proxy()[k], one_level_block(K, mt, k)(0, 3));
    EXPECT_EQ(P.representative(), 2u);
    const auto v = P.normalized_proxy();
    EXPECT_NEAR(*std::max_element(v.begin(), v.end()), 1.0, 1e-15);
}

TEST(Reduced, ZeroToleranceKeepsEverything)
{
    const VoxelGrid g(7, 2, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.5);
    const CoefficientMap mt = homogenize(uniform(g, 5.8), Homogenization::Mode);
    const OneLevelPrec full = build_one_level(K, mt);
    const OneLevelPrec red = build_reduced_one_level(K, mt, 0.0);
    EXPECT_EQ(red.stored_blocks(), 7u);
    const FieldVector x = random_field(g.unknowns(), 2);
    EXPECT_EQ(red.apply(x), full.apply(x));
}

TEST(Reduced, FullToleranceKeepsOnlyRepresentative)
{
    const VoxelGrid g(7, 2, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.5);
    const CoefficientMap mt = homogenize(uniform(g, 5.8), Homogenization::Mode);
    const OneLevelPrec red = build_reduced_one_level(K, mt, 1.0);
    EXPECT_EQ(red.stored_blocks(), 1u);
    EXPECT_EQ(red.kept_frequencies(), std::vector<std::size_t>{3});
    for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(red.route(k), 3u);
    EXPECT_EQ(red.bytes(), red.block_dim() * red.block_dim() * 16);
    const PrecSummary s = red.summary();
    EXPECT_EQ(s.blocks, 7u);
    EXPECT_EQ(s.stored, 1u);
    EXPECT_EQ(s.discarded, 6u);
}

TEST(Reduced, KeptSetFollowsThreshold)
{
    const VoxelGrid g(16, 3, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.6);
    const CoefficientMap mt = homogenize(uniform(g, 5.8), Homogenization::Mode);
    const OneLevelPrec full = build_one_level(K, mt);
    const double tol = 0.2;
    const OneLevelPrec red = reduce_one_level(full, tol);
    const auto v = red.normalized_proxy();
    for (std::size_t k = 0; k < 16; ++k) {
        const bool kept = v[k] > tol || k == red.representative();
        EXPECT_EQ(red.route(k), kept ? k : red.representative()) << k;
    }
    EXPECT_EQ(build_reduced_one_level(K, mt, tol).kept_frequencies(), red.kept_frequencies());
    EXPECT_THROW(reduce_one_level(full, 1.5), DomainError);
}

TEST(TwoLevel, InvertsChanOperator)
{
    const VoxelGrid g(4, 3, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    const CoefficientMap mt = homogenize(oracle::random_map(g, 4), Homogenization::Mode);
    const DenseMatrix C = oracle::chan_xy_operator(K, mt);
    const TwoLevelPrec P = build_two_level(K, mt);
    const FieldVector x = random_field(g.unknowns(), 7);
    EXPECT_LT((C * P.apply(x) - x).norm(), 1e-12 * x.norm());
    EXPECT_EQ(P.blocks(), 12u);
    EXPECT_EQ(P.block_dim(), 6u);
    EXPECT_EQ(P.bytes(), 12u * 36u * 16u);
}

TEST(TwoLevel, RequiresXYConstantMap)
{
    const VoxelGrid g(4, 3, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    EXPECT_THROW(build_two_level(K, homogenize(oracle::random_map(g, 4), Homogenization::MeanX)), BuildError);
}

TEST(Partition, ValidatesBoxes)
{
    const VoxelGrid g(6, 6, 2, 1.0);
    Box a;
    a.lo = {0, 0, 0};
    a.hi = {6, 3, 2};
    Box b;
    b.lo = {0, 2, 0};
    b.hi = {6, 5, 2};
    EXPECT_THROW(partition_boxes(g, {a, b}), DomainError);
    b.lo = {0, 4, 0};
    const Partition p = partition_boxes(g, {a, b});
    EXPECT_EQ(p.uncovered_voxels, 6u * 1u * 2u + 6u * 1u * 2u);
    Box c;
    c.lo = {0, 0, 0};
    c.hi = {7, 1, 1};
    EXPECT_THROW(partition_boxes(g, {c}), DomainError);
    Box e;
    e.lo = {2, 2, 0};
    e.hi = {2, 3, 1};
    EXPECT_THROW(partition_boxes(g, {e}), DomainError);
}

TEST(Partition, ExtractBoxCopiesVoxels)
{
    const VoxelGrid g(4, 3, 2, 0.5);
    const PermittivityMap map = oracle::random_map(g, 9);
    Box b;
    b.lo = {1, 1, 0};
    b.hi = {3, 3, 2};
    const PermittivityMap sub = extract_box(map, b);
    EXPECT_EQ(sub.grid().nx, 2);
    EXPECT_DOUBLE_EQ(sub.grid().origin[0], 0.5);
    EXPECT_EQ(sub.at(1, 0, 1), map.at(2, 1, 1));
}

TEST(Blocked, BoxwiseApplyAndIdentityGap)
{
    const VoxelGrid g(6, 6, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    PermittivityMap map(g);
    for (int iz = 0; iz < 2; ++iz)
        for (int ix = 0; ix < 6; ++ix) {
            for (int iy : {0, 1}) map.set(ix, iy, iz, 5.8);
            for (int iy : {4, 5}) map.set(ix, iy, iz, 5.8);
        }
    Box lower;
    lower.lo = {0, 0, 0};
    lower.hi = {6, 2, 2};
    Box upper = lower;
    upper.lo = {0, 4, 0};
    upper.hi = {6, 6, 2};
    upper.level = PrecLevel::TwoLevel;
    const BlockedPrec P = build_blocked(K, map, partition_boxes(g, {lower, upper}));
    const FieldVector x = random_field(g.unknowns(), 3);
    const FieldVector y = P.apply(x);
    for (std::size_t i = 0; i < 2; ++i) {
        const FieldVector local = P.box_preconditioner(i).apply(P.restrict_to(i, x));
        EXPECT_EQ(P.restrict_to(i, y), local);
    }
    for (int a = 0; a < 3; ++a)
        for (int iz = 0; iz < 2; ++iz)
            for (int iy : {2, 3})
                for (int ix = 0; ix < 6; ++ix) {
                    const auto i = Eigen::Index(a * g.voxels() + g.index(ix, iy, iz));
                    EXPECT_EQ(y[i], x[i]);
                }
    EXPECT_EQ(P.bytes(), P.box_preconditioner(0).bytes() + P.box_preconditioner(1).bytes());
    EXPECT_EQ(P.summary().boxes.size(), 2u);
    EXPECT_EQ(P.summary().boxes[1].level, "two-level");
}

TEST(Blocked, SingleBoxEqualsWholeGridPreconditioner)
{
    const VoxelGrid g(5, 2, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    const PermittivityMap map = oracle::random_map(g, 12);
    Box all;
    all.lo = {0, 0, 0};
    all.hi = {5, 2, 2};
    const BlockedPrec P = build_blocked(K, map, partition_boxes(g, {all}));
    const OneLevelPrec Q = build_one_level(K, homogenize(map, Homogenization::RealMeanX));
    const FieldVector x = random_field(g.unknowns(), 1);
    EXPECT_LT((P.apply(x) - Q.apply(x)).norm(), 1e-14 * x.norm());
}

TEST(BuildPreconditioner, LevelsAndErrors)
{
    const VoxelGrid g(4, 2, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    const CoefficientMap mt = homogenize(uniform(g, 4.0), Homogenization::Mode);
    EXPECT_EQ(build_preconditioner(PrecLevel::OneLevel, K, mt, 1e-3)->summary().level, "one-level");
    EXPECT_EQ(build_preconditioner(PrecLevel::ReducedOneLevel, K, mt, 1e-3)->summary().level, "reduced-one-level");
    EXPECT_EQ(build_preconditioner(PrecLevel::TwoLevel, K, mt, 1e-3)->summary().level, "two-level");
    EXPECT_THROW(build_preconditioner(PrecLevel::Blocked, K, mt, 1e-3), ConfigError);
    const auto none = build_preconditioner(PrecLevel::None, K, mt, 1e-3);
    const FieldVector x = random_field(g.unknowns(), 1);
    EXPECT_EQ(none->apply(x), x);
    EXPECT_EQ(none->bytes(), 0u);
}

TEST(Preconditioner, RejectsWrongLength)
{
    const VoxelGrid g(4, 2, 2, 1.0);
    const ToeplitzKernel K = assemble_kernel(g, 0.4);
    const OneLevelPrec P = build_one_level(K, homogenize(uniform(g, 4.0), Homogenization::Mode));
    EXPECT_THROW(P.apply(FieldVector::Zero(3)), ShapeError);
}
