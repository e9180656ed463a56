#include <gtest/gtest.h>

#include "vie/grid.hpp"

using namespace vie;

TEST(VoxelGrid, IndexRoundTrip)
{
    const VoxelGrid g(4, 3, 2, 0.5, {1.0, 2.0, 3.0});
    EXPECT_EQ(g.voxels(), 24u);
    EXPECT_EQ(g.unknowns(), 72u);
    EXPECT_EQ(g.index(1, 2, 1), 1u + 4u * (2u + 3u * 1u));
    for (std::size_t v = 0; v < g.voxels(); ++v) {
        const auto [ix, iy, iz] = g.unindex(v);
        EXPECT_EQ(g.index(ix, iy, iz), v);
    }
    const Vec3 c = g.center(1, 0, 1);
    EXPECT_DOUBLE_EQ(c[0], 1.75);
    EXPECT_DOUBLE_EQ(c[1], 2.25);
    EXPECT_DOUBLE_EQ(c[2], 3.75);
}

TEST(VoxelGrid, RejectsEmptyAndBadPitch)
{
    EXPECT_THROW(VoxelGrid(0, 1, 1, 1.0), Error);
    EXPECT_THROW(VoxelGrid(1, 1, 1, 0.0), Error);
}

TEST(Physics, WavenumberFromWavelength)
{
    const Physics p = Physics::from_wavelength(1550e-9);
    EXPECT_NEAR(p.k0(), 2.0 * kPi / 1550e-9, 1e-6);
    EXPECT_NEAR(p.lambda0(), 1550e-9, 1e-20);
    EXPECT_NEAR(p.lambda_int(4.0), 775e-9, 1e-20);
}

TEST(Materials, KnownNames)
{
    EXPECT_DOUBLE_EQ(material_permittivity("si_in_sio2"), 5.80);
    EXPECT_DOUBLE_EQ(material_permittivity("sin_in_sio2"), 1.91);
    EXPECT_DOUBLE_EQ(material_permittivity("air"), 1.0);
    EXPECT_THROW(material_permittivity("unobtainium"), ConfigError);
}

TEST(MediumCoefficient, HandValues)
{
    const VoxelGrid g(3, 1, 1, 1.0);
    PermittivityMap map(g);
    map.set(1, 0, 0, 4.0);
    map.set(2, 0, 0, cplx(2.0, -2.0));
    const CoefficientMap m = medium_coefficient(map);
    EXPECT_EQ(m.m[0], cplx(0.0, 0.0));
    EXPECT_NEAR(std::abs(m.m[1] - 0.75), 0.0, 1e-15);
    // (1 - 2j) / (2 - 2j) = (3 - j) / 4
    EXPECT_NEAR(std::abs(m.m[2] - cplx(0.75, -0.25)), 0.0, 1e-15);
}

TEST(PermittivityMap, PassivityCheck)
{
    const VoxelGrid g(2, 1, 1, 1.0);
    PermittivityMap map(g);
    map.set(0, 0, 0, cplx(4.0, -0.5));
    EXPECT_NO_THROW(map.check_passive());
    map.set(1, 0, 0, cplx(4.0, 0.5));
    EXPECT_THROW(map.check_passive(), DomainError);
    map.set(1, 0, 0, cplx(-1.0, 0.0));
    EXPECT_THROW(map.check_passive(), DomainError);
}

namespace {

// Two rows along x: row 0 alternates Si / air, row 1 is all Si.
PermittivityMap corrugated()
{
    const VoxelGrid g(4, 2, 1, 1.0);
    PermittivityMap map(g);
    for (int ix = 0; ix < 4; ++ix) {
        map.set(ix, 1, 0, cplx(4.0, -1.0));
        if (ix % 2 == 0) map.set(ix, 0, 0, cplx(4.0, -1.0));
    }
    return map;
}

} // namespace

TEST(Homogenize, ModeTakesMostFrequentValue)
{
    const PermittivityMap map = corrugated();
    const CoefficientMap mode = homogenize(map, Homogenization::Mode);
    const cplx si = (cplx(4.0, -1.0) - 1.0) / cplx(4.0, -1.0);
    for (const cplx& v : mode.m) EXPECT_NEAR(std::abs(v - si), 0.0, 1e-15);
    EXPECT_TRUE(mode.constant_along_xy());
}

TEST(Homogenize, MeanAlongX)
{
    const PermittivityMap map = corrugated();
    const cplx si = (cplx(4.0, -1.0) - 1.0) / cplx(4.0, -1.0);
    const CoefficientMap mean = homogenize(map, Homogenization::MeanX);
    const CoefficientMap real = homogenize(map, Homogenization::RealMeanX);
    EXPECT_TRUE(mean.constant_along_x());
    EXPECT_FALSE(mean.constant_along_xy());
    for (int ix = 0; ix < 4; ++ix) {
        EXPECT_NEAR(std::abs(mean.at(ix, 0, 0) - 0.5 * si), 0.0, 1e-15);
        EXPECT_NEAR(std::abs(mean.at(ix, 1, 0) - si), 0.0, 1e-15);
        EXPECT_DOUBLE_EQ(real.at(ix, 0, 0).imag(), 0.0);
        EXPECT_NEAR(real.at(ix, 0, 0).real(), 0.5 * si.real(), 1e-15);
    }
}

TEST(Homogenize, Names)
{
    EXPECT_EQ(parse_homogenization("real_mean_x"), Homogenization::RealMeanX);
    EXPECT_EQ(parse_homogenization("mean_x"), Homogenization::MeanX);
    EXPECT_EQ(parse_homogenization("mode"), Homogenization::Mode);
    EXPECT_EQ(to_string(Homogenization::RealMeanX), "real_mean_x");
    EXPECT_THROW(parse_homogenization("median"), ConfigError);
}

TEST(DielectricRatio, CountsNonAirVoxels)
{
    EXPECT_DOUBLE_EQ(dielectric_ratio(corrugated()), 6.0 / 8.0);
    EXPECT_DOUBLE_EQ(dielectric_ratio(PermittivityMap(VoxelGrid(2, 2, 2, 1.0))), 0.0);
}
