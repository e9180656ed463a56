#pragma once

#include <string_view>
#include <vector>

#include "vie/common.hpp"

namespace vie {

/// Uniform voxel lattice. Voxel (ix, iy, iz) is centred at
/// origin + delta * (ix + 1/2, iy + 1/2, iz + 1/2); the linear index is
/// x-fastest, v = ix + nx * (iy + ny * iz).
struct VoxelGrid {
    int nx = 1;
    int ny = 1;
    int nz = 1;
    double delta = 1.0;
    Vec3 origin{0.0, 0.0, 0.0};

    VoxelGrid() = default;
    VoxelGrid(int nx_, int ny_, int nz_, double delta_, Vec3 origin_ = {0.0, 0.0, 0.0});

    std::size_t voxels() const { return std::size_t(nx) * std::size_t(ny) * std::size_t(nz); }
    std::size_t unknowns() const { return 3 * voxels(); }
    double voxel_volume() const { return delta * delta * delta; }

    std::size_t index(int ix, int iy, int iz) const
    {
        return std::size_t(ix) + std::size_t(nx) * (std::size_t(iy) + std::size_t(ny) * std::size_t(iz));
    }
    std::array<int, 3> unindex(std::size_t v) const;
    Vec3 center(int ix, int iy, int iz) const;

    bool operator==(const VoxelGrid&) const = default;
};

/// Angular frequency plus the derived free-space wavenumber.
struct Physics {
    double omega = 0.0;

    explicit Physics(double omega_);
    static Physics from_wavelength(double lambda0);

    double eps0() const { return kEps0; }
    double mu0() const { return kMu0; }
    double k0() const { return omega * std::sqrt(kEps0 * kMu0); }
    double lambda0() const { return 2.0 * kPi / k0(); }
    /// Interior wavelength for a (real part of) relative permittivity.
    double lambda_int(double eps_real) const { return lambda0() / std::sqrt(eps_real); }
};

/// Relative permittivities at 1550 nm. The "in" variants are core values
/// normalised by the SiO2 cladding.
namespace materials {
inline constexpr double kSi = 12.1;
inline constexpr double kSiN = 3.99;
inline constexpr double kSiO2 = 2.085;
inline constexpr double kSiInSiO2 = 5.80;
inline constexpr double kSiNInSiO2 = 1.91;
} // namespace materials

/// Resolves "si", "sin", "sio2", "si_in_sio2", "sin_in_sio2" and "air".
double material_permittivity(std::string_view name);

/// Per-voxel complex relative permittivity, eps = eps' - j eps''.
class PermittivityMap {
public:
    PermittivityMap() = default;
    /// Fills every voxel with `fill` (air by default).
    explicit PermittivityMap(const VoxelGrid& grid, cplx fill = cplx(1.0, 0.0));

    const VoxelGrid& grid() const { return grid_; }
    std::size_t size() const { return eps_.size(); }

    cplx operator[](std::size_t v) const { return eps_[v]; }
    cplx at(int ix, int iy, int iz) const { return eps_[grid_.index(ix, iy, iz)]; }
    void set(int ix, int iy, int iz, cplx value);
    void set(std::size_t v, cplx value);
    const std::vector<cplx>& values() const { return eps_; }

    /// Throws DomainError if some voxel violates eps' > 0, eps'' >= 0.
    void check_passive() const;

private:
    VoxelGrid grid_;
    std::vector<cplx> eps_;
};

/// Per-voxel medium coefficient m = (eps - 1) / eps, or a homogenized
/// stand-in used to build preconditioners.
struct CoefficientMap {
    VoxelGrid grid;
    std::vector<cplx> m;

    cplx at(int ix, int iy, int iz) const { return m[grid.index(ix, iy, iz)]; }
    bool constant_along_x(double tol = 0.0) const;
    bool constant_along_xy(double tol = 0.0) const;
};

enum class Homogenization { Mode, MeanX, RealMeanX };

Homogenization parse_homogenization(std::string_view name);
std::string_view to_string(Homogenization h);

CoefficientMap medium_coefficient(const PermittivityMap& map);

CoefficientMap homogenize(const CoefficientMap& coeff, Homogenization strategy);
CoefficientMap homogenize(const PermittivityMap& map, Homogenization strategy);

/// Fraction of voxels whose permittivity differs from 1.
double dielectric_ratio(const PermittivityMap& map);

} // namespace vie
