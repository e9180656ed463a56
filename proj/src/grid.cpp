#include "vie/grid.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace vie {

VoxelGrid::VoxelGrid(int nx_, int ny_, int nz_, double delta_, Vec3 origin_)
    : nx(nx_), ny(ny_), nz(nz_), delta(delta_), origin(origin_)
{
    if (nx < 1 || ny < 1 || nz < 1)
        throw DomainError("voxel grid dimensions must be >= 1, got " + std::to_string(nx) + "x" +
                          std::to_string(ny) + "x" + std::to_string(nz));
    if (!(delta > 0.0))
        throw DomainError("voxel pitch must be positive");
}

std::array<int, 3> VoxelGrid::unindex(std::size_t v) const
{
    const int ix = int(v % std::size_t(nx));
    const std::size_t rest = v / std::size_t(nx);
    return {ix, int(rest % std::size_t(ny)), int(rest / std::size_t(ny))};
}

Vec3 VoxelGrid::center(int ix, int iy, int iz) const
{
    return {origin[0] + delta * (ix + 0.5), origin[1] + delta * (iy + 0.5), origin[2] + delta * (iz + 0.5)};
}

Physics::Physics(double omega_) : omega(omega_)
{
    if (!(omega > 0.0))
        throw DomainError("angular frequency must be positive");
}

Physics Physics::from_wavelength(double lambda0)
{
    if (!(lambda0 > 0.0))
        throw DomainError("wavelength must be positive");
    return Physics(2.0 * kPi / (lambda0 * std::sqrt(kEps0 * kMu0)));
}

double material_permittivity(std::string_view name)
{
    if (name == "air") return 1.0;
    if (name == "si") return materials::kSi;
    if (name == "sin") return materials::kSiN;
    if (name == "sio2") return materials::kSiO2;
    if (name == "si_in_sio2") return materials::kSiInSiO2;
    if (name == "sin_in_sio2") return materials::kSiNInSiO2;
    throw ConfigError("unknown material '" + std::string(name) + "'");
}

PermittivityMap::PermittivityMap(const VoxelGrid& grid, cplx fill) : grid_(grid), eps_(grid.voxels(), fill) {}

void PermittivityMap::set(int ix, int iy, int iz, cplx value)
{
    eps_[grid_.index(ix, iy, iz)] = value;
}

void PermittivityMap::set(std::size_t v, cplx value)
{
    eps_.at(v) = value;
}

void PermittivityMap::check_passive() const
{
    for (std::size_t v = 0; v < eps_.size(); ++v) {
        if (!(eps_[v].real() > 0.0) || eps_[v].imag() > 0.0) {
            const auto [ix, iy, iz] = grid_.unindex(v);
            throw DomainError("non-passive permittivity at voxel (" + std::to_string(ix) + ", " +
                              std::to_string(iy) + ", " + std::to_string(iz) + ")");
        }
    }
}

bool CoefficientMap::constant_along_x(double tol) const
{
    for (int iz = 0; iz < grid.nz; ++iz)
        for (int iy = 0; iy < grid.ny; ++iy) {
            const cplx ref = at(0, iy, iz);
            for (int ix = 1; ix < grid.nx; ++ix)
                if (std::abs(at(ix, iy, iz) - ref) > tol) return false;
        }
    return true;
}

bool CoefficientMap::constant_along_xy(double tol) const
{
    for (int iz = 0; iz < grid.nz; ++iz) {
        const cplx ref = at(0, 0, iz);
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix)
                if (std::abs(at(ix, iy, iz) - ref) > tol) return false;
    }
    return true;
}

Homogenization parse_homogenization(std::string_view name)
{
    if (name == "mode") return Homogenization::Mode;
    if (name == "mean_x") return Homogenization::MeanX;
    if (name == "real_mean_x") return Homogenization::RealMeanX;
    throw ConfigError("unknown homogenization '" + std::string(name) + "' (mode | mean_x | real_mean_x)");
}

std::string_view to_string(Homogenization h)
{
    switch (h) {
    case Homogenization::Mode: return "mode";
    case Homogenization::MeanX: return "mean_x";
    case Homogenization::RealMeanX: return "real_mean_x";
    }
    return "?";
}

CoefficientMap medium_coefficient(const PermittivityMap& map)
{
    CoefficientMap out{map.grid(), std::vector<cplx>(map.size())};
    for (std::size_t v = 0; v < map.size(); ++v) {
        const cplx eps = map[v];
        if (std::abs(eps) == 0.0) throw DomainError("zero permittivity has no medium coefficient");
        out.m[v] = (eps - 1.0) / eps;
    }
    return out;
}

namespace {

cplx modal_value(const std::vector<cplx>& values)
{
    // Exact-value multiset; geometries are piecewise constant so values repeat bitwise.
    auto less = [](const cplx& a, const cplx& b) {
        return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
    };
    std::map<cplx, std::size_t, decltype(less)> counts(less);
    for (const cplx& v : values) ++counts[v];

    cplx best{};
    std::size_t best_count = 0;
    for (const auto& [value, count] : counts) {
        if (count > best_count || (count == best_count && std::abs(value) > std::abs(best))) {
            best = value;
            best_count = count;
        }
    }
    return best;
}

} // namespace

CoefficientMap homogenize(const CoefficientMap& coeff, Homogenization strategy)
{
    const VoxelGrid& g = coeff.grid;
    CoefficientMap out{g, std::vector<cplx>(coeff.m.size())};

    if (strategy == Homogenization::Mode) {
        std::fill(out.m.begin(), out.m.end(), modal_value(coeff.m));
        return out;
    }

    for (int iz = 0; iz < g.nz; ++iz)
        for (int iy = 0; iy < g.ny; ++iy) {
            cplx sum{};
            for (int ix = 0; ix < g.nx; ++ix) sum += coeff.at(ix, iy, iz);
            cplx mean = sum / double(g.nx);
            if (strategy == Homogenization::RealMeanX) mean = cplx(mean.real(), 0.0);
            for (int ix = 0; ix < g.nx; ++ix) out.m[g.index(ix, iy, iz)] = mean;
        }
    return out;
}

CoefficientMap homogenize(const PermittivityMap& map, Homogenization strategy)
{
    return homogenize(medium_coefficient(map), strategy);
}

double dielectric_ratio(const PermittivityMap& map)
{
    std::size_t count = 0;
    for (const cplx& e : map.values())
        if (e != cplx(1.0, 0.0)) ++count;
    return map.size() == 0 ? 0.0 : double(count) / double(map.size());
}

} // namespace vie
