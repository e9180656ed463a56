#pragma once

#include <filesystem>
#include <vector>

#include "vie/grid.hpp"

namespace vie {

using Matrix3c = Eigen::Matrix3cd;

/// e^{-j k0 R} / (4 pi R). Throws DomainError for R <= 0.
cplx scalar_green(double R, double k0);

/// Free-space dyadic (k0^2 I + grad grad) g evaluated at separation r.
Matrix3c dyadic_green(const Vec3& r, double k0);

/// Galerkin self element <N p, p> of a cubic voxel with pitch delta. The
/// result is diagonal and isotropic. Cached per (delta, k0).
Matrix3c self_term(double delta, double k0);

/// Mean of g over a cube-cube pair, (1/V) int int g(|r - r'|), by Duffy
/// quadrature with Gauss-Legendre order refinement.
struct CubeGreenIntegral {
    cplx value;
    double achieved_tol;
    int order;
};
CubeGreenIntegral cube_green_integral(double delta, double k0, double tol = 1e-13);

/// Ordering of the six stored dyadic components.
enum class Comp : int { XX = 0, XY = 1, XZ = 2, YY = 3, YZ = 4, ZZ = 5 };
inline constexpr int kNumComps = 6;

constexpr int comp_index(int alpha, int beta)
{
    constexpr int table[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
    return table[alpha][beta];
}

struct KernelOptions {
    /// Replace centroid quadrature by 3^3 Gauss over the source voxel for
    /// offsets at Chebyshev distance 1.
    bool near_neighbor_gauss = false;
};

/// Six generating tensors of the three-level Toeplitz operator N over all
/// signed offsets (dx, dy, dz), |d_a| < n_a. Entry at offset d is
/// N^{ab}_{ij} for any voxel pair with r_i - r_j = delta * d.
class ToeplitzKernel {
public:
    ToeplitzKernel() = default;
    ToeplitzKernel(const VoxelGrid& grid, double k0);

    const VoxelGrid& grid() const { return grid_; }
    double k0() const { return k0_; }

    int ex() const { return 2 * grid_.nx - 1; }
    int ey() const { return 2 * grid_.ny - 1; }
    int ez() const { return 2 * grid_.nz - 1; }
    std::size_t offsets() const { return std::size_t(ex()) * std::size_t(ey()) * std::size_t(ez()); }

    std::size_t offset_index(int dx, int dy, int dz) const
    {
        return std::size_t(dx + grid_.nx - 1) +
               std::size_t(ex()) * (std::size_t(dy + grid_.ny - 1) + std::size_t(ey()) * std::size_t(dz + grid_.nz - 1));
    }

    cplx operator()(int comp, int dx, int dy, int dz) const { return tensors_[comp][offset_index(dx, dy, dz)]; }
    cplx entry(int alpha, int beta, int dx, int dy, int dz) const
    {
        return tensors_[comp_index(alpha, beta)][offset_index(dx, dy, dz)];
    }

    const std::vector<cplx>& tensor(int comp) const { return tensors_[comp]; }
    std::vector<cplx>& tensor(int comp) { return tensors_[comp]; }

    /// Restriction to a sub-grid of dims (nx, ny, nz) with the given origin.
    /// The kernel is translation invariant, so this is a slice of the
    /// generating tensors.
    ToeplitzKernel slice(int nx, int ny, int nz, const Vec3& origin) const;

    /// Stored complex entries: 6 (2nx-1)(2ny-1)(2nz-1).
    std::size_t storage_entries() const { return kNumComps * offsets(); }

private:
    VoxelGrid grid_;
    double k0_ = 0.0;
    std::array<std::vector<cplx>, kNumComps> tensors_;
};

ToeplitzKernel assemble_kernel(const VoxelGrid& grid, double k0, const KernelOptions& options = {});

inline constexpr std::size_t kDenseLimit = 6000;

/// Dense 3N x 3N matrix of N (oracle scale only).
DenseMatrix dense_kernel(const ToeplitzKernel& kernel);

/// Dense A = I - M N with the component-block layout of the field vector.
DenseMatrix dense_operator(const ToeplitzKernel& kernel, const CoefficientMap& coeff);

/// Little-endian interleaved complex float64, six tensors in component
/// order, each C-order with dz slowest; JSON sidecar next to it.
void write_kernel(const ToeplitzKernel& kernel, const std::filesystem::path& bin_path);
ToeplitzKernel read_kernel(const std::filesystem::path& bin_path);

} // namespace vie
