#include "vie/oracles.hpp"

#include <random>

namespace vie::oracle {

DenseMatrix toeplitz(std::span<const cplx> column, std::span<const cplx> row)
{
    const std::size_t n = column.size();
    if (row.size() != n) throw ShapeError("Toeplitz row and column lengths differ");
    DenseMatrix T(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) T(i, j) = i >= j ? column[i - j] : row[j - i];
    return T;
}

std::vector<cplx> frobenius_circulant(const DenseMatrix& T)
{
    const Eigen::Index n = T.rows();
    // Columns of B are vec(P^k), P the cyclic down-shift.
    DenseMatrix B = DenseMatrix::Zero(n * n, n);
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index j = 0; j < n; ++j) B((j + k) % n + n * j, k) = 1.0;
    const Eigen::VectorXcd t = T.reshaped();
    const Eigen::VectorXcd c = B.colPivHouseholderQr().solve(t);
    return {c.data(), c.data() + n};
}

DenseMatrix brute_force_kernel(const VoxelGrid& g, double k0)
{
    const std::size_t n = g.voxels();
    const Matrix3c self = self_term(g.delta, k0);
    const double V = g.voxel_volume();
    DenseMatrix N(3 * n, 3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = g.unindex(i);
        const Vec3 ri = g.center(a[0], a[1], a[2]);
        for (std::size_t j = 0; j < n; ++j) {
            const auto b = g.unindex(j);
            const Vec3 rj = g.center(b[0], b[1], b[2]);
            const Matrix3c G = i == j ? self : Matrix3c(V * dyadic_green({ri[0] - rj[0], ri[1] - rj[1], ri[2] - rj[2]}, k0));
            for (int p = 0; p < 3; ++p)
                for (int q = 0; q < 3; ++q) N(p * n + i, q * n + j) = G(p, q);
        }
    }
    return N;
}

namespace {

cplx chan_x(const ToeplitzKernel& K, int comp, int s, int dy, int dz)
{
    const int nx = K.grid().nx;
    cplx v = double(nx - s) / nx * K(comp, s, dy, dz);
    if (s > 0) v += double(s) / nx * K(comp, s - nx, dy, dz);
    return v;
}

cplx chan_xy(const ToeplitzKernel& K, int comp, int sx, int sy, int dz)
{
    const int ny = K.grid().ny;
    cplx v = double(ny - sy) / ny * chan_x(K, comp, sx, sy, dz);
    if (sy > 0) v += double(sy) / ny * chan_x(K, comp, sx, sy - ny, dz);
    return v;
}

template <class Entry>
DenseMatrix assemble(const ToeplitzKernel& K, const CoefficientMap& m, Entry entry)
{
    const VoxelGrid& g = K.grid();
    const std::size_t n = g.voxels();
    DenseMatrix A(3 * n, 3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = g.unindex(i);
        for (std::size_t j = 0; j < n; ++j) {
            const auto b = g.unindex(j);
            for (int p = 0; p < 3; ++p)
                for (int q = 0; q < 3; ++q)
                    A(p * n + i, q * n + j) = (i == j && p == q ? 1.0 : 0.0) - m.m[i] * entry(comp_index(p, q), a, b);
        }
    }
    return A;
}

} // namespace

DenseMatrix chan_x_operator(const ToeplitzKernel& K, const CoefficientMap& m)
{
    const int nx = K.grid().nx;
    return assemble(K, m, [&](int c, const std::array<int, 3>& a, const std::array<int, 3>& b) {
        return chan_x(K, c, ((a[0] - b[0]) % nx + nx) % nx, a[1] - b[1], a[2] - b[2]);
    });
}

DenseMatrix chan_xy_operator(const ToeplitzKernel& K, const CoefficientMap& m)
{
    const int nx = K.grid().nx, ny = K.grid().ny;
    return assemble(K, m, [&](int c, const std::array<int, 3>& a, const std::array<int, 3>& b) {
        return chan_xy(K, c, ((a[0] - b[0]) % nx + nx) % nx, ((a[1] - b[1]) % ny + ny) % ny, a[2] - b[2]);
    });
}

PermittivityMap random_map(const VoxelGrid& grid, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> re(1.0, 13.0), im(0.0, 2.0);
    PermittivityMap map(grid);
    for (std::size_t v = 0; v < grid.voxels(); ++v) map.set(v, cplx(re(rng), -im(rng)));
    return map;
}

double column_error(const DenseMatrix& a, const DenseMatrix& b)
{
    double worst = 0.0;
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
        const double den = b.col(j).norm();
        const double num = (a.col(j) - b.col(j)).norm();
        worst = std::max(worst, den > 0.0 ? num / den : num);
    }
    return worst;
}

} // namespace vie::oracle
