#pragma once

#include <span>

#include "vie/kernel.hpp"

namespace vie::oracle {

/// Dense Toeplitz matrix from first column and first row (row[0] ignored).
DenseMatrix toeplitz(std::span<const cplx> column, std::span<const cplx> row);

/// Closest circulant to T in the Frobenius norm by a least-squares solve over
/// the n-dimensional circulant basis (no closed form used).
std::vector<cplx> frobenius_circulant(const DenseMatrix& T);

/// Dense N assembled pair by pair from dyadic_green and self_term.
DenseMatrix brute_force_kernel(const VoxelGrid& grid, double k0);

/// Dense I - M~ C, C the x-circulant (Chan) version of N, built entry by entry.
DenseMatrix chan_x_operator(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde);

/// Same with the Chan approximation applied along x and then y.
DenseMatrix chan_xy_operator(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde);

/// Random complex permittivities with eps' in [1, 13] and eps'' in [0, 2].
PermittivityMap random_map(const VoxelGrid& grid, unsigned seed);

/// Largest column-wise relative error max_j |a_j - b_j| / |b_j|.
double column_error(const DenseMatrix& a, const DenseMatrix& b);

} // namespace vie::oracle
