#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vie/kernel.hpp"

namespace vie {

/// Chan's optimal circulant of a Toeplitz matrix given by its first column
/// t_0..t_{n-1} and first row t_0, t_{-1}..t_{-(n-1)}:
///   c_i = ((n - i)/n) t_i + (i/n) t_{-(n-i)}.
/// T may be a scalar or a matrix type (block level).
template <class T>
std::vector<T> chan_circulant(std::span<const T> first_column, std::span<const T> first_row)
{
    const std::size_t n = first_column.size();
    if (n == 0 || first_row.size() != n) throw DomainError("Toeplitz generator must be non-empty with matching row");
    std::vector<T> c;
    c.reserve(n);
    c.push_back(first_column[0]);
    for (std::size_t i = 1; i < n; ++i) {
        const double wa = double(n - i) / double(n);
        const double wb = double(i) / double(n);
        c.push_back(T(wa * first_column[i] + wb * first_row[n - i]));
    }
    return c;
}

/// Dense circulant matrix with first column c.
DenseMatrix circulant_matrix(std::span<const cplx> c);

enum class PrecLevel { None, OneLevel, ReducedOneLevel, TwoLevel, Blocked };

PrecLevel parse_prec_level(std::string_view name);
std::string_view to_string(PrecLevel level);

struct PrecSummary {
    std::string level;
    std::size_t blocks = 0;    // frequency blocks the preconditioner addresses
    std::size_t stored = 0;    // factorized blocks held in memory
    std::size_t discarded = 0; // blocks routed to the representative
    std::size_t block_dim = 0;
    std::size_t bytes = 0;     // stored * block_dim^2 * 16 (summed over boxes)
    double build_seconds = 0.0;
    std::vector<PrecSummary> boxes;
};

/// Approximate inverse of the system operator.
class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    virtual FieldVector apply(const FieldVector& x) const = 0;
    virtual const VoxelGrid& grid() const = 0;
    virtual std::size_t bytes() const = 0;
    virtual PrecSummary summary() const = 0;
};

struct CirculantOptions {
    /// Refuse to build when the stored blocks would exceed this many bytes.
    std::size_t max_bytes = std::size_t(8) << 30;
    int threads = 1;
};

/// 1-level circulant-block preconditioner: Chan approximation along x,
/// per-frequency dense blocks D_k = I - M~ Lambda_k, LU-factorized.
/// In reduced form only blocks with normalized proxy above tol are stored;
/// all other frequencies reuse the factor of the representative block.
class OneLevelPrec final : public Preconditioner {
public:
    FieldVector apply(const FieldVector& x) const override;
    const VoxelGrid& grid() const override { return grid_; }
    std::size_t bytes() const override;
    PrecSummary summary() const override;

    std::size_t block_dim() const { return block_dim_; }
    std::size_t frequencies() const { return route_.size(); }
    std::size_t stored_blocks() const;
    bool reduced() const { return reduced_; }
    double tolerance() const { return tol_; }

    /// Proxy v_k = D_k(1, ceil(ny/2) ceil(nz/2)) (1-based) of the unfactorized blocks.
    const std::vector<cplx>& proxy() const { return proxy_; }
    std::vector<double> normalized_proxy() const;
    /// 0-based index of the representative block, ceil(nx/2) - 1.
    std::size_t representative() const { return representative_; }
    /// 0-based frequencies whose own factor is stored.
    std::vector<std::size_t> kept_frequencies() const;
    /// Factor index serving frequency k.
    std::size_t route(std::size_t k) const { return route_[k]; }

    double build_seconds() const { return build_seconds_; }

private:
    friend struct OneLevelBuilder;
    struct Impl;

    VoxelGrid grid_;
    std::size_t block_dim_ = 0;
    std::vector<std::shared_ptr<const Eigen::PartialPivLU<DenseMatrix>>> factors_; // per frequency, null if not stored
    std::vector<std::size_t> route_;
    std::vector<cplx> proxy_;
    std::size_t representative_ = 0;
    bool reduced_ = false;
    double tol_ = 0.0;
    double build_seconds_ = 0.0;
    std::shared_ptr<const Impl> impl_;
};

/// Frequency blocks Lambda_k of the x-Chan approximation of N, unfolded as
/// dense (3 ny nz)^2 matrices of D_k = I - M~ Lambda_k. Exposed for tests
/// and the proxy characterization.
DenseMatrix one_level_block(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde, std::size_t k);

OneLevelPrec build_one_level(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde,
                             const CirculantOptions& options = {});

/// Assembles every D_k, extracts the proxy, and factorizes only the kept
/// blocks plus the representative.
OneLevelPrec build_reduced_one_level(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde, double tol = 1e-3,
                                     const CirculantOptions& options = {});

/// Drops stored factors of an existing preconditioner by the proxy rule.
OneLevelPrec reduce_one_level(const OneLevelPrec& prec, double tol = 1e-3);

/// 2-level circulant preconditioner: Chan along x and y, dense (3 nz)^2
/// blocks per (k, l) frequency pair.
class TwoLevelPrec final : public Preconditioner {
public:
    FieldVector apply(const FieldVector& x) const override;
    const VoxelGrid& grid() const override { return grid_; }
    std::size_t bytes() const override;
    PrecSummary summary() const override;

    std::size_t block_dim() const { return block_dim_; }
    std::size_t blocks() const { return factors_.size(); }

private:
    friend struct TwoLevelBuilder;
    struct Impl;

    VoxelGrid grid_;
    std::size_t block_dim_ = 0;
    std::vector<Eigen::PartialPivLU<DenseMatrix>> factors_; // index k + nx * l
    double build_seconds_ = 0.0;
    std::shared_ptr<const Impl> impl_;
};

DenseMatrix two_level_block(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde, std::size_t k, std::size_t l);

TwoLevelPrec build_two_level(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde,
                             const CirculantOptions& options = {});

/// Axis-aligned voxel box [lo, hi) with the preconditioner to build on it.
struct Box {
    std::array<int, 3> lo{};
    std::array<int, 3> hi{};
    std::string label;
    PrecLevel level = PrecLevel::OneLevel;
    std::optional<Homogenization> homogenization; // default by level
    double reduce_tol = 1e-3;

    std::array<int, 3> dims() const { return {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]}; }
    bool contains(int ix, int iy, int iz) const
    {
        return ix >= lo[0] && ix < hi[0] && iy >= lo[1] && iy < hi[1] && iz >= lo[2] && iz < hi[2];
    }
};

struct Partition {
    VoxelGrid grid;
    std::vector<Box> boxes;
    std::size_t uncovered_voxels = 0;
};

/// Validates boxes against the grid: in bounds, non-empty, pairwise disjoint.
Partition partition_boxes(const VoxelGrid& grid, std::vector<Box> boxes);

/// Sub-map of the voxels inside a box, on the box's local grid.
PermittivityMap extract_box(const PermittivityMap& map, const Box& box);

/// Block-diagonal preconditioner over partition boxes; identity elsewhere.
class BlockedPrec final : public Preconditioner {
public:
    FieldVector apply(const FieldVector& x) const override;
    const VoxelGrid& grid() const override { return grid_; }
    std::size_t bytes() const override;
    PrecSummary summary() const override;

    const Partition& partition() const { return partition_; }
    const Preconditioner& box_preconditioner(std::size_t i) const { return *boxes_[i]; }

    /// Gather / scatter between the global field and a box-local field.
    FieldVector restrict_to(std::size_t box, const FieldVector& x) const;
    void extend_into(std::size_t box, const FieldVector& local, FieldVector& x) const;

private:
    friend struct BlockedBuilder;
    VoxelGrid grid_;
    Partition partition_;
    std::vector<std::shared_ptr<const Preconditioner>> boxes_;
    double build_seconds_ = 0.0;
};

BlockedPrec build_blocked(const ToeplitzKernel& kernel, const PermittivityMap& map, const Partition& partition,
                          const CirculantOptions& options = {});

/// Builds the requested single-box level on the whole grid.
std::shared_ptr<const Preconditioner> build_preconditioner(PrecLevel level, const ToeplitzKernel& kernel,
                                                           const CoefficientMap& m_tilde, double reduce_tol,
                                                           const CirculantOptions& options = {});

} // namespace vie
