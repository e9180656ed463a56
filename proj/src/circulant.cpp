#include "vie/circulant.hpp"

#include <chrono>

#include "fftw_util.hpp"
#include "parallel.hpp"

namespace vie {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_length(const VoxelGrid& g, const FieldVector& x)
{
    if (std::size_t(x.size()) != g.unknowns())
        throw ShapeError("field vector has " + std::to_string(x.size()) + " entries, preconditioner expects " +
                         std::to_string(g.unknowns()));
}

void check_coefficient_grid(const ToeplitzKernel& kernel, const CoefficientMap& m)
{
    const VoxelGrid& a = kernel.grid();
    const VoxelGrid& b = m.grid;
    if (a.nx != b.nx || a.ny != b.ny || a.nz != b.nz)
        throw ShapeError("homogenized coefficient map does not match the kernel grid");
}

// Chan weights along one level, combined per offset: the circulant generator
// at shift s is w_lo(s) * t(s) + w_hi(s) * t(s - n).
struct ChanWeights {
    double lo;
    double hi;
};

ChanWeights chan_weights(int s, int n)
{
    return {double(n - s) / double(n), s == 0 ? 0.0 : double(s) / double(n)};
}

// Lambda_k(dy, dz) for every x-frequency k: Chan along x of each generator
// followed by a length-nx DFT. Layout k + nx * (oy + ey * oz).
struct XFrequencyGenerators {
    int nx = 0, ny = 0, nz = 0, ey = 0, ez = 0;
    std::array<std::vector<cplx>, kNumComps> data;

    cplx operator()(int comp, std::size_t k, int dy, int dz) const
    {
        return data[comp][k + std::size_t(nx) * (std::size_t(dy + ny - 1) + std::size_t(ey) * std::size_t(dz + nz - 1))];
    }
};

XFrequencyGenerators x_frequency_generators(const ToeplitzKernel& kernel)
{
    const VoxelGrid& g = kernel.grid();
    XFrequencyGenerators out;
    out.nx = g.nx;
    out.ny = g.ny;
    out.nz = g.nz;
    out.ey = kernel.ey();
    out.ez = kernel.ez();
    const std::size_t lines = std::size_t(out.ey) * std::size_t(out.ez);
    const detail::FftPlan fft = detail::FftPlan::many({g.nx}, int(lines), FFTW_FORWARD);

    for (int c = 0; c < kNumComps; ++c) {
        std::vector<cplx> buf(lines * std::size_t(g.nx));
        for (int dz = -(g.nz - 1); dz <= g.nz - 1; ++dz)
            for (int dy = -(g.ny - 1); dy <= g.ny - 1; ++dy) {
                const std::size_t line = std::size_t(dy + g.ny - 1) + std::size_t(out.ey) * std::size_t(dz + g.nz - 1);
                cplx* dst = buf.data() + line * std::size_t(g.nx);
                for (int s = 0; s < g.nx; ++s) {
                    const ChanWeights w = chan_weights(s, g.nx);
                    cplx v = w.lo * kernel(c, s, dy, dz);
                    if (s > 0) v += w.hi * kernel(c, s - g.nx, dy, dz);
                    dst[s] = v;
                }
            }
        fft.execute(buf.data());
        out.data[c] = std::move(buf);
    }
    return out;
}

// Lambda_{k,l}(dz): Chan along y of the x-frequency generators and a
// length-ny DFT. Layout k + nx * (l + ny * oz).
struct XYFrequencyGenerators {
    int nx = 0, ny = 0, nz = 0;
    std::array<std::vector<cplx>, kNumComps> data;

    cplx operator()(int comp, std::size_t k, std::size_t l, int dz) const
    {
        return data[comp][k + std::size_t(nx) * (l + std::size_t(ny) * std::size_t(dz + nz - 1))];
    }
};

XYFrequencyGenerators xy_frequency_generators(const ToeplitzKernel& kernel)
{
    const XFrequencyGenerators gx = x_frequency_generators(kernel);
    const int nx = gx.nx, ny = gx.ny, nz = gx.nz;
    XYFrequencyGenerators out;
    out.nx = nx;
    out.ny = ny;
    out.nz = nz;
    const int ez = 2 * nz - 1;
    // Batched 2-D transform over (y, x) slabs; only the y direction is
    // transformed here, so use a strided 1-D plan along y instead.
    const std::size_t slab = std::size_t(nx) * std::size_t(ny);
    std::vector<cplx> line(ny);
    const detail::FftPlan fft = detail::FftPlan::many({ny}, 1, FFTW_FORWARD);

    for (int c = 0; c < kNumComps; ++c) {
        std::vector<cplx> buf(slab * std::size_t(ez));
        for (int dz = -(nz - 1); dz <= nz - 1; ++dz)
            for (int k = 0; k < nx; ++k) {
                for (int s = 0; s < ny; ++s) {
                    const ChanWeights w = chan_weights(s, ny);
                    cplx v = w.lo * gx(c, std::size_t(k), s, dz);
                    if (s > 0) v += w.hi * gx(c, std::size_t(k), s - ny, dz);
                    line[s] = v;
                }
                fft.execute(line.data());
                for (int l = 0; l < ny; ++l)
                    buf[std::size_t(k) + std::size_t(nx) * (std::size_t(l) + std::size_t(ny) * std::size_t(dz + nz - 1))] =
                        line[l];
            }
        out.data[c] = std::move(buf);
    }
    return out;
}

// Entry (row, col) of D_k = I - M~ Lambda_k with rows ordered
// alpha * ny * nz + iy + ny * iz.
struct OneLevelBlockAssembler {
    const XFrequencyGenerators& gen;
    const CoefficientMap& m_tilde;

    std::size_t dim() const { return 3 * std::size_t(gen.ny) * std::size_t(gen.nz); }

    cplx entry(std::size_t k, std::size_t row, std::size_t col) const
    {
        const std::size_t plane = std::size_t(gen.ny) * std::size_t(gen.nz);
        const int a = int(row / plane), b = int(col / plane);
        const std::size_t ri = row % plane, ci = col % plane;
        const int iy = int(ri % gen.ny), iz = int(ri / gen.ny);
        const int jy = int(ci % gen.ny), jz = int(ci / gen.ny);
        const cplx lam = gen(comp_index(a, b), k, iy - jy, iz - jz);
        return (row == col ? 1.0 : 0.0) - m_tilde.at(0, iy, iz) * lam;
    }

    DenseMatrix block(std::size_t k) const
    {
        const std::size_t n = dim();
        DenseMatrix D(n, n);
        for (std::size_t col = 0; col < n; ++col)
            for (std::size_t row = 0; row < n; ++row) D(row, col) = entry(k, row, col);
        return D;
    }
};

std::shared_ptr<const Eigen::PartialPivLU<DenseMatrix>> factorize(const DenseMatrix& D, const std::string& what)
{
    auto lu = std::make_shared<Eigen::PartialPivLU<DenseMatrix>>(D);
    const double rc = lu->rcond();
    if (!(rc > 1e-14) || !lu->matrixLU().allFinite())
        throw BuildError(what + " is singular (rcond " + std::to_string(rc) + ")");
    return lu;
}

std::size_t proxy_column(const VoxelGrid& g)
{
    // 1-based column ceil(ny/2) * ceil(nz/2).
    const std::size_t cy = std::size_t((g.ny + 1) / 2);
    const std::size_t cz = std::size_t((g.nz + 1) / 2);
    return cy * cz - 1;
}

std::vector<double> normalize_proxy(const std::vector<cplx>& v)
{
    double vmax = 0.0;
    for (const cplx& x : v) vmax = std::max(vmax, std::abs(x));
    std::vector<double> out(v.size(), 0.0);
    if (vmax > 0.0)
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::abs(v[i]) / vmax;
    return out;
}

std::vector<bool> kept_mask(const std::vector<double>& vhat, double tol, std::size_t representative)
{
    std::vector<bool> keep(vhat.size());
    for (std::size_t k = 0; k < vhat.size(); ++k) keep[k] = tol <= 0.0 || vhat[k] > tol || k == representative;
    return keep;
}

class IdentityPrec final : public Preconditioner {
public:
    explicit IdentityPrec(const VoxelGrid& g) : grid_(g) {}
    FieldVector apply(const FieldVector& x) const override { return x; }
    const VoxelGrid& grid() const override { return grid_; }
    std::size_t bytes() const override { return 0; }
    PrecSummary summary() const override
    {
        PrecSummary s;
        s.level = "none";
        return s;
    }

private:
    VoxelGrid grid_;
};

} // namespace

DenseMatrix circulant_matrix(std::span<const cplx> c)
{
    const std::size_t n = c.size();
    DenseMatrix C(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) C(i, j) = c[(i + n - j) % n];
    return C;
}

PrecLevel parse_prec_level(std::string_view name)
{
    if (name == "none") return PrecLevel::None;
    if (name == "one-level") return PrecLevel::OneLevel;
    if (name == "reduced-one-level") return PrecLevel::ReducedOneLevel;
    if (name == "two-level") return PrecLevel::TwoLevel;
    if (name == "blocked") return PrecLevel::Blocked;
    throw ConfigError("unknown preconditioner '" + std::string(name) +
                      "' (none | one-level | reduced-one-level | two-level | blocked)");
}

std::string_view to_string(PrecLevel level)
{
    switch (level) {
    case PrecLevel::None: return "none";
    case PrecLevel::OneLevel: return "one-level";
    case PrecLevel::ReducedOneLevel: return "reduced-one-level";
    case PrecLevel::TwoLevel: return "two-level";
    case PrecLevel::Blocked: return "blocked";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// 1-level

struct OneLevelPrec::Impl {
    detail::FftPlan forward;
    detail::FftPlan backward;
};

struct OneLevelBuilder {
    static OneLevelPrec make(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde,
                             std::optional<double> reduce_tol, const CirculantOptions& options)
    {
        const auto t0 = Clock::now();
        check_coefficient_grid(kernel, m_tilde);
        if (!m_tilde.constant_along_x())
            throw BuildError("1-level circulant needs a coefficient map constant along x; homogenize first");

        const VoxelGrid& g = kernel.grid();
        const XFrequencyGenerators gen = x_frequency_generators(kernel);
        const OneLevelBlockAssembler assembler{gen, m_tilde};
        const std::size_t nx = std::size_t(g.nx);
        const std::size_t dim = assembler.dim();

        // Proxy from the unfactorized blocks; the kept set is fixed before any LU.
        std::vector<cplx> proxy(nx);
        const std::size_t pcol = proxy_column(g);
        for (std::size_t k = 0; k < nx; ++k) proxy[k] = assembler.entry(k, 0, pcol);

        const std::size_t representative = (nx + 1) / 2 - 1;
        std::vector<bool> keep(nx, true);
        if (reduce_tol) keep = kept_mask(normalize_proxy(proxy), *reduce_tol, representative);

        std::size_t stored = 0;
        for (bool b : keep) stored += b ? 1 : 0;
        const std::size_t bytes = stored * dim * dim * sizeof(cplx);
        if (bytes > options.max_bytes)
            throw BuildError("1-level preconditioner needs " + std::to_string(bytes) + " bytes (cap " +
                             std::to_string(options.max_bytes) + "); use the reduced or 2-level preconditioner");

        OneLevelPrec prec;
        prec.grid_ = g;
        prec.block_dim_ = dim;
        prec.factors_.resize(nx);
        detail::parallel_for(nx, options.threads, [&](std::size_t k) {
            if (keep[k]) prec.factors_[k] = factorize(assembler.block(k), "1-level block D_" + std::to_string(k));
        });
        prec.route_.resize(nx);
        for (std::size_t k = 0; k < nx; ++k) prec.route_[k] = keep[k] ? k : representative;
        prec.proxy_ = std::move(proxy);
        prec.representative_ = representative;
        prec.reduced_ = reduce_tol.has_value();
        prec.tol_ = reduce_tol.value_or(0.0);
        prec.impl_ = plans(g);
        prec.build_seconds_ = seconds_since(t0);
        return prec;
    }

    static OneLevelPrec reduce(const OneLevelPrec& full, double tol)
    {
        if (tol < 0.0 || tol > 1.0) throw DomainError("reduction tolerance must lie in [0, 1]");
        const auto t0 = Clock::now();
        OneLevelPrec prec = full;
        const std::size_t nx = full.route_.size();
        const std::vector<bool> keep = kept_mask(normalize_proxy(full.proxy_), tol, full.representative_);
        for (std::size_t k = 0; k < nx; ++k) {
            if (keep[k] && full.factors_[k]) {
                prec.route_[k] = k;
            } else {
                prec.factors_[k].reset();
                prec.route_[k] = full.representative_;
            }
        }
        prec.reduced_ = true;
        prec.tol_ = tol;
        prec.build_seconds_ = full.build_seconds_ + seconds_since(t0);
        return prec;
    }

    static std::shared_ptr<const OneLevelPrec::Impl> plans(const VoxelGrid& g)
    {
        // Canonical layout is already a batch of 3 ny nz contiguous x-lines.
        auto impl = std::make_shared<OneLevelPrec::Impl>();
        const int lines = 3 * g.ny * g.nz;
        impl->forward = detail::FftPlan::many({g.nx}, lines, FFTW_FORWARD);
        impl->backward = detail::FftPlan::many({g.nx}, lines, FFTW_BACKWARD);
        return impl;
    }
};

DenseMatrix one_level_block(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde, std::size_t k)
{
    check_coefficient_grid(kernel, m_tilde);
    const XFrequencyGenerators gen = x_frequency_generators(kernel);
    return OneLevelBlockAssembler{gen, m_tilde}.block(k);
}

OneLevelPrec build_one_level(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde,
                             const CirculantOptions& options)
{
    return OneLevelBuilder::make(kernel, m_tilde, std::nullopt, options);
}

OneLevelPrec build_reduced_one_level(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde, double tol,
                                     const CirculantOptions& options)
{
    if (tol < 0.0 || tol > 1.0) throw DomainError("reduction tolerance must lie in [0, 1]");
    return OneLevelBuilder::make(kernel, m_tilde, tol, options);
}

OneLevelPrec reduce_one_level(const OneLevelPrec& prec, double tol)
{
    return OneLevelBuilder::reduce(prec, tol);
}

FieldVector OneLevelPrec::apply(const FieldVector& x) const
{
    check_length(grid_, x);
    const std::size_t nx = std::size_t(grid_.nx);
    FieldVector w = x;
    impl_->forward.execute(w.data());

    Eigen::VectorXcd r(static_cast<Eigen::Index>(block_dim_));
    for (std::size_t k = 0; k < nx; ++k) {
        for (std::size_t j = 0; j < block_dim_; ++j) r[Eigen::Index(j)] = w[Eigen::Index(k + nx * j)];
        const Eigen::VectorXcd z = factors_[route_[k]]->solve(r);
        for (std::size_t j = 0; j < block_dim_; ++j) w[Eigen::Index(k + nx * j)] = z[Eigen::Index(j)];
    }

    impl_->backward.execute(w.data());
    w /= double(nx);
    return w;
}

std::size_t OneLevelPrec::stored_blocks() const
{
    std::size_t n = 0;
    for (const auto& f : factors_) n += f ? 1 : 0;
    return n;
}

std::size_t OneLevelPrec::bytes() const
{
    return stored_blocks() * block_dim_ * block_dim_ * sizeof(cplx);
}

std::vector<double> OneLevelPrec::normalized_proxy() const
{
    return normalize_proxy(proxy_);
}

std::vector<std::size_t> OneLevelPrec::kept_frequencies() const
{
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < factors_.size(); ++k)
        if (factors_[k]) kept.push_back(k);
    return kept;
}

PrecSummary OneLevelPrec::summary() const
{
    PrecSummary s;
    s.level = reduced_ ? "reduced-one-level" : "one-level";
    s.blocks = route_.size();
    s.stored = stored_blocks();
    s.discarded = s.blocks - s.stored;
    s.block_dim = block_dim_;
    s.bytes = bytes();
    s.build_seconds = build_seconds_;
    return s;
}

// ---------------------------------------------------------------------------
// 2-level

struct TwoLevelPrec::Impl {
    detail::FftPlan forward;
    detail::FftPlan backward;
};

namespace {

struct TwoLevelBlockAssembler {
    const XYFrequencyGenerators& gen;
    const CoefficientMap& m_tilde;

    std::size_t dim() const { return 3 * std::size_t(gen.nz); }

    DenseMatrix block(std::size_t k, std::size_t l) const
    {
        const std::size_t n = dim();
        const std::size_t nz = std::size_t(gen.nz);
        DenseMatrix D(n, n);
        for (std::size_t col = 0; col < n; ++col)
            for (std::size_t row = 0; row < n; ++row) {
                const int a = int(row / nz), b = int(col / nz);
                const int iz = int(row % nz), jz = int(col % nz);
                const cplx lam = gen(comp_index(a, b), k, l, iz - jz);
                D(row, col) = (row == col ? 1.0 : 0.0) - m_tilde.at(0, 0, iz) * lam;
            }
        return D;
    }
};

} // namespace

struct TwoLevelBuilder {
    static TwoLevelPrec make(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde,
                             const CirculantOptions& options)
    {
        const auto t0 = Clock::now();
        check_coefficient_grid(kernel, m_tilde);
        if (!m_tilde.constant_along_xy())
            throw BuildError("2-level circulant needs a coefficient map constant along x and y; use mode homogenization");

        const VoxelGrid& g = kernel.grid();
        const XYFrequencyGenerators gen = xy_frequency_generators(kernel);
        const TwoLevelBlockAssembler assembler{gen, m_tilde};
        const std::size_t count = std::size_t(g.nx) * std::size_t(g.ny);
        const std::size_t dim = assembler.dim();
        const std::size_t bytes = count * dim * dim * sizeof(cplx);
        if (bytes > options.max_bytes)
            throw BuildError("2-level preconditioner needs " + std::to_string(bytes) + " bytes (cap " +
                             std::to_string(options.max_bytes) + ")");

        std::vector<std::shared_ptr<const Eigen::PartialPivLU<DenseMatrix>>> lus(count);
        detail::parallel_for(count, options.threads, [&](std::size_t idx) {
            const std::size_t k = idx % std::size_t(g.nx), l = idx / std::size_t(g.nx);
            lus[idx] = factorize(assembler.block(k, l),
                                 "2-level block D_(" + std::to_string(k) + "," + std::to_string(l) + ")");
        });

        TwoLevelPrec prec;
        prec.grid_ = g;
        prec.block_dim_ = dim;
        prec.factors_.reserve(count);
        for (auto& lu : lus) prec.factors_.push_back(*lu);

        auto impl = std::make_shared<TwoLevelPrec::Impl>();
        impl->forward = detail::FftPlan::many({g.ny, g.nx}, 3 * g.nz, FFTW_FORWARD);
        impl->backward = detail::FftPlan::many({g.ny, g.nx}, 3 * g.nz, FFTW_BACKWARD);
        prec.impl_ = impl;
        prec.build_seconds_ = seconds_since(t0);
        return prec;
    }
};

DenseMatrix two_level_block(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde, std::size_t k, std::size_t l)
{
    check_coefficient_grid(kernel, m_tilde);
    const XYFrequencyGenerators gen = xy_frequency_generators(kernel);
    return TwoLevelBlockAssembler{gen, m_tilde}.block(k, l);
}

TwoLevelPrec build_two_level(const ToeplitzKernel& kernel, const CoefficientMap& m_tilde,
                             const CirculantOptions& options)
{
    return TwoLevelBuilder::make(kernel, m_tilde, options);
}

FieldVector TwoLevelPrec::apply(const FieldVector& x) const
{
    check_length(grid_, x);
    const std::size_t plane = std::size_t(grid_.nx) * std::size_t(grid_.ny);
    FieldVector w = x;
    impl_->forward.execute(w.data());

    Eigen::VectorXcd r(static_cast<Eigen::Index>(block_dim_));
    for (std::size_t f = 0; f < plane; ++f) {
        for (std::size_t j = 0; j < block_dim_; ++j) r[Eigen::Index(j)] = w[Eigen::Index(f + plane * j)];
        const Eigen::VectorXcd z = factors_[f].solve(r);
        for (std::size_t j = 0; j < block_dim_; ++j) w[Eigen::Index(f + plane * j)] = z[Eigen::Index(j)];
    }

    impl_->backward.execute(w.data());
    w /= double(plane);
    return w;
}

std::size_t TwoLevelPrec::bytes() const
{
    return factors_.size() * block_dim_ * block_dim_ * sizeof(cplx);
}

PrecSummary TwoLevelPrec::summary() const
{
    PrecSummary s;
    s.level = "two-level";
    s.blocks = factors_.size();
    s.stored = factors_.size();
    s.block_dim = block_dim_;
    s.bytes = bytes();
    s.build_seconds = build_seconds_;
    return s;
}

// ---------------------------------------------------------------------------
// Blocked

Partition partition_boxes(const VoxelGrid& grid, std::vector<Box> boxes)
{
    std::string problems;
    const std::array<int, 3> dims{grid.nx, grid.ny, grid.nz};
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const Box& b = boxes[i];
        for (int a = 0; a < 3; ++a) {
            if (b.lo[a] < 0 || b.hi[a] > dims[a] || b.lo[a] >= b.hi[a]) {
                problems += "box " + std::to_string(i) + " ('" + b.label + "') out of bounds or empty; ";
                break;
            }
        }
    }
    for (std::size_t i = 0; i < boxes.size(); ++i)
        for (std::size_t j = i + 1; j < boxes.size(); ++j) {
            bool overlap = true;
            for (int a = 0; a < 3; ++a)
                overlap = overlap && boxes[i].lo[a] < boxes[j].hi[a] && boxes[j].lo[a] < boxes[i].hi[a];
            if (overlap)
                problems += "boxes " + std::to_string(i) + " ('" + boxes[i].label + "') and " + std::to_string(j) +
                            " ('" + boxes[j].label + "') overlap; ";
        }
    if (!problems.empty()) throw DomainError("invalid partition: " + problems);

    Partition p{grid, std::move(boxes), 0};
    std::size_t covered = 0;
    for (const Box& b : p.boxes) {
        const auto d = b.dims();
        covered += std::size_t(d[0]) * std::size_t(d[1]) * std::size_t(d[2]);
    }
    p.uncovered_voxels = grid.voxels() - covered;
    return p;
}

PermittivityMap extract_box(const PermittivityMap& map, const Box& box)
{
    const VoxelGrid& g = map.grid();
    const auto d = box.dims();
    const Vec3 origin{g.origin[0] + g.delta * box.lo[0], g.origin[1] + g.delta * box.lo[1],
                      g.origin[2] + g.delta * box.lo[2]};
    PermittivityMap sub(VoxelGrid(d[0], d[1], d[2], g.delta, origin));
    for (int iz = 0; iz < d[2]; ++iz)
        for (int iy = 0; iy < d[1]; ++iy)
            for (int ix = 0; ix < d[0]; ++ix)
                sub.set(ix, iy, iz, map.at(box.lo[0] + ix, box.lo[1] + iy, box.lo[2] + iz));
    return sub;
}

std::shared_ptr<const Preconditioner> build_preconditioner(PrecLevel level, const ToeplitzKernel& kernel,
                                                           const CoefficientMap& m_tilde, double reduce_tol,
                                                           const CirculantOptions& options)
{
    switch (level) {
    case PrecLevel::None: return std::make_shared<IdentityPrec>(kernel.grid());
    case PrecLevel::OneLevel: return std::make_shared<OneLevelPrec>(build_one_level(kernel, m_tilde, options));
    case PrecLevel::ReducedOneLevel:
        return std::make_shared<OneLevelPrec>(build_reduced_one_level(kernel, m_tilde, reduce_tol, options));
    case PrecLevel::TwoLevel: return std::make_shared<TwoLevelPrec>(build_two_level(kernel, m_tilde, options));
    case PrecLevel::Blocked: break;
    }
    throw ConfigError("blocked preconditioner needs a partition; use build_blocked");
}

struct BlockedBuilder {
    static BlockedPrec make(const ToeplitzKernel& kernel, const PermittivityMap& map, const Partition& partition,
                            const CirculantOptions& options)
    {
        const auto t0 = Clock::now();
        const VoxelGrid& g = kernel.grid();
        if (!(partition.grid == g) || !(map.grid() == g)) throw ShapeError("partition, map and kernel grids differ");

        BlockedPrec prec;
        prec.grid_ = g;
        prec.partition_ = partition;
        for (const Box& box : partition.boxes) {
            const auto d = box.dims();
            const PermittivityMap sub = extract_box(map, box);
            const ToeplitzKernel sub_kernel = kernel.slice(d[0], d[1], d[2], sub.grid().origin);
            const Homogenization h = box.homogenization.value_or(
                box.level == PrecLevel::TwoLevel ? Homogenization::Mode : Homogenization::RealMeanX);
            const CoefficientMap m_tilde = homogenize(sub, h);
            prec.boxes_.push_back(build_preconditioner(box.level, sub_kernel, m_tilde, box.reduce_tol, options));
        }
        prec.build_seconds_ = seconds_since(t0);
        return prec;
    }
};

BlockedPrec build_blocked(const ToeplitzKernel& kernel, const PermittivityMap& map, const Partition& partition,
                          const CirculantOptions& options)
{
    return BlockedBuilder::make(kernel, map, partition, options);
}

FieldVector BlockedPrec::restrict_to(std::size_t box, const FieldVector& x) const
{
    check_length(grid_, x);
    const Box& b = partition_.boxes.at(box);
    const auto d = b.dims();
    const VoxelGrid& local = boxes_[box]->grid();
    const std::size_t n = grid_.voxels(), nb = local.voxels();
    FieldVector out(Eigen::Index(3 * nb));
    for (int a = 0; a < 3; ++a)
        for (int iz = 0; iz < d[2]; ++iz)
            for (int iy = 0; iy < d[1]; ++iy)
                for (int ix = 0; ix < d[0]; ++ix)
                    out[Eigen::Index(a * nb + local.index(ix, iy, iz))] =
                        x[Eigen::Index(a * n + grid_.index(b.lo[0] + ix, b.lo[1] + iy, b.lo[2] + iz))];
    return out;
}

void BlockedPrec::extend_into(std::size_t box, const FieldVector& local_x, FieldVector& x) const
{
    check_length(grid_, x);
    const Box& b = partition_.boxes.at(box);
    const auto d = b.dims();
    const VoxelGrid& local = boxes_[box]->grid();
    const std::size_t n = grid_.voxels(), nb = local.voxels();
    for (int a = 0; a < 3; ++a)
        for (int iz = 0; iz < d[2]; ++iz)
            for (int iy = 0; iy < d[1]; ++iy)
                for (int ix = 0; ix < d[0]; ++ix)
                    x[Eigen::Index(a * n + grid_.index(b.lo[0] + ix, b.lo[1] + iy, b.lo[2] + iz))] =
                        local_x[Eigen::Index(a * nb + local.index(ix, iy, iz))];
}

FieldVector BlockedPrec::apply(const FieldVector& x) const
{
    FieldVector y = x;
    for (std::size_t i = 0; i < boxes_.size(); ++i) extend_into(i, boxes_[i]->apply(restrict_to(i, x)), y);
    return y;
}

std::size_t BlockedPrec::bytes() const
{
    std::size_t total = 0;
    for (const auto& b : boxes_) total += b->bytes();
    return total;
}

PrecSummary BlockedPrec::summary() const
{
    PrecSummary s;
    s.level = "blocked";
    for (std::size_t i = 0; i < boxes_.size(); ++i) {
        PrecSummary child = boxes_[i]->summary();
        s.blocks += child.blocks;
        s.stored += child.stored;
        s.discarded += child.discarded;
        s.boxes.push_back(std::move(child));
    }
    s.bytes = bytes();
    s.build_seconds = build_seconds_;
    return s;
}

} // namespace vie
