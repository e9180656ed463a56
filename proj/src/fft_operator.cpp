#include "vie/fft_operator.hpp"

#include <fstream>

#include <json.hpp>

#include "fftw_util.hpp"

namespace vie {

struct OperatorPlan::Fft {
    detail::FftPlan forward;
    detail::FftPlan backward;
};

namespace {

void check_length(const VoxelGrid& g, const FieldVector& x)
{
    if (std::size_t(x.size()) != g.unknowns())
        throw ShapeError("field vector has " + std::to_string(x.size()) + " entries, grid needs " +
                         std::to_string(g.unknowns()));
}

} // namespace

OperatorPlan::OperatorPlan(const ToeplitzKernel& kernel) : grid_(kernel.grid())
{
    padded_ = {2 * grid_.nx, 2 * grid_.ny, 2 * grid_.nz};
    const int px = padded_[0], py = padded_[1], pz = padded_[2];

    auto fft = std::make_shared<Fft>();
    fft->forward = detail::FftPlan::many({pz, py, px}, 1, FFTW_FORWARD);
    fft->backward = detail::FftPlan::many({pz, py, px}, 1, FFTW_BACKWARD);
    fft_ = fft;

    // Offset d lands at index d mod 2n; index n on each axis stays zero.
    const VoxelGrid& g = grid_;
    for (int c = 0; c < kNumComps; ++c) {
        std::vector<cplx> buf(padded_size(), cplx{});
        for (int dz = -(g.nz - 1); dz <= g.nz - 1; ++dz) {
            const int kz = (dz + pz) % pz;
            for (int dy = -(g.ny - 1); dy <= g.ny - 1; ++dy) {
                const int ky = (dy + py) % py;
                for (int dx = -(g.nx - 1); dx <= g.nx - 1; ++dx) {
                    const int kx = (dx + px) % px;
                    buf[std::size_t(kx) + std::size_t(px) * (std::size_t(ky) + std::size_t(py) * kz)] =
                        kernel(c, dx, dy, dz);
                }
            }
        }
        fft_->forward.execute(buf.data());
        spectra_[c] = std::move(buf);
    }
}

ApplyContext::ApplyContext(const OperatorPlan& plan)
{
    for (auto& s : spectra_) s.resize(plan.padded_size());
    accum_.resize(plan.padded_size());
}

FieldVector OperatorPlan::apply_n(const FieldVector& x, ApplyContext& ctx) const
{
    check_length(grid_, x);
    const VoxelGrid& g = grid_;
    const std::size_t n = g.voxels();
    const int px = padded_[0], py = padded_[1];
    const std::size_t total = padded_size();
    const double scale = 1.0 / double(total);

    auto padded_index = [&](int ix, int iy, int iz) {
        return std::size_t(ix) + std::size_t(px) * (std::size_t(iy) + std::size_t(py) * std::size_t(iz));
    };

    for (int b = 0; b < 3; ++b) {
        auto& buf = ctx.spectra_[b];
        std::fill(buf.begin(), buf.end(), cplx{});
        const cplx* src = x.data() + b * n;
        for (int iz = 0; iz < g.nz; ++iz)
            for (int iy = 0; iy < g.ny; ++iy) {
                const cplx* line = src + g.index(0, iy, iz);
                std::copy(line, line + g.nx, buf.begin() + std::ptrdiff_t(padded_index(0, iy, iz)));
            }
        fft_->forward.execute(buf.data());
    }

    FieldVector y(x.size());
    for (int a = 0; a < 3; ++a) {
        const cplx* s0 = spectra_[comp_index(a, 0)].data();
        const cplx* s1 = spectra_[comp_index(a, 1)].data();
        const cplx* s2 = spectra_[comp_index(a, 2)].data();
        const cplx* x0 = ctx.spectra_[0].data();
        const cplx* x1 = ctx.spectra_[1].data();
        const cplx* x2 = ctx.spectra_[2].data();
        cplx* acc = ctx.accum_.data();
        for (std::size_t k = 0; k < total; ++k) acc[k] = s0[k] * x0[k] + s1[k] * x1[k] + s2[k] * x2[k];
        fft_->backward.execute(acc);

        cplx* dst = y.data() + a * n;
        for (int iz = 0; iz < g.nz; ++iz)
            for (int iy = 0; iy < g.ny; ++iy) {
                const cplx* line = acc + padded_index(0, iy, iz);
                cplx* out = dst + g.index(0, iy, iz);
                for (int ix = 0; ix < g.nx; ++ix) out[ix] = line[ix] * scale;
            }
    }
    return y;
}

FieldVector OperatorPlan::apply_n(const FieldVector& x) const
{
    ApplyContext ctx(*this);
    return apply_n(x, ctx);
}

FieldVector OperatorPlan::apply_system(const CoefficientMap& coeff, const FieldVector& x, ApplyContext& ctx) const
{
    if (coeff.grid.voxels() != grid_.voxels()) throw ShapeError("coefficient map does not match operator grid");
    FieldVector y = apply_n(x, ctx);
    const std::size_t n = grid_.voxels();
    for (int a = 0; a < 3; ++a)
        for (std::size_t v = 0; v < n; ++v) y[a * n + v] = x[a * n + v] - coeff.m[v] * y[a * n + v];
    return y;
}

FieldVector OperatorPlan::apply_system(const CoefficientMap& coeff, const FieldVector& x) const
{
    ApplyContext ctx(*this);
    return apply_system(coeff, x, ctx);
}

OperatorPlan plan_operator(const ToeplitzKernel& kernel)
{
    return OperatorPlan(kernel);
}

FieldVector rhs_from_incident(const CoefficientMap& coeff, const FieldVector& e_inc, const Physics& physics)
{
    check_length(coeff.grid, e_inc);
    const std::size_t n = coeff.grid.voxels();
    const cplx factor(0.0, physics.omega * physics.eps0());
    FieldVector b(e_inc.size());
    for (int a = 0; a < 3; ++a)
        for (std::size_t v = 0; v < n; ++v) b[a * n + v] = factor * coeff.m[v] * e_inc[a * n + v];
    return b;
}

FieldVector field_from_currents(const OperatorPlan& plan, const FieldVector& currents, const FieldVector& e_inc,
                                const Physics& physics)
{
    check_length(plan.grid(), currents);
    check_length(plan.grid(), e_inc);
    const cplx factor = 1.0 / cplx(0.0, physics.omega * physics.eps0());
    return e_inc + factor * (plan.apply_n(currents) - currents);
}

void write_field(const std::filesystem::path& bin_path, const VoxelGrid& grid, const FieldVector& field,
                 double wavelength)
{
    check_length(grid, field);
    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw Error("cannot open " + bin_path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(field.data()), std::streamsize(field.size() * sizeof(cplx)));

    nlohmann::json meta = {
        {"dims", {grid.nx, grid.ny, grid.nz}},
        {"delta", grid.delta},
        {"origin", grid.origin},
        {"components", {"x", "y", "z"}},
        {"layout", "component-major, x fastest"},
        {"dtype", "complex128-le"},
        {"wavelength", wavelength},
    };
    std::ofstream side(std::filesystem::path(bin_path).replace_extension(".json"));
    side << meta.dump(2) << '\n';
}

FieldDump read_field(const std::filesystem::path& bin_path)
{
    std::ifstream side(std::filesystem::path(bin_path).replace_extension(".json"));
    if (!side) throw Error("missing field sidecar for " + bin_path.string());
    const nlohmann::json meta = nlohmann::json::parse(side);
    const auto dims = meta.at("dims").get<std::array<int, 3>>();
    FieldDump dump;
    dump.grid = VoxelGrid(dims[0], dims[1], dims[2], meta.at("delta").get<double>(), meta.at("origin").get<Vec3>());
    dump.wavelength = meta.at("wavelength").get<double>();
    dump.values.resize(Eigen::Index(dump.grid.unknowns()));

    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw Error("cannot open " + bin_path.string());
    in.read(reinterpret_cast<char*>(dump.values.data()), std::streamsize(dump.values.size() * sizeof(cplx)));
    if (!in) throw Error("truncated field file " + bin_path.string());
    return dump;
}

} // namespace vie
