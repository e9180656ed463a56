#include "vie/kernel.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <mutex>

#include <json.hpp>

#include "quadrature.hpp"

namespace vie {

static_assert(std::endian::native == std::endian::little, "binary dumps assume a little-endian host");

cplx scalar_green(double R, double k0)
{
    if (!(R > 0.0)) throw DomainError("scalar Green's function is singular at R = 0");
    return std::exp(cplx(0.0, -k0 * R)) / (4.0 * kPi * R);
}

Matrix3c dyadic_green(const Vec3& r, double k0)
{
    const double R = norm3(r);
    if (!(R > 0.0)) throw DomainError("dyadic Green's function is singular at r = 0");
    const cplx g = scalar_green(R, k0);
    const cplx jkR(0.0, k0 * R);
    const double R2 = R * R;
    const cplx iso = g * (k0 * k0 - (1.0 + jkR) / R2);
    const cplx rad = g * (3.0 + 3.0 * jkR - k0 * k0 * R2) / R2;

    Matrix3c G;
    for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
            cplx v = rad * (r[a] * r[b] / R2);
            if (a == b) v += iso;
            G(a, b) = v;
            G(b, a) = v;
        }
    return G;
}

CubeGreenIntegral cube_green_integral(double delta, double k0, double tol)
{
    // (1/V) int_cube int_cube g = (2 delta^2 / pi) int_[0,1]^3 e^{-j kappa |t|} / |t| prod(1 - t_i) dt.
    // The unit cube splits into three congruent pyramids (largest coordinate
    // a); with t = a (1, s, w) the Jacobian a^2 cancels the 1/|t| singularity.
    // The static part and the smooth dynamic remainder are summed separately.
    const double kappa = k0 * delta;
    auto evaluate = [&](int order) {
        const detail::GaussRule rule = detail::gauss_legendre01(order);
        double stat = 0.0;
        cplx dyn{};
        for (int ia = 0; ia < order; ++ia) {
            const double a = rule.nodes[ia];
            for (int is = 0; is < order; ++is) {
                const double s = rule.nodes[is];
                for (int iw = 0; iw < order; ++iw) {
                    const double w = rule.nodes[iw];
                    const double rho = std::sqrt(1.0 + s * s + w * w);
                    const double weight = rule.weights[ia] * rule.weights[is] * rule.weights[iw] * a *
                                          (1.0 - a) * (1.0 - a * s) * (1.0 - a * w) / rho;
                    stat += weight;
                    dyn += weight * (std::exp(cplx(0.0, -kappa * a * rho)) - 1.0);
                }
            }
        }
        return 3.0 * (2.0 * delta * delta / kPi) * (cplx(stat, 0.0) + dyn);
    };

    cplx prev = evaluate(4);
    double achieved = 0.0;
    for (int order = 8; order <= 64; order *= 2) {
        const cplx cur = evaluate(order);
        achieved = std::abs(cur - prev) / std::abs(cur);
        if (achieved <= tol) return {cur, achieved, order};
        prev = cur;
    }
    throw BuildError("self-term quadrature did not converge: achieved relative tolerance " +
                     std::to_string(achieved) + ", requested " + std::to_string(tol));
}

Matrix3c self_term(double delta, double k0)
{
    if (!(delta > 0.0)) throw DomainError("voxel pitch must be positive");

    static std::mutex mutex;
    static std::map<std::pair<double, double>, cplx> cache;
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find({delta, k0}); it != cache.end())
            return Matrix3c(it->second * Eigen::Vector3cd::Ones().asDiagonal());
    }

    // <N p, p> = 1 + (1/V) int (k0^2 psi + d_a d_a psi) with psi the potential
    // of the voxel. Cubic symmetry makes the second term isotropic, and
    // lap psi = -k0^2 psi - 1 inside, so the diagonal is 2/3 (1 + k0^2 J).
    const CubeGreenIntegral J = cube_green_integral(delta, k0);
    const cplx diag = (2.0 / 3.0) * (1.0 + k0 * k0 * J.value);

    std::lock_guard lock(mutex);
    cache.emplace(std::pair{delta, k0}, diag);
    return Matrix3c(diag * Eigen::Vector3cd::Ones().asDiagonal());
}

ToeplitzKernel::ToeplitzKernel(const VoxelGrid& grid, double k0) : grid_(grid), k0_(k0)
{
    for (auto& t : tensors_) t.assign(offsets(), cplx{});
}

ToeplitzKernel ToeplitzKernel::slice(int nx, int ny, int nz, const Vec3& origin) const
{
    if (nx > grid_.nx || ny > grid_.ny || nz > grid_.nz)
        throw ShapeError("kernel slice larger than the source kernel");
    ToeplitzKernel out(VoxelGrid(nx, ny, nz, grid_.delta, origin), k0_);
    for (int dz = -(nz - 1); dz <= nz - 1; ++dz)
        for (int dy = -(ny - 1); dy <= ny - 1; ++dy)
            for (int dx = -(nx - 1); dx <= nx - 1; ++dx) {
                const std::size_t src = offset_index(dx, dy, dz);
                const std::size_t dst = out.offset_index(dx, dy, dz);
                for (int c = 0; c < kNumComps; ++c) out.tensors_[c][dst] = tensors_[c][src];
            }
    return out;
}

namespace {

constexpr int kCompAlpha[kNumComps] = {0, 0, 0, 1, 1, 2};
constexpr int kCompBeta[kNumComps] = {0, 1, 2, 1, 2, 2};

Matrix3c near_gauss_element(const Vec3& r, double delta, double k0)
{
    // 3-point Gauss-Legendre per axis over the source voxel.
    static constexpr double nodes[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
    static constexpr double weights[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    Matrix3c acc = Matrix3c::Zero();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                const Vec3 p{r[0] - 0.5 * delta * nodes[i], r[1] - 0.5 * delta * nodes[j], r[2] - 0.5 * delta * nodes[k]};
                acc += weights[i] * weights[j] * weights[k] * dyadic_green(p, k0);
            }
    return acc;
}

} // namespace

ToeplitzKernel assemble_kernel(const VoxelGrid& grid, double k0, const KernelOptions& options)
{
    if (!(k0 > 0.0)) throw DomainError("wavenumber must be positive");
    if (!(k0 * grid.delta < 2.0)) throw DomainError("k0 * delta must be below 2 (under-resolved grid)");

    ToeplitzKernel kernel(grid, k0);
    const double V = grid.voxel_volume();
    const Matrix3c self = self_term(grid.delta, k0);

    for (int dz = -(grid.nz - 1); dz <= grid.nz - 1; ++dz)
        for (int dy = -(grid.ny - 1); dy <= grid.ny - 1; ++dy)
            for (int dx = -(grid.nx - 1); dx <= grid.nx - 1; ++dx) {
                Matrix3c element;
                if (dx == 0 && dy == 0 && dz == 0) {
                    element = self;
                } else {
                    const Vec3 r{grid.delta * dx, grid.delta * dy, grid.delta * dz};
                    const int cheb = std::max({std::abs(dx), std::abs(dy), std::abs(dz)});
                    element = (options.near_neighbor_gauss && cheb == 1) ? near_gauss_element(r, grid.delta, k0)
                                                                         : dyadic_green(r, k0);
                    element *= V;
                }
                const std::size_t idx = kernel.offset_index(dx, dy, dz);
                for (int c = 0; c < kNumComps; ++c) kernel.tensor(c)[idx] = element(kCompAlpha[c], kCompBeta[c]);
            }
    return kernel;
}

DenseMatrix dense_kernel(const ToeplitzKernel& kernel)
{
    const VoxelGrid& g = kernel.grid();
    const std::size_t n = g.voxels();
    if (3 * n > kDenseLimit)
        throw DomainError("dense operator refused: 3N = " + std::to_string(3 * n) + " exceeds " +
                          std::to_string(kDenseLimit));

    DenseMatrix N(3 * n, 3 * n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto [jx, jy, jz] = g.unindex(j);
        for (std::size_t i = 0; i < n; ++i) {
            const auto [ix, iy, iz] = g.unindex(i);
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    N(a * n + i, b * n + j) = kernel.entry(a, b, ix - jx, iy - jy, iz - jz);
        }
    }
    return N;
}

DenseMatrix dense_operator(const ToeplitzKernel& kernel, const CoefficientMap& coeff)
{
    if (coeff.grid.voxels() != kernel.grid().voxels()) throw ShapeError("coefficient map does not match kernel grid");
    DenseMatrix A = -dense_kernel(kernel);
    const std::size_t n = coeff.m.size();
    for (int a = 0; a < 3; ++a)
        for (std::size_t i = 0; i < n; ++i) A.row(a * n + i) *= coeff.m[i];
    A.diagonal().array() += 1.0;
    return A;
}

void write_kernel(const ToeplitzKernel& kernel, const std::filesystem::path& bin_path)
{
    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw Error("cannot open " + bin_path.string() + " for writing");
    for (int c = 0; c < kNumComps; ++c) {
        const auto& t = kernel.tensor(c);
        out.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.size() * sizeof(cplx)));
    }

    const VoxelGrid& g = kernel.grid();
    nlohmann::json meta = {
        {"dims", {g.nx, g.ny, g.nz}},
        {"offset_dims", {kernel.ex(), kernel.ey(), kernel.ez()}},
        {"delta", g.delta},
        {"origin", g.origin},
        {"k0", kernel.k0()},
        {"components", {"xx", "xy", "xz", "yy", "yz", "zz"}},
        {"dtype", "complex128-le"},
        {"order", "C (dz slowest, dx fastest)"},
    };
    std::ofstream side(std::filesystem::path(bin_path).replace_extension(".json"));
    side << meta.dump(2) << '\n';
}

ToeplitzKernel read_kernel(const std::filesystem::path& bin_path)
{
    std::ifstream side(std::filesystem::path(bin_path).replace_extension(".json"));
    if (!side) throw Error("missing kernel sidecar for " + bin_path.string());
    const nlohmann::json meta = nlohmann::json::parse(side);
    const auto dims = meta.at("dims").get<std::array<int, 3>>();
    VoxelGrid g(dims[0], dims[1], dims[2], meta.at("delta").get<double>(), meta.at("origin").get<Vec3>());
    ToeplitzKernel kernel(g, meta.at("k0").get<double>());

    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw Error("cannot open " + bin_path.string());
    for (int c = 0; c < kNumComps; ++c) {
        auto& t = kernel.tensor(c);
        in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.size() * sizeof(cplx)));
        if (!in) throw Error("truncated kernel file " + bin_path.string());
    }
    return kernel;
}

} // namespace vie
