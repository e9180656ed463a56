#include "vie/photonics.hpp"

#include <cmath>
#include <functional>

namespace vie {

namespace {

// Core shape in voxel index space; the map gets core_eps where true.
using Shape = std::function<bool(int ix, int iy, int iz)>;

PermittivityMap paint(const VoxelGrid& grid, cplx core_eps, const Shape& shape)
{
    PermittivityMap map(grid);
    for (int iz = 0; iz < grid.nz; ++iz)
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix)
                if (shape(ix, iy, iz)) map.set(ix, iy, iz, core_eps);
    return map;
}

void check_common(const DeviceSpec& spec)
{
    if (!(spec.wavelength > 0.0)) throw DomainError("wavelength must be positive");
    if (!(spec.core_eps.real() > 0.0) || spec.core_eps.imag() > 0.0)
        throw DomainError("core permittivity must have eps' > 0 and eps'' >= 0");
    if (spec.absorber.length < 0.0) throw DomainError("absorber length must be non-negative");
    const double vpw = spec.lambda_int() / spec.pitch();
    if (vpw < 10.0 - 1e-9)
        throw DomainError("resolution of " + std::to_string(vpw) + " voxels per interior wavelength is below 10");
}

int absorber_voxels(const DeviceSpec& spec)
{
    if (spec.absorber.length == 0.0) return 0;
    return voxel_count(spec.absorber.length * spec.lambda_int(), spec.pitch());
}

// Extra trailing voxels that make nx 5-smooth.
int smooth_padding(const DeviceSpec& spec, int nx)
{
    return spec.smooth_dims ? smooth_count(nx) - nx : 0;
}

PermittivityMap with_absorbers(PermittivityMap map, const DeviceSpec& spec, int voxels, bool both_ends)
{
    if (voxels == 0) return map;
    if (both_ends) map = append_absorber(map, End::LowX, voxels, spec.absorber.exponent, spec.absorber.max_loss);
    return append_absorber(map, End::HighX, voxels, spec.absorber.exponent, spec.absorber.max_loss);
}

Box make_box(std::array<int, 3> lo, std::array<int, 3> hi, std::string label, PrecLevel level)
{
    Box b;
    b.lo = lo;
    b.hi = hi;
    b.label = std::move(label);
    b.level = level;
    return b;
}

} // namespace

DeviceKind parse_device_kind(std::string_view name)
{
    if (name == "waveguide") return DeviceKind::Waveguide;
    if (name == "bragg") return DeviceKind::Bragg;
    if (name == "disk") return DeviceKind::DiskResonator;
    if (name == "coupler") return DeviceKind::DirectionalCoupler;
    throw ConfigError("unknown device '" + std::string(name) + "' (waveguide | bragg | disk | coupler)");
}

std::string_view to_string(DeviceKind kind)
{
    switch (kind) {
    case DeviceKind::Waveguide: return "waveguide";
    case DeviceKind::Bragg: return "bragg";
    case DeviceKind::DiskResonator: return "disk";
    case DeviceKind::DirectionalCoupler: return "coupler";
    }
    return "?";
}

double DeviceSpec::lambda_int() const
{
    return wavelength / std::sqrt(core_eps.real());
}

double DeviceSpec::pitch() const
{
    if (delta) {
        if (!(*delta > 0.0)) throw DomainError("voxel pitch must be positive");
        return *delta;
    }
    if (!(voxels_per_wavelength > 0.0)) throw DomainError("voxels per wavelength must be positive");
    return lambda_int() / voxels_per_wavelength;
}

int voxel_count(double length, double delta)
{
    if (!(length > 0.0)) throw DomainError("geometric lengths must be positive");
    return std::max(1, int(std::lround(length / delta)));
}

int smooth_count(int n)
{
    if (n < 1) throw DomainError("count must be positive");
    for (int m = n;; ++m) {
        int r = m;
        for (int p : {2, 3, 5})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

double absorber_profile(double s, double peak, double exponent)
{
    if (s <= 0.0) return 0.0;
    return peak * std::pow(std::min(s, 1.0), exponent);
}

PermittivityMap append_absorber(const PermittivityMap& map, End end, int voxels, double exponent,
                                std::optional<double> peak)
{
    const VoxelGrid& g = map.grid();
    if (voxels <= 0) throw DomainError("absorber length must be positive");
    if (voxels > g.nx)
        throw DomainError("absorber of " + std::to_string(voxels) + " voxels is longer than the domain (" +
                          std::to_string(g.nx) + ")");
    if (!(exponent > 0.0)) throw DomainError("absorber ramp exponent must be positive");
    if (peak && *peak < 0.0) throw DomainError("absorber peak loss must be non-negative");

    PermittivityMap out = map;
    for (int i = 0; i < voxels; ++i) {
        const double s = (i + 0.5) / voxels;
        const int ix = end == End::HighX ? g.nx - voxels + i : voxels - 1 - i;
        for (int iz = 0; iz < g.nz; ++iz)
            for (int iy = 0; iy < g.ny; ++iy) {
                const cplx e = map.at(ix, iy, iz);
                if (e == cplx(1.0, 0.0)) continue;
                const double loss = absorber_profile(s, peak.value_or(e.real()), exponent);
                out.set(ix, iy, iz, cplx(e.real(), e.imag() - loss));
            }
    }
    return out;
}

FieldVector dipole_incident(const VoxelGrid& grid, const Vec3& position, const Vec3& moment, const Physics& physics)
{
    if (norm3(moment) == 0.0) throw DomainError("dipole moment must be non-zero");
    const Eigen::Vector3cd p(moment[0], moment[1], moment[2]);
    const cplx scale = 1.0 / cplx(0.0, physics.omega * physics.eps0());
    const double k0 = physics.k0();
    const std::size_t n = grid.voxels();
    FieldVector e(Eigen::Index(grid.unknowns()));
    for (int iz = 0; iz < grid.nz; ++iz)
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix) {
                const Vec3 c = grid.center(ix, iy, iz);
                const Vec3 r{c[0] - position[0], c[1] - position[1], c[2] - position[2]};
                if (norm3(r) < grid.delta / 100.0)
                    throw DomainError("dipole lies within delta/100 of the centre of voxel (" + std::to_string(ix) +
                                      ", " + std::to_string(iy) + ", " + std::to_string(iz) + ")");
                const Eigen::Vector3cd f = scale * (dyadic_green(r, k0) * p);
                const std::size_t v = grid.index(ix, iy, iz);
                for (int a = 0; a < 3; ++a) e[Eigen::Index(a * n + v)] = f[a];
            }
    return e;
}

Device build_waveguide(const DeviceSpec& spec)
{
    check_common(spec);
    const WaveguideParams& w = spec.waveguide;
    if (w.margin < 0) throw DomainError("cladding margin must be non-negative");
    const double li = spec.lambda_int(), d = spec.pitch();
    const int core_x = voxel_count(w.length * li, d);
    const int cy = voxel_count(w.width * li, d);
    const int cz = voxel_count(w.height * li, d);
    const int ab = absorber_voxels(spec);
    const int nx0 = core_x + ab;
    const int pad = smooth_padding(spec, nx0);
    const VoxelGrid grid(nx0 + pad, cy + 2 * w.margin, cz + 2 * w.margin, d);
    const int m = w.margin;
    PermittivityMap map = paint(grid, spec.core_eps, [&](int, int iy, int iz) {
        return iy >= m && iy < m + cy && iz >= m && iz < m + cz;
    });

    Device dev;
    dev.map = with_absorbers(std::move(map), spec, ab, false);
    dev.partition = {make_box({0, 0, 0}, {grid.nx, grid.ny, grid.nz}, "waveguide", PrecLevel::OneLevel)};
    dev.source = {-0.5 * d, 0.5 * grid.ny * d, 0.5 * grid.nz * d};
    dev.lambda_int = li;
    return dev;
}

Device build_bragg(const DeviceSpec& spec)
{
    check_common(spec);
    const BraggParams& b = spec.bragg;
    if (b.periods < 1) throw DomainError("Bragg grating needs at least one period");
    if (!(b.depth >= 0.0) || !(b.depth < b.width)) throw DomainError("corrugation depth must satisfy 0 <= dW < W");
    if (b.lead < 0.0) throw DomainError("lead length must be non-negative");
    const double li = spec.lambda_int(), d = spec.pitch();
    const int wv = voxel_count(b.width, d);
    const int dwv = b.depth > 0.0 ? int(std::lround(b.depth / d)) : 0;
    const int wide = wv + dwv, narrow = wv - dwv;
    if (narrow < 1) throw DomainError("narrow grating section vanishes at this resolution");
    const int pv = voxel_count(b.period, d);
    if (pv < 2) throw DomainError("grating period must span at least two voxels");
    const int half = (pv + 1) / 2;
    const int tz = voxel_count(b.thickness, d);
    const int lead = b.lead > 0.0 ? voxel_count(b.lead * li, d) : 0;
    const int ab = absorber_voxels(spec);
    const int grating = b.periods * pv;
    const int nx0 = 2 * ab + 2 * lead + grating;
    const int pad = smooth_padding(spec, nx0);
    const int g0 = ab + lead;         // first grating slice
    const int g1 = g0 + grating;      // one past the last grating slice
    const int lead_end = g1 + lead + pad;
    const VoxelGrid grid(nx0 + pad, wide, tz, d);

    auto width_at = [&](int ix) {
        if ((ix >= ab && ix < g0) || (ix >= g1 && ix < lead_end)) return wv;
        const int phase = ((ix - g0) % pv + pv) % pv;  // absorbers continue the grating
        return phase < half ? wide : narrow;
    };
    PermittivityMap map = paint(grid, spec.core_eps, [&](int ix, int iy, int) {
        const int wx = width_at(ix);
        const int lo = (wide - wx) / 2;
        return iy >= lo && iy < lo + wx;
    });

    Device dev;
    dev.map = with_absorbers(std::move(map), spec, ab, true);
    dev.partition = {make_box({0, 0, 0}, {grid.nx, grid.ny, grid.nz}, "grating", PrecLevel::OneLevel)};
    dev.source = {-0.5 * d, 0.5 * grid.ny * d, 0.5 * grid.nz * d};
    dev.lambda_int = li;
    return dev;
}

Device build_disk_resonator(const DeviceSpec& spec)
{
    check_common(spec);
    const DiskParams& p = spec.disk;
    if (!p.gap) throw ConfigError("disk resonator needs an explicit bus gap");
    if (!(*p.gap > 0.0)) throw DomainError("disk bus gap must be positive");
    if (p.margin < 0) throw DomainError("disk margin must be non-negative");
    const double li = spec.lambda_int(), d = spec.pitch();
    const int rv = voxel_count(p.radius, d);
    const int bus = voxel_count(p.bus_width, d);
    const int gap = voxel_count(*p.gap, d);
    const int tz = voxel_count(p.thickness, d);
    const int ab = absorber_voxels(spec);
    const int nx0 = 2 * rv + 2 * p.margin + 2 * ab;
    const int pad = smooth_padding(spec, nx0);
    const int disk_lo = bus + gap;
    const VoxelGrid grid(nx0 + pad, disk_lo + 2 * rv, tz, d);
    const double cx = (ab + p.margin + rv) * d;
    const double cy = (disk_lo + rv) * d;
    const double r2 = p.radius * p.radius;

    PermittivityMap map = paint(grid, spec.core_eps, [&](int ix, int iy, int iz) {
        if (iy < bus) return true;
        if (iy < disk_lo) return false;
        const Vec3 c = grid.center(ix, iy, iz);
        const double dx = c[0] - cx, dy = c[1] - cy;
        return dx * dx + dy * dy <= r2;
    });

    Device dev;
    dev.map = with_absorbers(std::move(map), spec, ab, true);
    dev.partition = {make_box({0, 0, 0}, {grid.nx, bus, grid.nz}, "bus", p.bus_level),
                     make_box({ab + p.margin, disk_lo, 0}, {ab + p.margin + 2 * rv, grid.ny, grid.nz}, "disk", p.disk_level)};
    dev.source = {-0.5 * d, 0.5 * bus * d, 0.5 * grid.nz * d};
    dev.lambda_int = li;
    return dev;
}

Device build_directional_coupler(const DeviceSpec& spec)
{
    check_common(spec);
    const CouplerParams& c = spec.coupler;
    if (c.offset < 0.0 || c.lead < 0.0) throw DomainError("coupler offset and lead must be non-negative");
    const double li = spec.lambda_int(), d = spec.pitch();
    const int L = voxel_count(c.length * li, d);
    const int w = voxel_count(c.width, d);
    const int tz = voxel_count(c.thickness, d);
    const int gap = voxel_count(c.gap, d);
    const int off = c.offset > 0.0 ? int(std::lround(c.offset / d)) : 0;
    const int bend = off > 0 ? voxel_count(c.bend_length * li, d) : 0;
    const int lead = c.lead > 0.0 ? voxel_count(c.lead * li, d) : 0;
    const int ab = absorber_voxels(spec);
    const int nx0 = 2 * (ab + lead + bend) + L;
    const int pad = smooth_padding(spec, nx0);
    const int nx = nx0 + pad;
    const int box_h = off + w;
    const VoxelGrid grid(nx, 2 * box_h + gap, tz, d);

    // Lateral shift of the lower guide, in voxels (0 at the ports, off in the coupling section).
    const int b0 = ab + lead;          // first bend starts
    const int s0 = b0 + bend;          // coupling section
    const int s1 = s0 + L;             // second bend starts
    const int b1 = s1 + bend;
    auto shift = [&](double x) {
        if (x < b0 || x >= b1) return 0.0;
        if (x >= s0 && x < s1) return double(off);
        const double t = x < s0 ? (x - b0) / bend : 1.0 - (x - s1) / bend;
        return off * 0.5 * (1.0 - std::cos(kPi * t));
    };
    PermittivityMap map = paint(grid, spec.core_eps, [&](int ix, int iy, int) {
        const double s = shift(ix + 0.5);
        const double yc = iy + 0.5;
        const bool lower = yc >= s && yc < s + w;
        const double ym = grid.ny - yc;  // mirror about the mid-plane
        const bool upper = ym >= s && ym < s + w;
        return lower || upper;
    });

    Device dev;
    dev.map = with_absorbers(std::move(map), spec, ab, true);
    dev.partition = {make_box({0, 0, 0}, {nx, box_h, tz}, "lower", c.level),
                     make_box({0, box_h + gap, 0}, {nx, grid.ny, tz}, "upper", c.level)};
    dev.source = {-0.5 * d, 0.5 * w * d, 0.5 * tz * d};
    dev.lambda_int = li;
    return dev;
}

Device build_device(const DeviceSpec& spec)
{
    switch (spec.kind) {
    case DeviceKind::Waveguide: return build_waveguide(spec);
    case DeviceKind::Bragg: return build_bragg(spec);
    case DeviceKind::DiskResonator: return build_disk_resonator(spec);
    case DeviceKind::DirectionalCoupler: return build_directional_coupler(spec);
    }
    throw ConfigError("unknown device kind");
}

} // namespace vie
