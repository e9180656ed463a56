#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "vie/circulant.hpp"

namespace vie {

enum class DeviceKind { Waveguide, Bragg, DiskResonator, DirectionalCoupler };

DeviceKind parse_device_kind(std::string_view name);
std::string_view to_string(DeviceKind kind);

enum class End { LowX, HighX };

struct AbsorberSpec {
    double length = 0.0;               // interior wavelengths; 0 disables
    double exponent = 3.0;
    std::optional<double> max_loss;    // peak eps''; default Re(eps) of each voxel
};

struct WaveguideParams {
    double length = 50.0;  // interior wavelengths
    double width = 1.12;   // interior wavelengths
    double height = 0.56;  // interior wavelengths
    int margin = 0;        // cladding voxels around the core in y and z
};

struct BraggParams {
    double width = 500e-9;
    double depth = 40e-9;     // corrugation: widths alternate width +- depth
    double period = 320e-9;
    double thickness = 220e-9;
    int periods = 100;
    double lead = 0.0;        // straight lead-in / lead-out, interior wavelengths
};

struct DiskParams {
    double radius = 3e-6;
    std::optional<double> gap;  // bus-disk gap; required
    double bus_width = 500e-9;
    double thickness = 220e-9;
    int margin = 2;             // voxels between the disk and the x ends
    PrecLevel disk_level = PrecLevel::TwoLevel;
    PrecLevel bus_level = PrecLevel::ReducedOneLevel;
};

struct CouplerParams {
    double length = 5.0;        // straight coupling section L, interior wavelengths
    double width = 500e-9;
    double thickness = 220e-9;
    double gap = 200e-9;
    double offset = 600e-9;     // lateral fan-out of each bend
    double bend_length = 2.0;   // interior wavelengths per bend
    double lead = 0.0;          // straight port sections, interior wavelengths
    PrecLevel level = PrecLevel::OneLevel;
};

/// One device. Lengths tagged "interior wavelengths" are in units of
/// lambda_int = lambda0 / sqrt(Re core_eps); the rest are in meters. The
/// core permittivity is relative to the (normalized) cladding.
struct DeviceSpec {
    DeviceKind kind = DeviceKind::Waveguide;
    double wavelength = 1550e-9;
    cplx core_eps = materials::kSiInSiO2;
    double voxels_per_wavelength = 20.0;
    std::optional<double> delta;   // explicit pitch overrides voxels_per_wavelength
    AbsorberSpec absorber;         // high-x end for the waveguide, both x ends otherwise
    bool smooth_dims = false;      // grow nx to a 5-smooth count with a longer trailing lead
    WaveguideParams waveguide;
    BraggParams bragg;
    DiskParams disk;
    CouplerParams coupler;

    double lambda_int() const;
    double pitch() const;
};

struct Device {
    PermittivityMap map;
    std::vector<Box> partition;  // partition hint for blocked preconditioning
    Vec3 source{};               // default dipole position
    double lambda_int = 0.0;
};

Device build_waveguide(const DeviceSpec& spec);
Device build_bragg(const DeviceSpec& spec);
Device build_disk_resonator(const DeviceSpec& spec);
Device build_directional_coupler(const DeviceSpec& spec);
Device build_device(const DeviceSpec& spec);

/// eps'' at normalized depth s in [0, 1]: peak * s^exponent.
double absorber_profile(double s, double peak, double exponent);

/// Ramps eps'' over the last (or first) `voxels` x-slices of every non-air
/// voxel, sampling the profile at voxel centres. eps' is unchanged.
PermittivityMap append_absorber(const PermittivityMap& map, End end, int voxels, double exponent,
                                std::optional<double> peak = std::nullopt);

/// Incident field of a point current moment p at `position`:
/// e_inc(r) = G(r - position) p / (j omega eps0).
FieldVector dipole_incident(const VoxelGrid& grid, const Vec3& position, const Vec3& moment, const Physics& physics);

/// Smallest 2^a 3^b 5^c >= n.
int smooth_count(int n);

/// Number of voxels spanning `length` meters at pitch delta (at least 1).
int voxel_count(double length, double delta);

} // namespace vie
