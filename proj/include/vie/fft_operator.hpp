#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "vie/kernel.hpp"

namespace vie {

class OperatorPlan;

/// Scratch buffers for one apply stream. Not shareable between threads; a
/// plan may serve any number of contexts concurrently.
class ApplyContext {
public:
    explicit ApplyContext(const OperatorPlan& plan);

private:
    friend class OperatorPlan;
    std::array<std::vector<cplx>, 3> spectra_;
    std::vector<cplx> accum_;
};

/// Circulant embedding of the Toeplitz kernel on a 2n-padded grid with the
/// six generator spectra precomputed. Immutable once built.
class OperatorPlan {
public:
    explicit OperatorPlan(const ToeplitzKernel& kernel);

    const VoxelGrid& grid() const { return grid_; }
    std::array<int, 3> padded_dims() const { return padded_; }
    std::size_t padded_size() const { return std::size_t(padded_[0]) * padded_[1] * padded_[2]; }
    const std::vector<cplx>& spectrum(int comp) const { return spectra_[comp]; }

    ApplyContext make_context() const { return ApplyContext(*this); }

    /// y = N x.
    FieldVector apply_n(const FieldVector& x, ApplyContext& ctx) const;
    FieldVector apply_n(const FieldVector& x) const;

    /// y = x - M (N x), M the per-voxel coefficient shared by all components.
    FieldVector apply_system(const CoefficientMap& coeff, const FieldVector& x, ApplyContext& ctx) const;
    FieldVector apply_system(const CoefficientMap& coeff, const FieldVector& x) const;

private:
    struct Fft;
    VoxelGrid grid_;
    std::array<int, 3> padded_{};
    std::array<std::vector<cplx>, kNumComps> spectra_;
    std::shared_ptr<const Fft> fft_;
};

OperatorPlan plan_operator(const ToeplitzKernel& kernel);

/// b = j omega eps0 M e_inc.
FieldVector rhs_from_incident(const CoefficientMap& coeff, const FieldVector& e_inc, const Physics& physics);

/// Total field e = e_inc + (N j - j) / (j omega eps0) at every voxel centre.
FieldVector field_from_currents(const OperatorPlan& plan, const FieldVector& currents, const FieldVector& e_inc,
                                const Physics& physics);

struct FieldDump {
    VoxelGrid grid;
    double wavelength = 0.0;
    FieldVector values;
};

/// field.bin (little-endian interleaved complex float64, canonical layout)
/// plus a .json sidecar with dims, delta, origin, component order, wavelength.
void write_field(const std::filesystem::path& bin_path, const VoxelGrid& grid, const FieldVector& field,
                 double wavelength);
FieldDump read_field(const std::filesystem::path& bin_path);

} // namespace vie
