#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vie/fft_operator.hpp"
#include "vie/photonics.hpp"
#include "vie/solver.hpp"

namespace vie {

struct PrecConfig {
    PrecLevel level = PrecLevel::None;
    std::optional<Homogenization> homogenization; // default by level
    double reduce_tol = 1e-3;
    std::size_t max_bytes = std::size_t(8) << 30;
    std::optional<std::vector<Box>> boxes;        // blocked: overrides the device partition
};

struct SourceConfig {
    std::optional<Vec3> position; // default: device source point
    Vec3 moment{0.0, 1.0, 0.0};
};

struct RunConfig {
    DeviceSpec device;
    std::string material = "si_in_sio2"; // informational once core_eps is resolved
    PrecConfig prec;
    GmresOptions solver;
    SourceConfig source;
    KernelOptions kernel;
    bool write_field = true;
    std::string output_dir = "out";
    int threads = 1;
    /// Sweep axes in declaration order; values are raw JSON scalars.
    std::vector<std::pair<std::string, std::vector<nlohmann::json>>> sweep;
};

/// Strict parse: unknown keys, bad types and unknown names are ConfigErrors.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Directory holding the shipped presets (VIE_PRESET_DIR overrides).
std::filesystem::path preset_dir();
std::vector<std::string> preset_names();
nlohmann::json load_preset(const std::string& name);

/// Shallow-recursive merge of `patch` into `base` (objects merge, the rest replaces).
nlohmann::json merge_json(nlohmann::json base, const nlohmann::json& patch);

/// Sets one sweep axis value on a config.
void apply_axis(RunConfig& config, const std::string& axis, const nlohmann::json& value);
std::vector<std::string> sweep_axis_names();

struct RunResult {
    VoxelGrid grid;
    double k0 = 0.0;
    double dielectric_ratio = 0.0;
    std::size_t kernel_entries = 0;
    std::size_t kernel_bytes = 0;
    double kernel_seconds = 0.0;
    double plan_seconds = 0.0;
    double build_seconds = 0.0;
    PrecSummary prec;
    SolveReport report;
    FieldVector currents;
    FieldVector field;
};

/// Builds device, kernel, operator, preconditioner and solves.
RunResult execute(const RunConfig& config, bool recover_field = true);

/// report.json body for a run.
nlohmann::json report_json(const RunConfig& config, const RunResult& result);
nlohmann::json prec_summary_json(const PrecSummary& s);

/// Writes report.json, residuals.csv, config.json and (optionally) field.bin/field.json.
void write_run(const std::filesystem::path& dir, const RunConfig& config, const RunResult& result);
nlohmann::json read_report(const std::filesystem::path& path);

struct SweepRow {
    std::vector<std::pair<std::string, std::string>> params;
    int iterations = -1;
    bool converged = false;
    double final_residual = 0.0;
    double build_seconds = 0.0;
    double solve_seconds = 0.0;
    std::size_t prec_bytes = 0;
    std::size_t stored_blocks = 0;
    std::size_t total_blocks = 0;
    double dielectric_ratio = 0.0;
    std::array<int, 3> dims{};
    std::string error;
};

/// Cartesian product of the sweep axes, first axis slowest. Per-point errors
/// are recorded in the row and the sweep continues.
std::vector<SweepRow> sweep(const RunConfig& config, int threads = 1,
                            const std::function<void(const SweepRow&)>& progress = {});
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

struct SpectrumResult {
    std::vector<cplx> unpreconditioned;
    std::vector<cplx> preconditioned; // empty without a preconditioner
};

/// Dense spectra of A and A C^{-1} for small configurations.
SpectrumResult spectrum_run(const RunConfig& config);
void write_spectrum_csv(const std::filesystem::path& path, const SpectrumResult& s);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

enum class Fault { None, KernelParity };

/// Dense-oracle suite on small built-in instances.
std::vector<CheckResult> validate(Fault fault = Fault::None);

} // namespace vie
