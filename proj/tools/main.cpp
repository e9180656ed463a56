#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vie/harness.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kNoConvergence = 2, kInternal = 3 };

struct Common {
    std::string config_path;
    std::string preset;
    std::string out;
    int threads = 0;
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config_path, "JSON config file (merged over the preset if both are given)");
    app->add_option("--preset", c.preset, "shipped preset name");
    app->add_option("--out", c.out, "output directory (overrides output.dir)");
    app->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

vie::RunConfig resolve(const Common& c)
{
    nlohmann::json j = nlohmann::json::object();
    if (!c.preset.empty()) j = vie::load_preset(c.preset);
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        if (!in) throw vie::ConfigError("cannot open config " + c.config_path);
        try {
            j = vie::merge_json(j, nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
            throw vie::ConfigError("cannot parse " + c.config_path + ": " + e.what());
        }
    }
    if (c.preset.empty() && c.config_path.empty()) throw vie::ConfigError("give --config or --preset");
    vie::RunConfig cfg = vie::parse_config(j);
    if (!c.out.empty()) cfg.output_dir = c.out;
    if (c.threads > 0) cfg.threads = c.threads;
    return cfg;
}

int cmd_run(const Common& c)
{
    vie::RunConfig cfg = resolve(c);
    const vie::RunResult r = vie::execute(cfg, cfg.write_field);
    vie::write_run(cfg.output_dir, cfg, r);
    std::printf("%dx%dx%d voxels, %s, %d iterations, residual %.3e, %s\n", r.grid.nx, r.grid.ny, r.grid.nz,
                r.prec.level.c_str(), r.report.iterations, r.report.final_residual,
                r.report.converged ? "converged" : "NOT converged");
    std::printf("wrote %s\n", cfg.output_dir.c_str());
    return r.report.converged ? kOk : kNoConvergence;
}

int cmd_sweep(const Common& c)
{
    vie::RunConfig cfg = resolve(c);
    const int workers = c.threads > 0 ? c.threads : 1;
    const auto rows = vie::sweep(cfg, workers, [](const vie::SweepRow& row) {
        std::string params;
        for (const auto& [k, v] : row.params) params += k + "=" + v + " ";
        if (row.error.empty())
            std::printf("%s-> %d iterations%s\n", params.c_str(), row.iterations, row.converged ? "" : " (not converged)");
        else
            std::printf("%s-> error: %s\n", params.c_str(), row.error.c_str());
        std::fflush(stdout);
    });
    std::filesystem::create_directories(cfg.output_dir);
    const auto path = std::filesystem::path(cfg.output_dir) / "sweep.csv";
    vie::write_sweep_csv(path, rows);
    std::printf("wrote %s\n", path.c_str());
    for (const auto& row : rows)
        if (!row.error.empty() || !row.converged) return kNoConvergence;
    return kOk;
}

int cmd_spectrum(const Common& c)
{
    vie::RunConfig cfg = resolve(c);
    const vie::SpectrumResult s = vie::spectrum_run(cfg);
    std::filesystem::create_directories(cfg.output_dir);
    const auto path = std::filesystem::path(cfg.output_dir) / "spectrum.csv";
    vie::write_spectrum_csv(path, s);
    auto min_abs = [](const std::vector<vie::cplx>& v) {
        double m = std::numeric_limits<double>::infinity();
        for (auto z : v) m = std::min(m, std::abs(z));
        return m;
    };
    std::printf("%zu eigenvalues, min |lambda| %.4f", s.unpreconditioned.size(), min_abs(s.unpreconditioned));
    if (!s.preconditioned.empty()) std::printf(", preconditioned min |lambda| %.4f", min_abs(s.preconditioned));
    std::printf("\nwrote %s\n", path.c_str());
    return kOk;
}

int cmd_validate(const std::string& fault)
{
    vie::Fault f = vie::Fault::None;
    if (fault == "kernel-parity") f = vie::Fault::KernelParity;
    else if (!fault.empty()) throw vie::ConfigError("unknown fault '" + fault + "'");
    bool ok = true;
    for (const auto& r : vie::validate(f)) {
        std::printf("%-26s %s  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.detail.c_str());
        ok = ok && r.passed;
    }
    return ok ? kOk : kInternal;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Voxel volume integral equation solver with circulant preconditioning"};
    app.require_subcommand(1);
    Common common;
    std::string fault;

    auto* run = app.add_subcommand("run", "solve one configuration");
    add_common(run, common);
    auto* sw = app.add_subcommand("sweep", "Cartesian parameter sweep to sweep.csv");
    add_common(sw, common);
    auto* sp = app.add_subcommand("spectrum", "dense eigenvalues of small systems");
    add_common(sp, common);
    auto* val = app.add_subcommand("validate", "dense-oracle equivalence suite");
    val->add_option("--fault", fault, "inject a fault (kernel-parity)");
    app.add_subcommand("presets", "list shipped presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*run) return cmd_run(common);
        if (*sw) return cmd_sweep(common);
        if (*sp) return cmd_spectrum(common);
        if (*val) return cmd_validate(fault);
        for (const auto& n : vie::preset_names()) std::printf("%s\n", n.c_str());
        return kOk;
    } catch (const vie::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const vie::SolveError& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return kNoConvergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInternal;
    }
}
