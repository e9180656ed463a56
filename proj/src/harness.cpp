#include "vie/harness.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "vie/oracles.hpp"
#include "parallel.hpp"

#ifndef VIE_DEFAULT_PRESET_DIR
#define VIE_DEFAULT_PRESET_DIR "presets"
#endif

namespace vie {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Strict object reader: every key must be consumed, or finish() throws.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    template <class T>
    void read(const std::string& key, T& out)
    {
        seen_.insert(key);
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where(key) + ": wrong type (" + j_.at(key).dump() + ")");
        }
    }

    template <class T>
    void read(const std::string& key, std::optional<T>& out)
    {
        seen_.insert(key);
        if (!has(key)) return;
        T v{};
        read(key, v);
        out = v;
    }

    const json* child(const std::string& key)
    {
        seen_.insert(key);
        return has(key) ? &j_.at(key) : nullptr;
    }

    std::string where(const std::string& key = "") const { return key.empty() ? path_ : path_ + "." + key; }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key '" + where(it.key()) + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class T, class Parse>
void read_named(Reader& r, const std::string& key, T& out, Parse parse)
{
    std::optional<std::string> name;
    r.read(key, name);
    if (name) out = parse(*name);
}

cplx parse_eps(const json& j, const std::string& where)
{
    if (j.is_number()) return cplx(j.get<double>(), 0.0);
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
        return cplx(j[0].get<double>(), j[1].get<double>());
    throw ConfigError(where + " must be a number or [re, im]");
}

std::vector<Box> parse_boxes(const json& j, const std::string& where)
{
    if (!j.is_array()) throw ConfigError(where + " must be an array");
    std::vector<Box> boxes;
    for (std::size_t i = 0; i < j.size(); ++i) {
        Reader r(j[i], where + "[" + std::to_string(i) + "]");
        Box b;
        r.read("lo", b.lo);
        r.read("hi", b.hi);
        r.read("label", b.label);
        read_named(r, "level", b.level, parse_prec_level);
        std::optional<std::string> h;
        r.read("homogenization", h);
        if (h) b.homogenization = parse_homogenization(*h);
        r.read("reduce_tol", b.reduce_tol);
        r.finish();
        if (b.level == PrecLevel::Blocked || b.level == PrecLevel::None)
            throw ConfigError(where + ": box level must be one-level, reduced-one-level or two-level");
        boxes.push_back(b);
    }
    return boxes;
}

void parse_device(const json& j, RunConfig& c)
{
    Reader r(j, "device");
    DeviceSpec& d = c.device;
    read_named(r, "kind", d.kind, parse_device_kind);
    r.read("material", c.material);
    d.core_eps = material_permittivity(c.material);
    if (const json* e = r.child("eps")) {
        d.core_eps = parse_eps(*e, "device.eps");
        c.material = "custom";
    }
    r.read("voxels_per_wavelength", d.voxels_per_wavelength);
    r.read("delta", d.delta);
    r.read("smooth_dims", d.smooth_dims);
    if (const json* a = r.child("absorber")) {
        Reader ra(*a, "device.absorber");
        ra.read("length", d.absorber.length);
        ra.read("exponent", d.absorber.exponent);
        ra.read("max_loss", d.absorber.max_loss);
        ra.finish();
    }
    if (const json* w = r.child("waveguide")) {
        Reader rw(*w, "device.waveguide");
        rw.read("length", d.waveguide.length);
        rw.read("width", d.waveguide.width);
        rw.read("height", d.waveguide.height);
        rw.read("margin", d.waveguide.margin);
        rw.finish();
    }
    if (const json* b = r.child("bragg")) {
        Reader rb(*b, "device.bragg");
        rb.read("width", d.bragg.width);
        rb.read("depth", d.bragg.depth);
        rb.read("period", d.bragg.period);
        rb.read("thickness", d.bragg.thickness);
        rb.read("periods", d.bragg.periods);
        rb.read("lead", d.bragg.lead);
        rb.finish();
    }
    if (const json* k = r.child("disk")) {
        Reader rk(*k, "device.disk");
        rk.read("radius", d.disk.radius);
        rk.read("gap", d.disk.gap);
        rk.read("bus_width", d.disk.bus_width);
        rk.read("thickness", d.disk.thickness);
        rk.read("margin", d.disk.margin);
        read_named(rk, "disk_level", d.disk.disk_level, parse_prec_level);
        read_named(rk, "bus_level", d.disk.bus_level, parse_prec_level);
        rk.finish();
    }
    if (const json* k = r.child("coupler")) {
        Reader rk(*k, "device.coupler");
        rk.read("length", d.coupler.length);
        rk.read("width", d.coupler.width);
        rk.read("thickness", d.coupler.thickness);
        rk.read("gap", d.coupler.gap);
        rk.read("offset", d.coupler.offset);
        rk.read("bend_length", d.coupler.bend_length);
        rk.read("lead", d.coupler.lead);
        read_named(rk, "level", d.coupler.level, parse_prec_level);
        rk.finish();
    }
    r.finish();
}

json eps_json(cplx e)
{
    return e.imag() == 0.0 ? json(e.real()) : json::array({e.real(), e.imag()});
}

json boxes_json(const std::vector<Box>& boxes)
{
    json out = json::array();
    for (const Box& b : boxes) {
        json jb = {{"lo", b.lo}, {"hi", b.hi}, {"label", b.label}, {"level", to_string(b.level)},
                   {"reduce_tol", b.reduce_tol}};
        if (b.homogenization) jb["homogenization"] = to_string(*b.homogenization);
        out.push_back(jb);
    }
    return out;
}

Homogenization default_homogenization(PrecLevel level)
{
    return level == PrecLevel::TwoLevel ? Homogenization::Mode : Homogenization::RealMeanX;
}

// Kernel and operator plan shared by sweep points on an identical grid.
struct OperatorBundle {
    ToeplitzKernel kernel;
    std::unique_ptr<OperatorPlan> plan;
    double kernel_seconds = 0.0;
    double plan_seconds = 0.0;
};

class OperatorCache {
public:
    std::shared_ptr<const OperatorBundle> get(const VoxelGrid& g, double k0, const KernelOptions& opt)
    {
        std::ostringstream key;
        key.precision(17);
        key << g.nx << ' ' << g.ny << ' ' << g.nz << ' ' << g.delta << ' ' << k0 << ' ' << opt.near_neighbor_gauss;
        {
            std::lock_guard lock(mutex_);
            auto it = entries_.find(key.str());
            if (it != entries_.end()) return it->second;
        }
        auto b = make(g, k0, opt);
        std::lock_guard lock(mutex_);
        return entries_.emplace(key.str(), b).first->second;
    }

    static std::shared_ptr<const OperatorBundle> make(const VoxelGrid& g, double k0, const KernelOptions& opt)
    {
        auto b = std::make_shared<OperatorBundle>();
        auto t0 = Clock::now();
        b->kernel = assemble_kernel(VoxelGrid(g.nx, g.ny, g.nz, g.delta), k0, opt);
        b->kernel_seconds = seconds_since(t0);
        t0 = Clock::now();
        b->plan = std::make_unique<OperatorPlan>(b->kernel);
        b->plan_seconds = seconds_since(t0);
        return b;
    }

private:
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const OperatorBundle>> entries_;
};

struct Prepared {
    Device device;
    Physics physics{1.0};
    std::shared_ptr<const OperatorBundle> op;
    CoefficientMap coeff;
    FieldVector e_inc;
};

Prepared prepare(const RunConfig& c, OperatorCache* cache)
{
    Prepared p;
    p.physics = Physics::from_wavelength(c.device.wavelength);
    p.device = build_device(c.device);
    p.device.map.check_passive();
    const VoxelGrid& g = p.device.map.grid();
    p.op = cache ? cache->get(g, p.physics.k0(), c.kernel) : OperatorCache::make(g, p.physics.k0(), c.kernel);
    p.coeff = medium_coefficient(p.device.map);
    p.e_inc = dipole_incident(g, c.source.position.value_or(p.device.source), c.source.moment, p.physics);
    return p;
}

std::shared_ptr<const Preconditioner> make_preconditioner(const RunConfig& c, const Prepared& p, int threads)
{
    const PrecConfig& pc = c.prec;
    if (pc.level == PrecLevel::None) return nullptr;
    CirculantOptions opt;
    opt.max_bytes = pc.max_bytes;
    opt.threads = threads;
    const ToeplitzKernel& K = p.op->kernel;
    if (pc.level == PrecLevel::Blocked) {
        std::vector<Box> boxes = pc.boxes.value_or(p.device.partition);
        if (!pc.boxes)
            for (Box& b : boxes) {
                const bool fits = b.level != PrecLevel::TwoLevel || pc.homogenization == Homogenization::Mode;
                if (pc.homogenization && !b.homogenization && fits) b.homogenization = pc.homogenization;
                b.reduce_tol = pc.reduce_tol;
            }
        const Partition part = partition_boxes(K.grid(), std::move(boxes));
        return std::make_shared<BlockedPrec>(build_blocked(K, p.device.map, part, opt));
    }
    const CoefficientMap m_tilde =
        homogenize(p.device.map, pc.homogenization.value_or(default_homogenization(pc.level)));
    return build_preconditioner(pc.level, K, m_tilde, pc.reduce_tol, opt);
}

RunResult execute_with(const RunConfig& c, bool recover_field, OperatorCache* cache, int build_threads)
{
    RunResult res;
    const Prepared p = prepare(c, cache);
    const OperatorPlan& plan = *p.op->plan;
    res.grid = p.device.map.grid();
    res.k0 = p.physics.k0();
    res.dielectric_ratio = dielectric_ratio(p.device.map);
    res.kernel_entries = p.op->kernel.storage_entries();
    res.kernel_bytes = res.kernel_entries * sizeof(cplx);
    res.kernel_seconds = p.op->kernel_seconds;
    res.plan_seconds = p.op->plan_seconds;

    const auto t0 = Clock::now();
    const auto prec = make_preconditioner(c, p, build_threads);
    res.build_seconds = seconds_since(t0);
    if (prec) res.prec = prec->summary();
    else res.prec.level = "none";

    const FieldVector b = rhs_from_incident(p.coeff, p.e_inc, p.physics);
    ApplyContext ctx = plan.make_context();
    LinearOperator A = [&](const FieldVector& x) { return plan.apply_system(p.coeff, x, ctx); };
    LinearOperator P;
    if (prec) P = [&](const FieldVector& x) { return prec->apply(x); };
    SolveResult sol = gmres(A, P, b, c.solver);
    res.report = std::move(sol.report);
    if (recover_field) {
        res.field = field_from_currents(plan, sol.x, p.e_inc, p.physics);
        res.currents = std::move(sol.x);
    }
    return res;
}

std::string csv_quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch == '\n' ? ' ' : ch;
    }
    return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::string scalar_text(const json& v)
{
    return v.is_string() ? v.get<std::string>() : v.dump();
}

const std::vector<std::string> kSweepColumns = {
    "iterations", "converged", "final_residual", "build_seconds", "solve_seconds", "prec_bytes",
    "stored_blocks", "total_blocks", "dielectric_ratio", "nx", "ny", "nz", "error"};

} // namespace

// ---------------------------------------------------------------------------
// Config

RunConfig parse_config(const json& j)
{
    RunConfig c;
    Reader r(j, "config");
    if (const json* d = r.child("device")) parse_device(*d, c);
    if (const json* ph = r.child("physics")) {
        Reader rp(*ph, "physics");
        rp.read("wavelength", c.device.wavelength);
        rp.finish();
    }
    if (const json* pj = r.child("preconditioner")) {
        Reader rp(*pj, "preconditioner");
        read_named(rp, "level", c.prec.level, parse_prec_level);
        std::optional<std::string> h;
        rp.read("homogenization", h);
        if (h) c.prec.homogenization = parse_homogenization(*h);
        rp.read("reduce_tol", c.prec.reduce_tol);
        rp.read("max_bytes", c.prec.max_bytes);
        if (const json* b = rp.child("boxes")) c.prec.boxes = parse_boxes(*b, "preconditioner.boxes");
        rp.finish();
    }
    if (const json* s = r.child("solver")) {
        Reader rs(*s, "solver");
        rs.read("tol", c.solver.tol);
        rs.read("maxit", c.solver.maxit);
        rs.read("restart", c.solver.restart);
        rs.finish();
    }
    if (const json* s = r.child("source")) {
        Reader rs(*s, "source");
        rs.read("position", c.source.position);
        rs.read("moment", c.source.moment);
        rs.finish();
    }
    if (const json* k = r.child("kernel")) {
        Reader rk(*k, "kernel");
        rk.read("near_neighbor_gauss", c.kernel.near_neighbor_gauss);
        rk.finish();
    }
    if (const json* o = r.child("output")) {
        Reader ro(*o, "output");
        ro.read("dir", c.output_dir);
        ro.read("field", c.write_field);
        ro.finish();
    }
    r.read("threads", c.threads);
    if (const json* s = r.child("sweep")) {
        if (!s->is_object()) throw ConfigError("sweep must be an object of axis -> value list");
        const auto known = sweep_axis_names();
        for (auto it = s->begin(); it != s->end(); ++it) {
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                throw ConfigError("unknown sweep axis '" + it.key() + "'");
            if (!it->is_array() || it->empty())
                throw ConfigError("sweep." + it.key() + " must be a non-empty array");
            c.sweep.emplace_back(it.key(), std::vector<json>(it->begin(), it->end()));
        }
    }
    r.finish();

    if (!(c.solver.tol > 0.0)) throw ConfigError("solver.tol must be positive");
    if (c.solver.maxit < 1) throw ConfigError("solver.maxit must be at least 1");
    if (c.threads < 1) throw ConfigError("threads must be at least 1");
    if (!(c.prec.reduce_tol >= 0.0 && c.prec.reduce_tol <= 1.0))
        throw ConfigError("preconditioner.reduce_tol must lie in [0, 1]");
    if (c.device.kind == DeviceKind::DiskResonator && !c.device.disk.gap)
        throw ConfigError("device.disk.gap is required for the disk resonator");
    return c;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

json to_json(const RunConfig& c)
{
    const DeviceSpec& d = c.device;
    json dev = {
        {"kind", to_string(d.kind)},
        {"material", c.material},
        {"eps", eps_json(d.core_eps)},
        {"voxels_per_wavelength", d.voxels_per_wavelength},
        {"smooth_dims", d.smooth_dims},
        {"absorber", {{"length", d.absorber.length}, {"exponent", d.absorber.exponent}}},
        {"waveguide",
         {{"length", d.waveguide.length},
          {"width", d.waveguide.width},
          {"height", d.waveguide.height},
          {"margin", d.waveguide.margin}}},
        {"bragg",
         {{"width", d.bragg.width},
          {"depth", d.bragg.depth},
          {"period", d.bragg.period},
          {"thickness", d.bragg.thickness},
          {"periods", d.bragg.periods},
          {"lead", d.bragg.lead}}},
        {"disk",
         {{"radius", d.disk.radius},
          {"bus_width", d.disk.bus_width},
          {"thickness", d.disk.thickness},
          {"margin", d.disk.margin},
          {"disk_level", to_string(d.disk.disk_level)},
          {"bus_level", to_string(d.disk.bus_level)}}},
        {"coupler",
         {{"length", d.coupler.length},
          {"width", d.coupler.width},
          {"thickness", d.coupler.thickness},
          {"gap", d.coupler.gap},
          {"offset", d.coupler.offset},
          {"bend_length", d.coupler.bend_length},
          {"lead", d.coupler.lead},
          {"level", to_string(d.coupler.level)}}},
    };
    if (d.delta) dev["delta"] = *d.delta;
    if (d.absorber.max_loss) dev["absorber"]["max_loss"] = *d.absorber.max_loss;
    if (d.disk.gap) dev["disk"]["gap"] = *d.disk.gap;
    if (c.material == "custom") dev.erase("material");
    else dev.erase("eps");

    json prec = {{"level", to_string(c.prec.level)}, {"reduce_tol", c.prec.reduce_tol}, {"max_bytes", c.prec.max_bytes}};
    if (c.prec.homogenization) prec["homogenization"] = to_string(*c.prec.homogenization);
    if (c.prec.boxes) prec["boxes"] = boxes_json(*c.prec.boxes);

    json src = {{"moment", c.source.moment}};
    if (c.source.position) src["position"] = *c.source.position;

    json out = {
        {"device", dev},
        {"physics", {{"wavelength", d.wavelength}}},
        {"preconditioner", prec},
        {"solver", {{"tol", c.solver.tol}, {"maxit", c.solver.maxit}, {"restart", c.solver.restart}}},
        {"source", src},
        {"kernel", {{"near_neighbor_gauss", c.kernel.near_neighbor_gauss}}},
        {"output", {{"dir", c.output_dir}, {"field", c.write_field}}},
        {"threads", c.threads},
    };
    if (!c.sweep.empty()) {
        json s = json::object();
        for (const auto& [axis, values] : c.sweep) s[axis] = values;
        out["sweep"] = s;
    }
    return out;
}

std::filesystem::path preset_dir()
{
    if (const char* env = std::getenv("VIE_PRESET_DIR")) return env;
    return VIE_DEFAULT_PRESET_DIR;
}

std::vector<std::string> preset_names()
{
    std::vector<std::string> names;
    const auto dir = preset_dir();
    if (!std::filesystem::is_directory(dir)) return names;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".json") names.push_back(e.path().stem().string());
    std::sort(names.begin(), names.end());
    return names;
}

json load_preset(const std::string& name)
{
    const auto path = preset_dir() / (name + ".json");
    std::ifstream in(path);
    if (!in) {
        std::string known;
        for (const auto& n : preset_names()) known += " " + n;
        throw ConfigError("unknown preset '" + name + "' (available:" + known + ")");
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse preset " + path.string() + ": " + e.what());
    }
}

json merge_json(json base, const json& patch)
{
    if (!base.is_object() || !patch.is_object()) return patch;
    for (auto it = patch.begin(); it != patch.end(); ++it)
        base[it.key()] = base.contains(it.key()) ? merge_json(base[it.key()], *it) : *it;
    return base;
}

std::vector<std::string> sweep_axis_names()
{
    return {"length", "periods", "dW", "radius", "L", "preconditioner", "homogenization", "material",
            "eps", "voxels_per_wavelength", "reduce_tol", "absorber"};
}

void apply_axis(RunConfig& c, const std::string& axis, const json& v)
{
    try {
        if (axis == "length") c.device.waveguide.length = v.get<double>();
        else if (axis == "periods") c.device.bragg.periods = v.get<int>();
        else if (axis == "dW") c.device.bragg.depth = v.get<double>();
        else if (axis == "radius") c.device.disk.radius = v.get<double>();
        else if (axis == "L") c.device.coupler.length = v.get<double>();
        else if (axis == "preconditioner") c.prec.level = parse_prec_level(v.get<std::string>());
        else if (axis == "homogenization") c.prec.homogenization = parse_homogenization(v.get<std::string>());
        else if (axis == "material") {
            c.material = v.get<std::string>();
            c.device.core_eps = material_permittivity(c.material);
        } else if (axis == "eps") {
            c.device.core_eps = parse_eps(v, "sweep.eps");
            c.material = "custom";
        } else if (axis == "voxels_per_wavelength") c.device.voxels_per_wavelength = v.get<double>();
        else if (axis == "reduce_tol") c.prec.reduce_tol = v.get<double>();
        else if (axis == "absorber") c.device.absorber.length = v.get<double>();
        else throw ConfigError("unknown sweep axis '" + axis + "'");
    } catch (const json::exception&) {
        throw ConfigError("sweep." + axis + ": bad value " + v.dump());
    }
}

// ---------------------------------------------------------------------------
// Run

RunResult execute(const RunConfig& config, bool recover_field)
{
    return execute_with(config, recover_field, nullptr, config.threads);
}

json prec_summary_json(const PrecSummary& s)
{
    json j = {{"level", s.level},       {"blocks", s.blocks}, {"stored", s.stored},
              {"discarded", s.discarded}, {"block_dim", s.block_dim}, {"bytes", s.bytes},
              {"build_seconds", s.build_seconds}};
    if (!s.boxes.empty()) {
        j["boxes"] = json::array();
        for (const auto& b : s.boxes) j["boxes"].push_back(prec_summary_json(b));
    }
    return j;
}

json report_json(const RunConfig& c, const RunResult& r)
{
    const SolveReport& s = r.report;
    return {
        {"device",
         {{"kind", to_string(c.device.kind)},
          {"dims", {r.grid.nx, r.grid.ny, r.grid.nz}},
          {"delta", r.grid.delta},
          {"voxels", r.grid.voxels()},
          {"unknowns", r.grid.unknowns()},
          {"dielectric_ratio", r.dielectric_ratio},
          {"lambda_int", c.device.lambda_int()}}},
        {"k0", r.k0},
        {"solver",
         {{"iterations", s.iterations},
          {"converged", s.converged},
          {"final_residual", s.final_residual},
          {"tol", c.solver.tol},
          {"maxit", c.solver.maxit},
          {"restart", c.solver.restart},
          {"operator_applies", s.operator_applies},
          {"preconditioner_applies", s.preconditioner_applies},
          {"residuals", s.residuals}}},
        {"preconditioner", prec_summary_json(r.prec)},
        {"memory",
         {{"kernel_entries", r.kernel_entries},
          {"kernel_bytes", r.kernel_bytes},
          {"preconditioner_bytes", r.prec.bytes},
          {"field_bytes", r.grid.unknowns() * sizeof(cplx)}}},
        {"timings",
         {{"kernel_seconds", r.kernel_seconds},
          {"plan_seconds", r.plan_seconds},
          {"build_seconds", r.build_seconds},
          {"solve_seconds", s.solve_seconds},
          {"operator_seconds", s.operator_seconds},
          {"preconditioner_seconds", s.preconditioner_seconds}}},
    };
}

void write_run(const std::filesystem::path& dir, const RunConfig& c, const RunResult& r)
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "report.json");
        if (!out) throw Error("cannot write " + (dir / "report.json").string());
        out << report_json(c, r).dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "config.json");
        out << to_json(c).dump(2) << '\n';
    }
    write_residuals(dir / "residuals.csv", r.report);
    if (c.write_field && r.field.size() > 0) write_field(dir / "field.bin", r.grid, r.field, c.device.wavelength);
}

json read_report(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    json j = json::parse(in);
    for (const char* key : {"device", "solver", "preconditioner", "memory", "timings"})
        if (!j.contains(key)) throw Error(path.string() + " lacks '" + key + "'");
    return j;
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<SweepRow> sweep(const RunConfig& config, int threads, const std::function<void(const SweepRow&)>& progress)
{
    if (config.sweep.empty()) throw ConfigError("sweep needs at least one axis");
    std::size_t points = 1;
    for (const auto& [axis, values] : config.sweep) points *= values.size();

    std::vector<SweepRow> rows(points);
    OperatorCache cache;
    std::mutex report_mutex;
    const int inner_threads = threads > 1 ? 1 : config.threads;

    detail::parallel_for(points, threads, [&](std::size_t idx) {
        SweepRow& row = rows[idx];
        RunConfig c = config;
        c.sweep.clear();
        std::size_t rest = idx;
        std::vector<std::size_t> pick(config.sweep.size());
        for (std::size_t a = config.sweep.size(); a-- > 0;) {
            pick[a] = rest % config.sweep[a].second.size();
            rest /= config.sweep[a].second.size();
        }
        try {
            for (std::size_t a = 0; a < config.sweep.size(); ++a) {
                const json& v = config.sweep[a].second[pick[a]];
                row.params.emplace_back(config.sweep[a].first, scalar_text(v));
                apply_axis(c, config.sweep[a].first, v);
            }
            const RunResult r = execute_with(c, false, &cache, inner_threads);
            row.iterations = r.report.iterations;
            row.converged = r.report.converged;
            row.final_residual = r.report.final_residual;
            row.build_seconds = r.build_seconds;
            row.solve_seconds = r.report.solve_seconds;
            row.prec_bytes = r.prec.bytes;
            row.stored_blocks = r.prec.stored;
            row.total_blocks = r.prec.blocks;
            row.dielectric_ratio = r.dielectric_ratio;
            row.dims = {r.grid.nx, r.grid.ny, r.grid.nz};
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        if (progress) {
            std::lock_guard lock(report_mutex);
            progress(row);
        }
    });
    return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out.precision(10);
    if (rows.empty()) throw Error("no sweep rows to write");
    bool first = true;
    for (const auto& [name, value] : rows.front().params) {
        out << (first ? "" : ",") << name;
        first = false;
    }
    for (const auto& col : kSweepColumns) out << (first ? "" : ",") << col, first = false;
    out << '\n';
    for (const SweepRow& r : rows) {
        for (const auto& [name, value] : r.params) out << csv_quote(value) << ',';
        out << r.iterations << ',' << (r.converged ? 1 : 0) << ',' << r.final_residual << ',' << r.build_seconds << ','
            << r.solve_seconds << ',' << r.prec_bytes << ',' << r.stored_blocks << ',' << r.total_blocks << ','
            << r.dielectric_ratio << ',' << r.dims[0] << ',' << r.dims[1] << ',' << r.dims[2] << ','
            << csv_quote(r.error) << '\n';
    }
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error("empty sweep file " + path.string());
    const auto header = csv_split(line);
    if (header.size() < kSweepColumns.size()) throw Error("sweep header too short in " + path.string());
    const std::size_t nparams = header.size() - kSweepColumns.size();
    for (std::size_t i = 0; i < kSweepColumns.size(); ++i)
        if (header[nparams + i] != kSweepColumns[i]) throw Error("unexpected sweep column '" + header[nparams + i] + "'");

    std::vector<SweepRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = csv_split(line);
        if (f.size() != header.size()) throw Error("sweep row " + std::to_string(lineno) + " has the wrong field count");
        SweepRow r;
        for (std::size_t i = 0; i < nparams; ++i) r.params.emplace_back(header[i], f[i]);
        const auto* v = f.data() + nparams;
        try {
            r.iterations = std::stoi(v[0]);
            r.converged = v[1] == "1";
            r.final_residual = std::stod(v[2]);
            r.build_seconds = std::stod(v[3]);
            r.solve_seconds = std::stod(v[4]);
            r.prec_bytes = std::stoull(v[5]);
            r.stored_blocks = std::stoull(v[6]);
            r.total_blocks = std::stoull(v[7]);
            r.dielectric_ratio = std::stod(v[8]);
            r.dims = {std::stoi(v[9]), std::stoi(v[10]), std::stoi(v[11])};
        } catch (const std::exception&) {
            throw Error("malformed sweep row " + std::to_string(lineno));
        }
        r.error = v[12];
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Spectrum

SpectrumResult spectrum_run(const RunConfig& config)
{
    const Prepared p = prepare(config, nullptr);
    const Eigen::Index n = Eigen::Index(p.device.map.grid().unknowns());
    if (n > kSpectrumLimit)
        throw DomainError("spectrum needs at most " + std::to_string(kSpectrumLimit) + " unknowns, device has " +
                          std::to_string(n));
    SpectrumResult out;
    const DenseMatrix A = dense_operator(p.op->kernel, p.coeff);
    out.unpreconditioned = spectrum(A);
    if (const auto prec = make_preconditioner(config, p, config.threads)) {
        const DenseMatrix P = dense_from_operator([&](const FieldVector& x) { return prec->apply(x); }, n);
        out.preconditioned = spectrum(A, P);
    }
    return out;
}

void write_spectrum_csv(const std::filesystem::path& path, const SpectrumResult& s)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out.precision(17);
    out << "kind,index,re,im\n";
    for (std::size_t i = 0; i < s.unpreconditioned.size(); ++i)
        out << "unpreconditioned," << i << ',' << s.unpreconditioned[i].real() << ',' << s.unpreconditioned[i].imag()
            << '\n';
    for (std::size_t i = 0; i < s.preconditioned.size(); ++i)
        out << "preconditioned," << i << ',' << s.preconditioned[i].real() << ',' << s.preconditioned[i].imag() << '\n';
}

// ---------------------------------------------------------------------------
// Validation

namespace {

CheckResult check(std::string name, bool ok, std::string detail)
{
    return {std::move(name), ok, std::move(detail)};
}

std::string sci(double v)
{
    std::ostringstream s;
    s.precision(3);
    s << std::scientific << v;
    return s.str();
}

FieldVector random_vector(Eigen::Index n, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    FieldVector x(n);
    for (auto& v : x) v = cplx(d(rng), d(rng));
    return x;
}

double parity_defect(const ToeplitzKernel& K)
{
    const VoxelGrid& g = K.grid();
    double worst = 0.0;
    for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b)
            for (int dz = -(g.nz - 1); dz < g.nz; ++dz)
                for (int dy = -(g.ny - 1); dy < g.ny; ++dy)
                    for (int dx = -(g.nx - 1); dx < g.nx; ++dx) {
                        const std::array<int, 3> d{dx, dy, dz};
                        const cplx v = K.entry(a, b, dx, dy, dz);
                        const double scale = std::max(std::abs(v), 1e-300);
                        for (int axis = 0; axis < 3; ++axis) {
                            std::array<int, 3> f = d;
                            f[axis] = -f[axis];
                            const double s = (a == b) ? 1.0 : ((axis == a) != (axis == b) ? -1.0 : 1.0);
                            const cplx w = K.entry(a, b, f[0], f[1], f[2]);
                            worst = std::max(worst, std::abs(w - s * v) / scale);
                        }
                    }
    return worst;
}

} // namespace

std::vector<CheckResult> validate(Fault fault)
{
    std::vector<CheckResult> out;
    const double k0 = 0.3;

    // Kernel structure on a 3x3x3 grid with k0 delta = 0.3.
    {
        const VoxelGrid g(3, 3, 3, 1.0);
        ToeplitzKernel K = assemble_kernel(g, k0);
        if (fault == Fault::KernelParity) K.tensor(comp_index(0, 1))[K.offset_index(1, 1, 0)] *= -1.0;
        const double parity = parity_defect(K);
        out.push_back(check("kernel-parity", parity < 1e-12, "max parity defect " + sci(parity)));

        const DenseMatrix N = dense_kernel(K);
        const double sym = (N - N.transpose()).norm() / N.norm();
        out.push_back(check("kernel-symmetry", sym < 1e-13, "|N - N^T| / |N| = " + sci(sym)));

        const DenseMatrix B = oracle::brute_force_kernel(g, k0);
        const double err = (N - B).cwiseAbs().maxCoeff() / B.cwiseAbs().maxCoeff();
        out.push_back(check("kernel-brute-force", err < 1e-12, "max entry error " + sci(err)));
    }

    // FFT apply against the dense operator, random complex map.
    {
        const VoxelGrid g(4, 3, 2, 1.0);
        const ToeplitzKernel K = assemble_kernel(g, k0);
        const CoefficientMap m = medium_coefficient(oracle::random_map(g, 7));
        const OperatorPlan plan(K);
        const DenseMatrix A = dense_operator(K, m);
        const DenseMatrix F = dense_from_operator([&](const FieldVector& x) { return plan.apply_system(m, x); },
                                                  Eigen::Index(g.unknowns()));
        const double err = oracle::column_error(F, A);
        out.push_back(check("fft-operator-oracle", err < 1e-12, "max column error " + sci(err)));

        GmresOptions opt;
        opt.tol = 1e-8;
        opt.maxit = 500;
        const FieldVector b = random_vector(A.rows(), 11);
        const SolveResult s = gmres([&](const FieldVector& x) { return plan.apply_system(m, x); }, b, opt);
        const FieldVector xd = A.partialPivLu().solve(b);
        const double e = (s.x - xd).norm() / xd.norm();
        out.push_back(check("gmres-dense-solve", s.report.converged && e < 10 * opt.tol,
                            std::to_string(s.report.iterations) + " iterations, solution error " + sci(e)));
    }

    // Chan circulant against the Frobenius projection.
    {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> d;
        double worst = 0.0;
        for (int n = 2; n <= 12; ++n) {
            std::vector<cplx> col(n), row(n);
            for (auto& v : col) v = cplx(d(rng), d(rng));
            for (auto& v : row) v = cplx(d(rng), d(rng));
            row[0] = col[0];
            const auto c = chan_circulant<cplx>(col, row);
            const auto ref = oracle::frobenius_circulant(oracle::toeplitz(col, row));
            for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(c[i] - ref[i]));
        }
        out.push_back(check("chan-frobenius", worst < 1e-12, "max deviation " + sci(worst)));
    }

    // Circulant preconditioners invert their own circulant operators.
    {
        const VoxelGrid g(5, 3, 2, 1.0);
        const ToeplitzKernel K = assemble_kernel(g, k0);
        PermittivityMap map(g, 4.0);
        const CoefficientMap mt = homogenize(map, Homogenization::Mode);
        const Eigen::Index n = Eigen::Index(g.unknowns());
        const FieldVector x = random_vector(n, 5);

        const DenseMatrix C1 = oracle::chan_x_operator(K, mt);
        const OneLevelPrec p1 = build_one_level(K, mt);
        const double e1 = (C1 * p1.apply(x) - x).norm() / x.norm();
        out.push_back(check("one-level-inverse", e1 < 1e-12, "|C P x - x| / |x| = " + sci(e1)));

        const DenseMatrix C2 = oracle::chan_xy_operator(K, mt);
        const TwoLevelPrec p2 = build_two_level(K, mt);
        const double e2 = (C2 * p2.apply(x) - x).norm() / x.norm();
        out.push_back(check("two-level-inverse", e2 < 1e-12, "|C P x - x| / |x| = " + sci(e2)));

        const OneLevelPrec r0 = build_reduced_one_level(K, mt, 0.0);
        const double er = (r0.apply(x) - p1.apply(x)).norm() / p1.apply(x).norm();
        out.push_back(check("reduced-tol0-equals-full", er < 1e-14, "difference " + sci(er)));
    }

    // Blocked preconditioner acts box-wise and as identity elsewhere.
    {
        const VoxelGrid g(6, 5, 2, 1.0);
        const ToeplitzKernel K = assemble_kernel(g, k0);
        PermittivityMap map(g);
        for (int iz = 0; iz < 2; ++iz)
            for (int ix = 0; ix < 6; ++ix) {
                map.set(ix, 0, iz, 4.0);
                map.set(ix, 1, iz, 4.0);
                map.set(ix, 4, iz, 4.0);
            }
        Box lower;
        lower.lo = {0, 0, 0};
        lower.hi = {6, 2, 2};
        Box upper;
        upper.lo = {0, 4, 0};
        upper.hi = {6, 5, 2};
        const Partition part = partition_boxes(g, {lower, upper});
        const BlockedPrec bp = build_blocked(K, map, part);
        const FieldVector x = random_vector(Eigen::Index(g.unknowns()), 9);
        const FieldVector y = bp.apply(x);
        const FieldVector local = bp.box_preconditioner(0).apply(bp.restrict_to(0, x));
        double e = (bp.restrict_to(0, y) - local).norm() / local.norm();
        double gap = 0.0;
        const std::size_t nv = g.voxels();
        for (int a = 0; a < 3; ++a)
            for (int iz = 0; iz < 2; ++iz)
                for (int ix = 0; ix < 6; ++ix)
                    for (int iy = 2; iy < 4; ++iy) {
                        const std::size_t i = a * nv + g.index(ix, iy, iz);
                        gap = std::max(gap, std::abs(y[Eigen::Index(i)] - x[Eigen::Index(i)]));
                    }
        out.push_back(check("blocked-consistency", e < 1e-14 && gap == 0.0,
                            "box mismatch " + sci(e) + ", gap deviation " + sci(gap)));
    }
    return out;
}

} // namespace vie
