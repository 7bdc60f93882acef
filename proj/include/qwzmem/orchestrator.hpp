#pragma once

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <unistd.h>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qwzmem/berry_topology.hpp"
#include "qwzmem/bloch_model.hpp"
#include "qwzmem/errors.hpp"
#include "qwzmem/memory_analyzer.hpp"
#include "qwzmem/quench_engine.hpp"

namespace qwzmem {

inline constexpr const char* library_version = "0.1.0";
inline constexpr int csv_schema_version = 1;
inline constexpr int manifest_schema_version = 1;
inline constexpr std::size_t max_time_steps = 20'000'000;

enum class Command { phase_diagram, quench, scan_period, coincidence, decode, export_field };

inline std::string_view to_string(Command c) {
    switch (c) {
        case Command::phase_diagram: return "phase-diagram";
        case Command::quench: return "quench";
        case Command::scan_period: return "scan-period";
        case Command::coincidence: return "coincidence";
        case Command::decode: return "decode";
        case Command::export_field: return "export-field";
    }
    return "?";
}

inline Command parse_command(std::string_view s) {
    for (Command c : {Command::phase_diagram, Command::quench, Command::scan_period,
                      Command::coincidence, Command::decode, Command::export_field})
        if (to_string(c) == s) return c;
    throw ConfigError("unknown command '" + std::string(s) + "'",
                      "use phase-diagram, quench, scan-period, coincidence, decode or export-field");
}

/// Probe momentum with the spelling it was given in ("pi-pi", "zero-zero" or "kx,ky").
struct Probe {
    std::string label = "pi-pi";
    MomentumPoint k{pi, pi};
};

namespace detail {

inline double parse_angle(std::string s) {
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    while (!s.empty() && s.back() == ' ') s.pop_back();
    if (s == "pi") return pi;
    if (s == "-pi") return -pi;
    if (s == "zero") return 0.0;
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ConfigError("cannot read probe component '" + s + "'",
                          "write a number in radians or 'pi'");
    return v;
}

}  // namespace detail

inline Probe parse_probe(const std::string& s) {
    if (s == "pi-pi") return {s, {pi, pi}};
    if (s == "zero-zero") return {s, {0.0, 0.0}};
    if (s == "pi-zero") return {s, {pi, 0.0}};
    if (s == "zero-pi") return {s, {0.0, pi}};
    const auto comma = s.find(',');
    if (comma == std::string::npos)
        throw ConfigError("cannot read probe '" + s + "'",
                          "use pi-pi, zero-zero or an explicit 'kx,ky'");
    return {s, {detail::parse_angle(s.substr(0, comma)), detail::parse_angle(s.substr(comma + 1))}};
}

/**
 * @brief Everything a run needs, after config file and flags are merged.
 *
 * `masses` is the m list for phase-diagram and the m' list for scan-period.
 * `t_max` unset means 10 for quench-like commands and 10 theoretical
 * periods (capped at 1000) per scan row.
 */
struct RunConfig {
    Command command = Command::quench;
    double m_initial = 3.0;
    double m_quench = 1.0;
    int n_side = 100;
    double dt = 0.01;
    std::optional<double> t_max;
    double quench_delay = 0.0;
    Gauge initial_gauge = Gauge::b;
    Probe probe;
    double disk_radius = default_disk_radius;
    double vortex_radius = 0.0;
    VortexObservable observable = VortexObservable::pseudospin_texture;
    std::string branch = "above";  // above | below | none | joint
    std::vector<double> masses;
    std::vector<double> times;  // export-field snapshot times
    std::filesystem::path output_dir = "qwzmem_out";
    std::uint64_t seed = 0;

    double effective_t_max() const { return t_max.value_or(10.0); }

    std::vector<double> effective_masses() const {
        if (!masses.empty()) return masses;
        if (command == Command::phase_diagram) return {-3.0, -1.0, 1.0, 3.0};
        return {-1.5, -1.0, -0.5, 0.5, 1.0, 1.5};
    }

    std::vector<double> effective_times() const { return times.empty() ? std::vector{0.0} : times; }

    QuenchProtocol protocol() const {
        return {MassParameter{m_initial}, MassParameter{m_quench}, effective_t_max(), dt,
                initial_gauge, quench_delay};
    }

    VorticityOptions vortex_options() const {
        VorticityOptions o;
        o.radius = vortex_radius;
        o.observable = observable;
        return o;
    }
};

// ---------------------------------------------------------------------------
// Config file.

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& obj, std::initializer_list<std::string_view> keys,
                           const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (auto k : keys) known = known || it.key() == k;
        if (!known) throw ConfigError("unknown key '" + where + it.key() + "' in config");
    }
}

template <class T>
void read_key(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + where + key + "' has the wrong type");
    }
}

inline Gauge parse_gauge(const std::string& s) {
    if (s == "A" || s == "a") return Gauge::a;
    if (s == "B" || s == "b") return Gauge::b;
    if (s == "patched") return Gauge::patched;
    throw ConfigError("unknown gauge '" + s + "'", "use A, B or patched");
}

inline VortexObservable parse_observable(const std::string& s) {
    if (s == "texture") return VortexObservable::pseudospin_texture;
    if (s == "connection") return VortexObservable::berry_connection;
    throw ConfigError("unknown vortex observable '" + s + "'", "use texture or connection");
}

inline std::string_view observable_name(VortexObservable o) {
    return o == VortexObservable::pseudospin_texture ? "texture" : "connection";
}

}  // namespace detail

/// Read a JSON config file into `cfg`, leaving absent keys untouched.
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
    using detail::read_key;
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    detail::reject_unknown(j, {"command", "model", "time", "probe", "analysis", "output_dir", "seed"},
                           "");
    if (j.contains("command")) {
        std::string c;
        read_key(j, "command", c, "");
        cfg.command = parse_command(c);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown(m, {"m_initial", "m_quench", "n_side", "initial_gauge"}, "model.");
        read_key(m, "m_initial", cfg.m_initial, "model.");
        read_key(m, "m_quench", cfg.m_quench, "model.");
        read_key(m, "n_side", cfg.n_side, "model.");
        if (m.contains("initial_gauge")) {
            std::string g;
            read_key(m, "initial_gauge", g, "model.");
            cfg.initial_gauge = detail::parse_gauge(g);
        }
    }
    if (j.contains("time")) {
        const auto& t = j.at("time");
        detail::reject_unknown(t, {"dt", "t_max", "quench_delay", "snapshots"}, "time.");
        read_key(t, "dt", cfg.dt, "time.");
        if (t.contains("t_max")) {
            double v = 0.0;
            read_key(t, "t_max", v, "time.");
            cfg.t_max = v;
        }
        read_key(t, "quench_delay", cfg.quench_delay, "time.");
        read_key(t, "snapshots", cfg.times, "time.");
    }
    if (j.contains("probe")) {
        const auto& p = j.at("probe");
        if (p.is_string()) {
            cfg.probe = parse_probe(p.get<std::string>());
        } else if (p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number()) {
            const double kx = p[0].get<double>();
            const double ky = p[1].get<double>();
            cfg.probe = {p.dump(), {kx, ky}};
        } else {
            throw ConfigError("probe must be a name or [kx, ky]");
        }
    }
    if (j.contains("analysis")) {
        const auto& a = j.at("analysis");
        detail::reject_unknown(
            a, {"disk_radius", "vortex_radius", "observable", "branch", "masses"}, "analysis.");
        read_key(a, "disk_radius", cfg.disk_radius, "analysis.");
        read_key(a, "vortex_radius", cfg.vortex_radius, "analysis.");
        if (a.contains("observable")) {
            std::string o;
            read_key(a, "observable", o, "analysis.");
            cfg.observable = detail::parse_observable(o);
        }
        read_key(a, "branch", cfg.branch, "analysis.");
        read_key(a, "masses", cfg.masses, "analysis.");
    }
    if (j.contains("output_dir")) {
        std::string o;
        read_key(j, "output_dir", o, "");
        cfg.output_dir = o;
    }
    read_key(j, "seed", cfg.seed, "");
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    RunConfig cfg;
    apply_config_json(cfg, j);
    return cfg;
}

/// Nested JSON echo of a config; loading it back gives the same config.
inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["command"] = std::string(to_string(c.command));
    j["model"] = {{"m_initial", c.m_initial},
                  {"m_quench", c.m_quench},
                  {"n_side", c.n_side},
                  {"initial_gauge", std::string(to_string(c.initial_gauge))}};
    nlohmann::json t = {{"dt", c.dt}, {"quench_delay", c.quench_delay}, {"snapshots", c.times}};
    if (c.t_max) t["t_max"] = *c.t_max;
    j["time"] = t;
    if (c.probe.label == "pi-pi" || c.probe.label == "zero-zero" || c.probe.label == "pi-zero" ||
        c.probe.label == "zero-pi")
        j["probe"] = c.probe.label;
    else
        j["probe"] = {c.probe.k.kx, c.probe.k.ky};
    j["analysis"] = {{"disk_radius", c.disk_radius},
                     {"vortex_radius", c.vortex_radius},
                     {"observable", std::string(detail::observable_name(c.observable))},
                     {"branch", c.branch},
                     {"masses", c.masses}};
    j["output_dir"] = c.output_dir.string();
    j["seed"] = c.seed;
    return j;
}

// ---------------------------------------------------------------------------
// Validation.

namespace detail {

inline void require(bool ok, const std::string& what, const std::string& hint = {}) {
    if (!ok) throw ConfigError(what, hint);
}

inline void check_mass(double m, const std::string& name) {
    require(std::isfinite(m), name + " must be finite");
    if (MassParameter{m}.critical()) {
        std::ostringstream os;
        os << name << " = " << m << " is critical (gap closes)";
        throw CriticalMass(os.str(), "move " + name + " away from 0 and +-2");
    }
}

inline void check_loop_avoids_exclusions(const RunConfig& c, const KGrid& grid,
                                         const MomentumPoint& probe) {
    if (c.initial_gauge == Gauge::patched) return;
    const WindingLoop loop = make_loop(grid, probe, c.vortex_options().effective_radius(grid));
    const bool connection = c.observable == VortexObservable::berry_connection;
    for (std::size_t s = 0; s < loop.size(); ++s) {
        const NodeIndex n = loop.sample(s);
        std::vector<NodeIndex> nodes{n};
        if (connection) {
            nodes.push_back(grid.node(n.i + 1L, n.j));
            nodes.push_back(grid.node(n.i, n.j + 1L));
        }
        for (const NodeIndex& q : nodes) {
            const BlochVector r = r_vector(MassParameter{c.m_initial}, grid.point(q));
            const bool bad = c.initial_gauge == Gauge::a ? gauge_a_singular(r) : gauge_b_singular(r);
            if (bad)
                throw SingularField("vortex loop around " + to_string(probe) +
                                        " touches the excluded node " + to_string(grid.point(q)) +
                                        " of gauge " + std::string(to_string(c.initial_gauge)),
                                    "use --probe elsewhere, a different vortex_radius or the "
                                    "patched initial gauge");
        }
    }
}

}  // namespace detail

/**
 * @brief Check every statically checkable precondition of the selected pipeline.
 *
 * Throws ConfigError for malformed values and the domain error the pipeline
 * would hit (CriticalMass, SingularField) when it can be predicted.
 */
inline void validate(const RunConfig& c) {
    using detail::require;
    require(c.n_side >= 4 && c.n_side % 2 == 0, "n_side must be even and >= 4",
            "pass --n-side 100");
    const KGrid grid(c.n_side);
    const double h = grid.spacing();
    require(!c.output_dir.empty(), "output directory must not be empty", "pass --out DIR");

    if (c.command == Command::phase_diagram) {
        require(std::isfinite(c.disk_radius) && c.disk_radius >= h * (1.0 - 1e-9) &&
                    c.disk_radius <= pi / 2.0,
                "disk_radius must lie in [grid spacing, pi/2]");
        for (double m : c.effective_masses()) detail::check_mass(m, "m");
        return;
    }
    // export_field never builds a loop
    if (c.command != Command::export_field)
        require(std::isfinite(c.vortex_radius) &&
                    (c.vortex_radius <= 0.0 ||
                     (c.vortex_radius >= h * (1.0 - 1e-9) && c.vortex_radius <= pi / 2.0)),
                "vortex_radius must be 0 (one grid spacing) or lie in [grid spacing, pi/2]");

    require(std::isfinite(c.dt) && c.dt > 0.0, "dt must be positive", "pass --dt 0.01");
    if (c.t_max) {
        require(std::isfinite(*c.t_max) && *c.t_max > 0.0, "t_max must be positive");
        require(c.dt <= *c.t_max, "dt must not exceed t_max");
        require(*c.t_max / c.dt <= static_cast<double>(max_time_steps),
                "t_max / dt exceeds the step limit", "raise dt or lower t_max");
    }
    require(std::isfinite(c.quench_delay) && c.quench_delay >= 0.0, "quench_delay must be >= 0");
    detail::check_mass(c.m_initial, "m_initial");
    require(std::isfinite(c.m_quench), "m_quench must be finite");
    require(grid.node_of(c.probe.k).has_value(),
            "probe " + to_string(c.probe.k) + " is not a grid node",
            "use pi-pi, zero-zero or a multiple of 2 pi / n_side");

    switch (c.command) {
        case Command::scan_period:
            require(!c.effective_masses().empty(), "scan-period needs at least one mass");
            for (double m : c.effective_masses()) require(std::isfinite(m), "masses must be finite");
            break;
        case Command::decode:
            require(c.branch == "above" || c.branch == "below" || c.branch == "none" ||
                        c.branch == "joint",
                    "branch must be above, below, none or joint");
            if (c.branch != "joint") {
                const auto pp = KGrid(c.n_side).node_of({pi, pi});
                const bool ok = grid.node_of(c.probe.k) == pp ||
                                grid.node_of(c.probe.k) == grid.node_of({0.0, 0.0});
                require(ok, "decode needs probe pi-pi or zero-zero");
            }
            break;
        case Command::export_field:
            for (double t : c.effective_times())
                require(std::isfinite(t) && t >= 0.0, "snapshot times must be finite and >= 0");
            return;
        default: break;
    }

    if (c.command == Command::decode && c.branch == "joint") {
        detail::check_loop_avoids_exclusions(c, grid, {pi, pi});
        detail::check_loop_avoids_exclusions(c, grid, {0.0, 0.0});
    } else {
        detail::check_loop_avoids_exclusions(c, grid, c.probe.k);
    }
}

// ---------------------------------------------------------------------------
// Output.

/// Shortest round-trip decimal; "nan" for NaN.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == 0.0) x = 0.0;  // drop the sign of -0
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

class CsvTable {
   public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    template <class... Cells>
    void row(const Cells&... cells) {
        std::string line;
        (append(line, cells), ...);
        line.pop_back();
        rows_.push_back(std::move(line));
    }

    std::size_t rows() const { return rows_.size(); }

    std::string str() const {
        std::string out;
        for (std::size_t a = 0; a < header_.size(); ++a) {
            out += header_[a];
            out += a + 1 < header_.size() ? ',' : '\n';
        }
        for (const auto& r : rows_) {
            out += r;
            out += '\n';
        }
        return out;
    }

   private:
    static void append(std::string& line, double v) { line += format_double(v) + ','; }
    static void append(std::string& line, int v) { line += std::to_string(v) + ','; }
    static void append(std::string& line, std::size_t v) { line += std::to_string(v) + ','; }
    static void append(std::string& line, const std::string& v) { line += v + ','; }
    static void append(std::string& line, const char* v) { line += std::string(v) + ','; }

    std::vector<std::string> header_;
    std::vector<std::string> rows_;
};

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int a = 0; a < len; ++a) {
        out += hex[md[a] >> 4];
        out += hex[md[a] & 0xf];
    }
    return out;
}

struct OutputFile {
    std::string name;
    std::string content;
    std::size_t rows = 0;
};

struct FileRecord {
    std::string name;
    std::string sha256;
    std::size_t bytes = 0;
    std::size_t rows = 0;
    int schema_version = csv_schema_version;
};

struct RunManifest {
    nlohmann::json config;
    std::vector<FileRecord> files;
    double wall_time_seconds = 0.0;
    std::string version = library_version;
    nlohmann::json summary = nlohmann::json::object();
    std::vector<std::string> warnings;

    nlohmann::json to_json() const {
        nlohmann::json files_json = nlohmann::json::array();
        for (const auto& f : files)
            files_json.push_back({{"name", f.name},
                                  {"sha256", f.sha256},
                                  {"bytes", f.bytes},
                                  {"rows", f.rows},
                                  {"schema_version", f.schema_version}});
        return {{"library_version", version},
                {"manifest_schema_version", manifest_schema_version},
                {"config", config},
                {"files", files_json},
                {"summary", summary},
                {"warnings", warnings},
                {"wall_time_seconds", wall_time_seconds}};
    }
};

namespace detail {

namespace fs = std::filesystem;

inline void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
    out.close();
    if (!out) throw std::runtime_error("failed to write " + p.string());
}

/// Write all files into a sibling temp dir, then rename it into place.
inline void commit_outputs(const fs::path& dir, const std::vector<OutputFile>& files,
                           const std::string& manifest) {
    const fs::path target = fs::absolute(dir);
    if (fs::exists(target)) {
        if (!fs::is_directory(target))
            throw ConfigError("output path " + target.string() + " exists and is not a directory");
        const bool empty = fs::is_empty(target);
        const bool previous_run = fs::exists(target / "manifest.json");
        if (!empty && !previous_run)
            throw ConfigError("output directory " + target.string() +
                                  " is not empty and holds no previous run",
                              "pick a new --out directory");
    }
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp =
        target.parent_path() / ("." + target.filename().string() + ".tmp-" +
                                std::to_string(static_cast<long>(::getpid())));
    fs::remove_all(tmp);
    fs::create_directory(tmp);
    try {
        for (const auto& f : files) write_file(tmp / f.name, f.content);
        write_file(tmp / "manifest.json", manifest);
        if (fs::exists(target)) fs::remove_all(target);
        fs::rename(tmp, target);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
}

inline OutputFile vorticity_csv(const VorticitySeries& s) {
    CsvTable t({"t", "index", "raw_winding"});
    for (std::size_t i = 0; i < s.times.size(); ++i)
        t.row(s.times[i], s.indices[i], s.raw_windings[i]);
    return {"vorticity.csv", t.str(), t.rows()};
}

inline OutputFile loschmidt_csv(const LoschmidtSeries& l) {
    CsvTable t({"t", "re", "im", "abs"});
    for (std::size_t i = 0; i < l.times.size(); ++i)
        t.row(l.times[i], l.values[i].real(), l.values[i].imag(), std::abs(l.values[i]));
    return {"loschmidt.csv", t.str(), t.rows()};
}

inline nlohmann::json flips_json(const std::vector<double>& flips) {
    nlohmann::json j = nlohmann::json::array();
    for (double f : flips) j.push_back(f);
    return j;
}

struct PipelineResult {
    std::vector<OutputFile> files;
    nlohmann::json summary = nlohmann::json::object();
    std::vector<std::string> warnings;
};

inline PipelineResult run_phase_diagram(const RunConfig& c) {
    const KGrid grid(c.n_side);
    CsvTable t({"m", "c_patchwise", "c_fhs", "sigma_xy"});
    auto masses = c.effective_masses();
    std::sort(masses.begin(), masses.end());
    for (double m : masses) {
        const MassParameter mp{m};
        const int cp = chern_patchwise(mp, grid, c.disk_radius);
        const int cf = chern_fhs(ground_state_field(mp, grid, Gauge::patched));
        t.row(m, cp, cf, hall_conductance(cf));
    }
    return {{{"phase_diagram.csv", t.str(), t.rows()}}, {}, {}};
}

inline PipelineResult run_quench(const RunConfig& c) {
    const KGrid grid(c.n_side);
    const QuenchProtocol p = c.protocol();
    const VorticitySeries v = vorticity_series(p, grid, c.probe.k, c.vortex_options());
    const LoschmidtSeries l = loschmidt_series(p, c.probe.k);
    PipelineResult r;
    r.files = {vorticity_csv(v), loschmidt_csv(l)};
    const auto flips = flip_times(v);
    r.summary["flip_times"] = flips_json(flips);
    try {
        const PeriodEstimate pe = estimate_period(flips, p.dt);
        r.summary["period_measured"] = pe.period;
        r.summary["period_uncertainty"] = pe.uncertainty;
    } catch (const InsufficientCycles& e) {
        r.warnings.push_back(e.what());
    }
    try {
        r.summary["period_theory"] = theoretical_period(p.m_quench, c.probe.k);
    } catch (const GapClosed& e) {
        r.warnings.push_back(e.what());
    }
    return r;
}

inline PipelineResult run_scan(const RunConfig& c) {
    const KGrid grid(c.n_side);
    ScanOptions opt;
    opt.dt = c.dt;
    opt.t_max = c.t_max.value_or(0.0);
    opt.initial_gauge = c.initial_gauge;
    opt.vortex = c.vortex_options();
    const auto rows =
        scan_period_vs_mass(MassParameter{c.m_initial}, c.effective_masses(), grid, c.probe.k, opt);
    CsvTable t({"m_quench", "period_measured", "period_theory", "ratio", "n_cycles"});
    PipelineResult r;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& row : rows) {
        t.row(row.m_quench, row.measured ? row.measured->period : nan, row.period_theory, row.ratio,
              row.measured ? row.measured->n_cycles_used : 0);
        if (!row.error.empty())
            r.warnings.push_back("m_quench = " + format_double(row.m_quench) + ": " + row.error);
    }
    r.files = {{"period_scan.csv", t.str(), t.rows()}};
    return r;
}

inline PipelineResult run_coincidence(const RunConfig& c) {
    const KGrid grid(c.n_side);
    const QuenchProtocol p = c.protocol();
    const VorticitySeries v = vorticity_series(p, grid, c.probe.k, c.vortex_options());
    const LoschmidtSeries l = loschmidt_series(p, c.probe.k);
    const CoincidenceResult res = coincidence_test(l, v);
    CsvTable t({"flip_time", "sign_change_time", "offset"});
    for (const auto& pr : res.pairs) t.row(pr.flip_time, pr.sign_change_time, pr.offset);
    PipelineResult r;
    r.files = {vorticity_csv(v), loschmidt_csv(l), {"coincidence.csv", t.str(), t.rows()}};
    r.summary["max_offset"] = res.max_offset;
    r.summary["max_offset_in_dt"] = res.max_offset / p.dt;
    r.summary["pairs"] = res.pairs.size();
    return r;
}

inline PipelineResult run_decode(const RunConfig& c) {
    const KGrid grid(c.n_side);
    QuenchProtocol p = c.protocol();
    CsvTable t({"probe", "period", "period_uncertainty", "candidate_above", "candidate_below",
                "m_decoded", "m_uncertainty"});
    PipelineResult r;
    auto series_at = [&](const MomentumPoint& k) {
        if (!c.t_max) p.t_max = default_t_max(p.m_quench, k);
        return vorticity_series(p, grid, k, c.vortex_options());
    };
    auto add_row = [&](const std::string& probe, const DecodedMass& d) {
        t.row(probe, d.period.period, d.period.uncertainty, d.candidates[0], d.candidates[1],
              d.m_quench.value(), d.uncertainty);
    };
    if (c.branch == "joint") {
        const auto vp = series_at({pi, pi});
        const auto vz = series_at({0.0, 0.0});
        const JointDecode jd = decode_joint(vp, vz);
        add_row("pi-pi", jd.at_pi_pi);
        add_row("zero-zero", jd.at_origin);
        r.summary["m_decoded"] = jd.m_quench.value();
        r.summary["m_uncertainty"] = jd.uncertainty;
        r.summary["discrepancy"] = jd.discrepancy;
    } else {
        const BranchHint hint = c.branch == "above"   ? BranchHint::above
                                : c.branch == "below" ? BranchHint::below
                                                      : BranchHint::none;
        const auto v = series_at(c.probe.k);
        const DecodedMass d = decode_quench_mass(v, c.probe.k, hint);
        add_row(c.probe.label, d);
        r.summary["m_decoded"] = d.m_quench.value();
        r.summary["m_uncertainty"] = d.uncertainty;
    }
    r.summary["m_true"] = c.m_quench;
    r.files = {{"decode.csv", t.str(), t.rows()}};
    return r;
}

inline PipelineResult run_export(const RunConfig& c) {
    const KGrid grid(c.n_side);
    const QuenchProtocol p = c.protocol();
    PipelineResult r;
    for (double t : c.effective_times()) {
        const EvolvedState st = evolve_field(p, grid, t);
        const ConnectionField a = berry_connection_masked(st.field);
        const PlanarField tex = pseudospin_texture(st.field);
        CsvTable field({"kx", "ky", "ax", "ay", "density1", "flag"});
        CsvTable texture({"kx", "ky", "sx", "sy", "flag"});
        std::size_t n_flagged = 0;
        for (std::size_t idx = 0; idx < grid.size(); ++idx) {
            const MomentumPoint k = grid.point(grid.node_at(idx));
            const Spinor& s = st.field.spinors[idx];
            std::string flag = "ok";
            if (st.field.is_excluded(idx))
                flag = "excluded";
            else if (!std::isfinite(a.vx[idx]))
                flag = "singular";
            if (flag != "ok") ++n_flagged;
            field.row(k.kx, k.ky, a.vx[idx], a.vy[idx], std::norm(s.c1), flag);
            texture.row(k.kx, k.ky, tex.vx[idx], tex.vy[idx],
                        st.field.is_excluded(idx) ? "excluded" : "ok");
        }
        const std::string tag = format_double(t);
        r.files.push_back({"field_t" + tag + ".csv", field.str(), field.rows()});
        r.files.push_back({"texture_t" + tag + ".csv", texture.str(), texture.rows()});
        if (n_flagged > 0)
            r.warnings.push_back("t = " + tag + ": " + std::to_string(n_flagged) +
                                 " node(s) without a Berry connection (flagged rows)");
    }
    return r;
}

}  // namespace detail

/**
 * @brief Run the configured pipeline and write its outputs atomically.
 *
 * All files are produced in memory first; nothing touches the output
 * directory unless the whole pipeline succeeds.
 */
inline RunManifest run(const RunConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    validate(config);
    detail::PipelineResult res;
    switch (config.command) {
        case Command::phase_diagram: res = detail::run_phase_diagram(config); break;
        case Command::quench: res = detail::run_quench(config); break;
        case Command::scan_period: res = detail::run_scan(config); break;
        case Command::coincidence: res = detail::run_coincidence(config); break;
        case Command::decode: res = detail::run_decode(config); break;
        case Command::export_field: res = detail::run_export(config); break;
    }
    RunManifest m;
    m.config = config_to_json(config);
    for (const auto& f : res.files)
        m.files.push_back({f.name, sha256_hex(f.content), f.content.size(), f.rows,
                           csv_schema_version});
    m.summary = std::move(res.summary);
    m.warnings = std::move(res.warnings);
    m.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    detail::commit_outputs(config.output_dir, res.files, m.to_json().dump(2) + "\n");
    return m;
}

/// Process exit code for an error class.
inline int exit_code(ErrorClass c) {
    switch (c) {
        case ErrorClass::config: return 2;
        case ErrorClass::domain: return 3;
        case ErrorClass::insufficient_cycles: return 4;
    }
    return 1;
}

}  // namespace qwzmem
