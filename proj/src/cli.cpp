#include "trilab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "trilab/experiments.hpp"
#include "trilab/packets.hpp"
#include "trilab/patches.hpp"
#include "trilab/tables.hpp"
#include "trilab/waves.hpp"

namespace trilab::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using geometry::Box;
using geometry::PatchPtr;
using waves::FreeWave;
using waves::FrequencyGrid;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Key-value store and config syntax
// ---------------------------------------------------------------------------

KeyValues KeyValues::parse_text(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    auto trim = [](std::string s) {
        auto issp = [](unsigned char c) { return std::isspace(c); };
        while (!s.empty() && issp(s.front())) s.erase(s.begin());
        while (!s.empty() && issp(s.back())) s.pop_back();
        return s;
    };
    while (std::getline(in, line)) {
        ++number;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        require(eq != std::string::npos,
                "config: expected `key = value` on line " + std::to_string(number));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        require(!key.empty(), "config: empty key on line " + std::to_string(number));
        kv.set(key, value, number);
    }
    return kv;
}

void KeyValues::set(const std::string& key, const std::string& value, int line) {
    entries_[key] = ConfigEntry{value, line};
}

const ConfigEntry* KeyValues::find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

std::string KeyValues::canonical_text() const {
    std::string out;
    for (const auto& [key, entry] : entries_) {
        out += key;
        out += " = ";
        out += entry.value;
        out += "\n";
    }
    return out;
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    ensure(fields.size() == columns_, "csv: column count mismatch");
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) text_ += ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            text_ += '"';
            for (char ch : f) {
                text_ += ch;
                if (ch == '"') text_ += '"';
            }
            text_ += '"';
        } else {
            text_ += f;
        }
    }
    text_ += '\n';
}

const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names = {
        "geometry check",    "extend",           "packets decompose",
        "packets census",    "table build",      "table census",
        "counterexample run", "recursion iterate", "trend run",
        "threshold"};
    return names;
}

namespace {

std::string where(const ConfigEntry& entry) {
    return entry.line > 0 ? "line " + std::to_string(entry.line) : "command line";
}

/// Typed, range-checked access to the key-value store. Every key must be
/// consumed; finish() rejects leftovers by name and line.
class ConfigReader {
public:
    explicit ConfigReader(const KeyValues& kv) : kv_(kv) {
        for (const char* key : {"task", "seed", "threads", "out_dir"}) consumed_.insert(key);
    }

    bool has(const std::string& key) const { return kv_.has(key); }

    std::string gets(const std::string& key, const std::string& def,
                     const std::vector<std::string>& allowed = {}) {
        consumed_.insert(key);
        const ConfigEntry* entry = kv_.find(key);
        std::string value = entry ? entry->value : def;
        if (!allowed.empty() &&
            std::find(allowed.begin(), allowed.end(), value) == allowed.end()) {
            std::string options;
            for (const auto& a : allowed) options += (options.empty() ? "" : ", ") + a;
            fail(key, "must be one of {" + options + "}");
        }
        return value;
    }

    long long geti(const std::string& key, long long def, long long lo, long long hi) {
        consumed_.insert(key);
        const ConfigEntry* entry = kv_.find(key);
        long long value = def;
        if (entry) {
            try {
                std::size_t pos = 0;
                value = std::stoll(entry->value, &pos);
                require(pos == entry->value.size(), "");
            } catch (...) {
                fail(key, "expected an integer, got `" + entry->value + "`");
            }
        }
        if (value < lo || value > hi)
            fail(key, "value " + std::to_string(value) + " out of range [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return value;
    }

    double getd(const std::string& key, double def, double lo, double hi) {
        consumed_.insert(key);
        const ConfigEntry* entry = kv_.find(key);
        double value = entry ? parse_double(key, entry->value) : def;
        if (value < lo || value > hi)
            fail(key, "value " + format_double(value) + " out of range [" +
                          format_double(lo) + ", " + format_double(hi) + "]");
        return value;
    }

    bool getb(const std::string& key, bool def) {
        std::string v = gets(key, def ? "1" : "0", {"0", "1", "true", "false"});
        return v == "1" || v == "true";
    }

    std::vector<double> list(const std::string& key, const std::vector<double>& def) {
        consumed_.insert(key);
        const ConfigEntry* entry = kv_.find(key);
        if (!entry) return def;
        std::vector<double> out;
        std::string token;
        std::istringstream in(entry->value);
        while (std::getline(in, token, ','))
            if (!token.empty()) out.push_back(parse_double(key, token));
        if (out.empty()) fail(key, "expected a comma-separated list of numbers");
        return out;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& message) const {
        const ConfigEntry* entry = kv_.find(key);
        std::string site = entry ? " (" + where(*entry) + ")" : "";
        throw ConfigError("config key `" + key + "`" + site + ": " + message);
    }

    void cross_require(bool condition, const std::string& message) const {
        if (!condition) throw ConfigError("config: " + message);
    }

    void finish() const {
        for (const auto& [key, entry] : kv_.entries()) {
            if (!consumed_.count(key))
                throw ConfigError("config: unknown key `" + key + "` (" + where(entry) + ")");
        }
    }

private:
    double parse_double(const std::string& key, const std::string& text) const {
        try {
            std::size_t pos = 0;
            double value = std::stod(text, &pos);
            require(pos == text.size(), "");
            return value;
        } catch (...) {
            fail(key, "expected a number, got `" + text + "`");
        }
    }

    const KeyValues& kv_;
    std::set<std::string> consumed_;
};

// ---------------------------------------------------------------------------
// Shared builders
// ---------------------------------------------------------------------------

VectorXd to_vector(const std::vector<double>& v) {
    VectorXd out(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
    return out;
}

patches::PatchSpec read_patch_spec(ConfigReader& reader, const std::string& prefix, int n) {
    patches::PatchSpec spec;
    spec.n = n;
    spec.kind = reader.gets(prefix + ".kind", "double_cone",
                            {"sphere_cap", "paraboloid", "double_cone", "cylinder",
                             "hyperplane"});
    spec.graph_axis = static_cast<int>(reader.geti(prefix + ".graph_axis", -1, -1, n));
    std::vector<double> def_lo(n, -0.25), def_hi(n, 0.25);
    if (spec.kind == "double_cone") {
        def_lo[0] = 0.75;
        def_hi[0] = 1.25;
    }
    std::vector<double> lo = reader.list(prefix + ".box_lo", def_lo);
    std::vector<double> hi = reader.list(prefix + ".box_hi", def_hi);
    reader.cross_require(static_cast<int>(lo.size()) == n && static_cast<int>(hi.size()) == n,
                         prefix + ".box_lo/.box_hi must have n entries");
    spec.box = patches::make_box(to_vector(lo), to_vector(hi));
    if (spec.kind == "hyperplane") {
        std::vector<double> grad =
            reader.list(prefix + ".plane_gradient", std::vector<double>(n, 0.0));
        reader.cross_require(static_cast<int>(grad.size()) == n,
                             prefix + ".plane_gradient must have n entries");
        spec.plane_gradient = to_vector(grad);
        spec.plane_offset = reader.getd(prefix + ".plane_offset", 0.0, -1e6, 1e6);
    }
    spec.apex_margin = reader.getd(prefix + ".apex_margin", 0.05, 1e-6, 1.0);
    spec.false_foliation = reader.getb(prefix + ".false_foliation", false);
    std::vector<double> rot = reader.list(prefix + ".rotation", {});
    if (!rot.empty()) {
        reader.cross_require(static_cast<int>(rot.size()) == (n + 1) * (n + 1),
                             prefix + ".rotation must have (n+1)^2 entries, row-major");
        Eigen::MatrixXd m(n + 1, n + 1);
        for (int i = 0; i <= n; ++i)
            for (int j = 0; j <= n; ++j) m(i, j) = rot[i * (n + 1) + j];
        spec.rotation = m;
    }
    spec.label = prefix;
    return spec;
}

std::vector<PatchPtr> read_triple(ConfigReader& reader, int n) {
    std::string kind =
        reader.gets("triple", "standard_cone", {"standard_cone", "gl_violating", "custom"});
    double half_width = reader.getd("triple_half_width", 0.25, 0.01, 0.45);
    if (kind == "standard_cone") return patches::standard_cone_triple(n, half_width);
    if (kind == "gl_violating") return patches::gl_violating_triple(n, half_width);
    std::vector<PatchPtr> triple;
    for (int i = 1; i <= 3; ++i)
        triple.push_back(
            patches::make_patch(read_patch_spec(reader, "surface" + std::to_string(i), n)));
    return triple;
}

std::vector<complexd> make_density(const std::string& kind, std::size_t count,
                                   std::uint64_t seed) {
    std::vector<complexd> amps(count);
    if (kind == "ones") {
        std::fill(amps.begin(), amps.end(), complexd(1.0, 0.0));
    } else {
        Rng rng(seed);
        for (auto& a : amps) {
            double re = rng.uniform(-1.0, 1.0);
            double im = rng.uniform(-1.0, 1.0);
            a = complexd(re, im);
        }
    }
    return amps;
}

/// Packet-compatible wave over a patch: grid on the domain shrunk by 10% so
/// the stencil enlargement stays inside the domain, reference box padded.
FreeWave make_packet_wave(const PatchPtr& patch, double R, double c, int target_res,
                          const std::string& density, std::uint64_t seed) {
    Box target = patch->domain;
    VectorXd center = target.center();
    target.lo = center + 0.9 * (target.lo - center);
    target.hi = center + 0.9 * (target.hi - center);
    FrequencyGrid grid =
        FrequencyGrid::packet_aligned(target, std::vector<int>(patch->n, target_res), R, c);
    return FreeWave(grid, make_density(density, grid.node_count(), seed), patch,
                    patch->domain.inflated(0.5));
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("unwritable output path: " + path.string());
    out << content;
    if (!out) throw ConfigError("write failed: " + path.string());
}

json base_summary(const RunConfig& config) {
    json j;
    j["schema_version"] = 1;
    j["task"] = config.task;
    j["seed"] = config.seed;
    std::string canonical = config.keys.canonical_text();
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a(canonical)));
    j["config_hash"] = hex;
    json echo = json::object();
    for (const auto& [key, entry] : config.keys.entries()) echo[key] = entry.value;
    j["config"] = echo;
    return j;
}

json json_number(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

// ---------------------------------------------------------------------------
// Per-task parameter structs: reading them performs the full validation, so
// parse_config can reject bad configs without executing anything.
// ---------------------------------------------------------------------------

struct ThresholdParams {
    int n = 3, k = 3;
};

ThresholdParams read_threshold(ConfigReader& reader) {
    ThresholdParams p;
    p.n = static_cast<int>(reader.geti("n", 3, 1, 11));
    p.k = static_cast<int>(reader.geti("k", 3, 1, 12));
    reader.cross_require(p.k <= p.n + 1, "k = " + std::to_string(p.k) +
                                             " out of range: k must satisfy 1 <= k <= n+1");
    reader.finish();
    return p;
}

struct GeometryParams {
    int n = 3;
    std::size_t samples = 200;
    std::vector<PatchPtr> triple;
};

GeometryParams read_geometry(ConfigReader& reader) {
    GeometryParams p;
    p.n = static_cast<int>(reader.geti("n", 3, 3, 8));
    p.samples = static_cast<std::size_t>(reader.geti("sample_count", 200, 1, 1000000));
    p.triple = read_triple(reader, p.n);
    reader.finish();
    return p;
}

struct ExtendParams {
    int n = 3;
    PatchPtr patch;
    std::string density;
    int grid_res = 8;
    VectorXd cube_center;
    double cube_side = 8.0;
    int eval_res = 4;
    std::string wave_out, wave_in;
};

ExtendParams read_extend(ConfigReader& reader) {
    ExtendParams p;
    p.n = static_cast<int>(reader.geti("n", 3, 1, 8));
    p.patch = patches::make_patch(read_patch_spec(reader, "surface1", p.n));
    p.density = reader.gets("density", "ones", {"ones", "random"});
    p.grid_res = static_cast<int>(reader.geti("grid_resolution", 8, 1, 512));
    std::vector<double> center = reader.list("cube_center", std::vector<double>(p.n + 1, 0.0));
    reader.cross_require(static_cast<int>(center.size()) == p.n + 1,
                         "cube_center must have n+1 entries");
    p.cube_center = to_vector(center);
    p.cube_side = reader.getd("cube_side", 8.0, 1e-9, 1e9);
    p.eval_res = static_cast<int>(reader.geti("eval_resolution", 4, 1, 64));
    p.wave_out = reader.gets("wave_out", "");
    p.wave_in = reader.gets("wave_in", "");
    reader.finish();
    return p;
}

struct PacketParams {
    int n = 3;
    double R = 64.0, c = 0.25;
    int grid_res = 12, decay_power = 10;
    double bbox_factor = 0.0;
    std::string density = "random";
    std::vector<PatchPtr> triple;
    std::size_t max_tubes = 64;     // decompose only
    int census_points = 2;          // census only
    int groups = 16;
    double c_config = 10.0;
};

PacketParams read_packets(ConfigReader& reader, bool census, double default_bbox) {
    PacketParams p;
    p.n = static_cast<int>(reader.geti("n", 3, 3, 6));
    p.R = reader.getd("R", census ? 16.0 : 64.0, 4.0, 65536.0);
    p.c = reader.getd("c", census ? 0.5 : 0.25, 1e-3, 0.999);
    p.grid_res = static_cast<int>(reader.geti("grid_resolution", census ? 8 : 12, 2, 256));
    p.decay_power = static_cast<int>(reader.geti("decay_power", 10, 1, 64));
    p.bbox_factor = reader.getd("bbox_factor", default_bbox, 0.0, 1e6);
    p.density = reader.gets("density", "random", {"ones", "random"});
    p.triple = read_triple(reader, p.n);
    if (census) {
        p.census_points = static_cast<int>(reader.geti("census_points", 2, 1, 8));
        p.groups = static_cast<int>(reader.geti("groups", 16, 1, 65536));
        p.c_config = reader.getd("c_config", 10.0, 0.0, 1e6);
    } else {
        p.max_tubes = static_cast<std::size_t>(reader.geti("max_tubes", 64, 0, 100000));
    }
    reader.finish();
    return p;
}

struct TableBuildParams {
    PacketParams base;
    int depth = 2;
    int weight_res = 2;
};

TableBuildParams read_table_build(ConfigReader& reader) {
    TableBuildParams p;
    p.depth = static_cast<int>(reader.geti("C0", 2, 1, 4));
    p.weight_res = static_cast<int>(reader.geti("weight_resolution", 2, 2, 8));
    p.base.n = static_cast<int>(reader.geti("n", 3, 3, 6));
    p.base.R = reader.getd("R", 32.0, 4.0, 65536.0);
    p.base.c = reader.getd("c", 0.25, 1e-3, 0.999);
    p.base.grid_res = static_cast<int>(reader.geti("grid_resolution", 10, 2, 256));
    p.base.decay_power = static_cast<int>(reader.geti("decay_power", 10, 1, 64));
    p.base.density = reader.gets("density", "random", {"ones", "random"});
    p.base.triple = read_triple(reader, p.base.n);
    reader.finish();
    return p;
}

struct TableCensusParams {
    int n = 3;
    std::vector<double> R_list;
    double c = 0.9;
    double alpha_min = 0.25;
    int stride = 2;
    int grid_res = 8;
    double half_width = 0.18;
    std::string which = "both";
};

TableCensusParams read_table_census(ConfigReader& reader) {
    TableCensusParams p;
    p.n = static_cast<int>(reader.geti("n", 3, 3, 4));
    p.R_list = reader.list("R_list", {32.0, 64.0});
    p.c = reader.getd("c", 0.9, 0.5, 0.999);
    p.alpha_min = reader.getd("alpha_min", 0.25, 0.01, 1.0);
    p.stride = static_cast<int>(reader.geti("stride", 2, 1, 8));
    p.grid_res = static_cast<int>(reader.geti("grid_resolution", 8, 2, 64));
    p.half_width = reader.getd("half_width", 0.18, 0.05, 0.45);
    p.which = reader.gets("triple", "both", {"standard_cone", "gl_violating", "both"});
    reader.finish();
    return p;
}

experiments::SquashedCapConfig read_counterexample(ConfigReader& reader) {
    experiments::SquashedCapConfig cap;
    cap.n = static_cast<int>(reader.geti("n", 3, 1, 6));
    cap.k = static_cast<int>(reader.geti("k", 3, 1, 7));
    reader.cross_require(cap.k <= cap.n + 1,
                         "k = " + std::to_string(cap.k) +
                             " out of range: k must satisfy 1 <= k <= n+1");
    cap.epsilons = reader.list("epsilon_list", {0.25, 0.125, 0.0625});
    cap.c_small = reader.getd("c_small", 0.1, 1e-4, 0.5);
    cap.cap_resolution = static_cast<int>(reader.geti("cap_resolution", 4, 2, 64));
    cap.box_resolution = static_cast<int>(reader.geti("box_resolution", 6, 2, 64));
    cap.p_list = reader.list("p_list", {0.8, 14.0 / 15.0, 1.2});
    reader.finish();
    for (double eps : cap.epsilons)
        reader.cross_require(eps > 0.0 && eps <= 0.25,
                             "epsilon_list entries must lie in (0, 1/4]");
    return cap;
}

experiments::RecursionConfig read_recursion(ConfigReader& reader) {
    experiments::RecursionConfig rc;
    rc.p = reader.getd("p", 0.95, 0.1, 10.0);
    rc.n = static_cast<int>(reader.geti("n", 3, 1, 12));
    rc.C = reader.getd("C", 10.0, 1e-3, 1e6);
    rc.C0 = reader.getd("C0", 4.0, 1.0, 64.0);
    rc.eps = reader.getd("eps", 0.01, 1e-9, 1.0);
    rc.R0 = reader.getd("R0", 0.0, 0.0, 1e12);
    rc.c_eps = reader.getd("c_eps", 1.0, 1e-9, 1e9);
    rc.trace_steps = static_cast<int>(reader.geti("trace_steps", 60, 1, 100000));
    rc.horizon = reader.geti("horizon", 2000000, 100, 100000000);
    reader.finish();
    return rc;
}

experiments::TrendConfig read_trend(ConfigReader& reader, std::uint64_t seed) {
    experiments::TrendConfig tc;
    tc.n = static_cast<int>(reader.geti("n", 3, 3, 6));
    tc.p = reader.getd("p", 1.0, 0.1, 10.0);
    tc.R_list = reader.list("R_list", {8.0, 16.0, 32.0, 64.0});
    tc.grid_resolution = static_cast<int>(reader.geti("grid_resolution", 10, 2, 64));
    tc.eval_resolution = static_cast<int>(reader.geti("eval_resolution", 6, 2, 32));
    tc.nu_min = reader.getd("nu_min", 0.01, 0.0, 1.0);
    tc.transversality_samples =
        static_cast<std::size_t>(reader.geti("sample_count", 200, 10, 1000000));
    tc.seed = seed;
    reader.finish();
    return tc;
}

void validate_task(const RunConfig& config) {
    ConfigReader reader(config.keys);
    const std::string& task = config.task;
    if (task == "threshold") {
        read_threshold(reader);
    } else if (task == "geometry check") {
        read_geometry(reader);
    } else if (task == "extend") {
        read_extend(reader);
    } else if (task == "packets decompose") {
        read_packets(reader, false, 0.0);
    } else if (task == "packets census") {
        read_packets(reader, true, 1.5);
    } else if (task == "table build") {
        read_table_build(reader);
    } else if (task == "table census") {
        read_table_census(reader);
    } else if (task == "counterexample run") {
        read_counterexample(reader);
    } else if (task == "recursion iterate") {
        read_recursion(reader);
    } else if (task == "trend run") {
        read_trend(reader, config.seed);
    } else {
        std::string known;
        for (const auto& name : task_names()) known += (known.empty() ? "" : ", ") + name;
        throw ConfigError("unknown subcommand `" + task + "`; expected one of: " + known);
    }
}

// ---------------------------------------------------------------------------
// Task execution
// ---------------------------------------------------------------------------

int exec_threshold(const RunConfig& config, const ThresholdParams& p) {
    auto thr = experiments::threshold_exponent(p.n, p.k);
    std::cout << "p(" << p.k << ") = " << thr.str() << " (n = " << p.n << ")\n";
    json summary = base_summary(config);
    summary["n"] = p.n;
    summary["k"] = p.k;
    summary["threshold"] = thr.str();
    summary["threshold_value"] = thr.value();
    write_file(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int exec_geometry(const RunConfig& config, const GeometryParams& p) {
    auto report = geometry::full_condition_report(p.triple, p.samples, config.seed);

    CsvWriter csv({"patch", "flatness_max", "normal_drift_max", "dispersion_min",
                   "dispersion_max", "sample_count", "seed"});
    json per_patch = json::array();
    for (const auto& patch : p.triple) {
        double flat = kInf, drift = kInf, dmin = 0.0, dmax = 0.0;
        if (patch->leaf_chart) {
            auto fol = geometry::check_foliation_flatness(*patch, p.samples, config.seed);
            flat = fol.flatness_max;
            drift = fol.normal_drift_max;
            auto disp = geometry::normal_dispersion_ratio(*patch, p.samples, config.seed);
            dmin = disp.min_ratio;
            dmax = disp.max_ratio;
        }
        csv.row({patch->label, format_double(flat), format_double(drift),
                 format_double(dmin), format_double(dmax), std::to_string(p.samples),
                 std::to_string(config.seed)});
        json entry;
        entry["label"] = patch->label;
        entry["flatness_max"] = json_number(flat);
        entry["normal_drift_max"] = json_number(drift);
        entry["dispersion_min"] = json_number(dmin);
        entry["dispersion_max"] = json_number(dmax);
        per_patch.push_back(entry);
    }

    json summary = base_summary(config);
    summary["nu_transversal"] = json_number(report.nu_transversal);
    summary["nu_curvature"] = json_number(report.nu_curvature);
    summary["gl_constant"] = json_number(report.gl_constant);
    summary["leaf_flatness_max"] = json_number(report.leaf_flatness_max);
    summary["dispersion_ratio_min"] = json_number(report.dispersion_ratio_min);
    summary["dispersion_ratio_max"] = json_number(report.dispersion_ratio_max);
    summary["sample_count"] = p.samples;
    summary["patches"] = per_patch;
    summary["flags"] = {{"transversal", report.nu_transversal > 1e-3},
                        {"curvature_ok", report.nu_curvature > 1e-3},
                        {"foliation_flat", report.leaf_flatness_max < 1e-6},
                        {"gl_ok", report.gl_constant > 1e-3}};
    write_file(fs::path(config.out_dir) / "report.csv", csv.text());
    write_file(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int exec_extend(const RunConfig& config, const ExtendParams& p) {
    FreeWave wave;
    if (!p.wave_in.empty()) {
        std::ifstream in(p.wave_in);
        if (!in) throw ConfigError("cannot open wave file: " + p.wave_in);
        wave = waves::read_wave(in, p.patch);
    } else {
        FrequencyGrid grid =
            FrequencyGrid::regular(p.patch->domain, std::vector<int>(p.n, p.grid_res));
        wave = FreeWave(grid, make_density(p.density, grid.node_count(), config.seed),
                        p.patch, p.patch->domain.inflated(0.5));
    }

    waves::SpaceTimeCube cube;
    cube.center = p.cube_center;
    cube.side = p.cube_side;
    cube.resolution.assign(p.n + 1, p.eval_res);

    double phase_per_cell = wave.max_phase_per_cell(cube);
    if (phase_per_cell > M_PI_4)
        std::cerr << "warning: phase per frequency cell " << format_double(phase_per_cell)
                  << " exceeds pi/4; refine the frequency grid for trustworthy quadrature\n";

    std::vector<VectorXd> points;
    points.reserve(cube.point_count());
    for (std::size_t i = 0; i < cube.point_count(); ++i) points.push_back(cube.point(i));
    auto values = waves::extend(wave, points);

    std::vector<std::string> header;
    for (int a = 0; a < p.n; ++a) header.push_back("x" + std::to_string(a + 1));
    header.push_back("t");
    header.insert(header.end(), {"re", "im", "abs"});
    CsvWriter csv(header);
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::vector<std::string> row;
        for (int a = 0; a <= p.n; ++a) row.push_back(format_double(points[i][a]));
        row.push_back(format_double(values[i].real()));
        row.push_back(format_double(values[i].imag()));
        row.push_back(format_double(std::abs(values[i])));
        csv.row(row);
    }
    write_file(fs::path(config.out_dir) / "field.csv", csv.text());

    if (!p.wave_out.empty()) {
        std::ostringstream out;
        waves::write_wave(out, wave);
        write_file(fs::path(config.out_dir) / p.wave_out, out.str());
    }

    json summary = base_summary(config);
    summary["mass"] = waves::mass(wave);
    summary["margin"] = json_number(waves::margin(wave));
    summary["phase_per_cell"] = phase_per_cell;
    summary["points"] = points.size();
    write_file(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

struct PacketSetup {
    PatchPtr patch;
    FreeWave wave;
    packets::PacketLattice lattice;
};

PacketSetup build_packet_setup(const RunConfig& config, const PacketParams& p) {
    PacketSetup setup;
    setup.patch = p.triple[0];
    setup.wave = make_packet_wave(setup.patch, p.R, p.c, p.grid_res, p.density, config.seed);
    Box spatial;
    if (p.bbox_factor > 0.0) {
        spatial.lo = VectorXd::Constant(p.n, -0.5 * p.bbox_factor * p.R);
        spatial.hi = VectorXd::Constant(p.n, 0.5 * p.bbox_factor * p.R);
    }
    setup.lattice = packets::build_lattice(setup.patch, p.R, p.c, setup.wave.grid(), spatial,
                                           p.decay_power);
    return setup;
}

int exec_packets_decompose(const RunConfig& config, const PacketParams& p) {
    PacketSetup setup = build_packet_setup(config, p);
    auto decomposition = packets::decompose(setup.wave, setup.lattice);

    std::ostringstream manifest;
    packets::write_manifest(manifest, decomposition, p.max_tubes);
    write_file(fs::path(config.out_dir) / "packets_manifest.txt", manifest.str());

    CsvWriter csv({"tube", "leaf", "R", "c", "mass", "margin"});
    const auto& pkts = decomposition.packets();
    for (std::size_t t = 0; t < pkts.size(); ++t) {
        csv.row({std::to_string(t), std::to_string(pkts[t].leaf), format_double(p.R),
                 format_double(p.c), format_double(waves::mass(pkts[t].wave)),
                 format_double(waves::margin(pkts[t].wave))});
        if (t < p.max_tubes) {
            std::ostringstream wave_text;
            waves::write_wave(wave_text, pkts[t].wave);
            write_file(fs::path(config.out_dir) / ("tube_" + std::to_string(t) + ".wave"),
                       wave_text.str());
        }
    }
    write_file(fs::path(config.out_dir) / "packets.csv", csv.text());

    json summary = base_summary(config);
    summary["R"] = p.R;
    summary["c"] = p.c;
    summary["r"] = setup.lattice.r;
    summary["J"] = setup.lattice.J;
    summary["leaf_count"] = setup.lattice.leaf_reps.size();
    summary["tube_count"] = decomposition.packets().size();
    summary["lattice_complete"] = setup.lattice.complete;
    if (setup.lattice.complete)
        summary["reconstruction_error"] = decomposition.reconstruction_error();
    summary["max_leaf_distance_factor"] = decomposition.max_leaf_distance_factor();
    summary["source_mass"] = waves::mass(decomposition.source());
    summary["source_margin"] = json_number(waves::margin(decomposition.source()));
    write_file(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int exec_packets_census(const RunConfig& config, const PacketParams& p) {
    PacketSetup setup = build_packet_setup(config, p);
    auto decomposition = packets::decompose(setup.wave, setup.lattice);

    waves::SpaceTimeCube Q;
    Q.center = VectorXd::Zero(p.n + 1);
    Q.side = p.R;
    Q.resolution.assign(p.n + 1, 2);
    auto census = packets::local_mass_census(decomposition, Q, p.census_points);

    const std::size_t tubes = decomposition.packets().size();
    Eigen::MatrixXd random_weights(tubes, p.groups);
    Rng rng(config.seed + 17);
    for (std::size_t t = 0; t < tubes; ++t) {
        double sum = 0.0;
        for (int g = 0; g < p.groups; ++g) {
            double u = rng.uniform();
            random_weights(static_cast<Eigen::Index>(t), g) = u;
            sum += u;
        }
        random_weights.row(static_cast<Eigen::Index>(t)) /= sum;
    }
    auto random_check = packets::weighted_mass_check(decomposition, random_weights, p.c_config);
    Eigen::MatrixXd uniform =
        Eigen::MatrixXd::Constant(tubes, p.groups, 1.0 / static_cast<double>(p.groups));
    auto uniform_check = packets::weighted_mass_check(decomposition, uniform, p.c_config);

    CsvWriter csv({"R", "c", "weighted_sum", "qest_ratio", "random_lhs", "random_rhs",
                   "uniform_lhs", "source_mass_sqrt"});
    csv.row({format_double(p.R), format_double(p.c), format_double(census.weighted_sum),
             format_double(census.ratio), format_double(random_check.lhs),
             format_double(random_check.rhs), format_double(uniform_check.lhs),
             format_double(std::sqrt(waves::mass(decomposition.source())))});
    write_file(fs::path(config.out_dir) / "census.csv", csv.text());

    json summary = base_summary(config);
    summary["R"] = p.R;
    summary["c"] = p.c;
    summary["tube_count"] = tubes;
    summary["qest_weighted_sum"] = census.weighted_sum;
    summary["qest_ratio"] = census.ratio;
    summary["weighted_mass_random"] = {{"lhs", random_check.lhs},
                                       {"rhs", random_check.rhs},
                                       {"pass", random_check.pass}};
    summary["weighted_mass_uniform"] = {{"lhs", uniform_check.lhs},
                                        {"rhs", uniform_check.rhs},
                                        {"pass", uniform_check.pass}};
    write_file(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int exec_table_build(const RunConfig& config, const TableBuildParams& p) {
    PacketSetup setup = build_packet_setup(config, p.base);
    FreeWave phi2 = make_packet_wave(p.base.triple[1], p.base.R, p.base.c, p.base.grid_res,
                                     p.base.density, config.seed + 1);

    auto decomposition = packets::decompose(setup.wave, setup.lattice);
    tables::Cube Q{VectorXd::Zero(p.base.n + 1), p.base.R};
    auto weights = tables::tube_weights(decomposition, phi2, Q, p.depth, p.weight_res);
    auto table = tables::build_table(decomposition, weights, Q, p.depth);
    auto report = tables::table_mass_report(decomposition, table);

    std::vector<std::string> header{"tube"};
    for (Eigen::Index q = 0; q < table.coefficients.cols(); ++q)
        header.push_back("q" + std::to_string(q));
    CsvWriter csv(header);
    for (Eigen::Index t = 0; t < table.coefficients.rows(); ++t) {
        std::vector<std::string> row{std::to_string(t)};
        for (Eigen::Index q = 0; q < table.coefficients.cols(); ++q)
            row.push_back(format_double(table.coefficients(t, q)));
        csv.row(row);
    }
    write_file(fs::path(config.out_dir) / "table_coefficients.csv", csv.text());

    std::ostringstream manifest;
    packets::write_manifest(manifest, decomposition, 0);
    write_file(fs::path(config.out_dir) / "packets_manifest.txt", manifest.str());

    FreeWave total = tables::table_sum(decomposition, table);
    double residual = 0.0, denom = 0.0;
    for (std::size_t j = 0; j < total.amplitudes().size(); ++j) {
        residual += std::norm(total.amplitudes()[j] - decomposition.source().amplitudes()[j]);
        denom += std::norm(decomposition.source().amplitudes()[j]);
    }
    json summary = base_summary(config);
    summary["R"] = p.base.R;
    summary["c"] = p.base.c;
    summary["depth"] = p.depth;
    summary["table_mass"] = report.table_mass;
    summary["source_mass"] = report.source_mass;
    summary["mass_kappa"] = report.kappa;
    summary["margin_table"] = json_number(report.margin_table);
    summary["margin_source"] = json_number(report.margin_source);
    summary["decomposition_residual"] =
        denom > 0.0 ? std::sqrt(residual / denom) : std::sqrt(residual);
    write_file(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int exec_table_census(const RunConfig& config, const TableCensusParams& p) {
    CsvWriter csv({"triple", "R", "c", "alpha_min", "stride", "max_multiplicity",
                   "relations", "tubes2", "tubes3"});
    json runs = json::array();
    std::vector<std::string> kinds =
        p.which == "both" ? std::vector<std::string>{"standard_cone", "gl_violating"}
                          : std::vector<std::string>{p.which};
    for (const std::string& kind : kinds) {
        auto triple = kind == "standard_cone"
                          ? patches::standard_cone_triple(p.n, p.half_width)
                          : patches::gl_violating_triple(p.n, p.half_width);
        for (double R : p.R_list) {
            FreeWave w1 = make_packet_wave(triple[0], R, p.c, p.grid_res, "ones", config.seed);
            FreeWave w2 = make_packet_wave(triple[1], R, p.c, p.grid_res, "ones", config.seed);
            FreeWave w3 = make_packet_wave(triple[2], R, p.c, p.grid_res, "ones", config.seed);
            Box spatial;
            spatial.lo = VectorXd::Constant(p.n, -1.25 * R);
            spatial.hi = VectorXd::Constant(p.n, 1.25 * R);
            auto pivot = packets::build_lattice(triple[0], R, p.c, w1.grid(), spatial);
            auto lat2 = packets::build_lattice(triple[1], R, p.c, w2.grid(), spatial);
            auto lat3 = packets::build_lattice(triple[2], R, p.c, w3.grid(), spatial);
            tables::Cube Q{VectorXd::Zero(p.n + 1), R};
            auto census = tables::pair_census(lat2, lat3, Q, pivot, p.alpha_min, p.stride);
            csv.row({kind, format_double(R), format_double(p.c), format_double(p.alpha_min),
                     std::to_string(p.stride), std::to_string(census.max_multiplicity),
                     std::to_string(census.relation_count),
                     std::to_string(census.tube_count_2),
                     std::to_string(census.tube_count_3)});
            json entry;
            entry["triple"] = kind;
            entry["R"] = R;
            entry["max_multiplicity"] = census.max_multiplicity;
            entry["relation_count"] = census.relation_count;
            runs.push_back(entry);
        }
    }
    write_file(fs::path(config.out_dir) / "pair_census.csv", csv.text());
    json summary = base_summary(config);
    summary["runs"] = runs;
    write_file(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int exec_counterexample(const RunConfig& config, const experiments::SquashedCapConfig& cap) {
    auto result = experiments::squashed_cap_run(cap);

    CsvWriter csv({"n", "k", "epsilon", "c_small", "p", "lp_norm", "normalized_norm",
                   "mass_closed_form", "mass_numeric", "pointwise_min_ratio", "theta",
                   "phase_dev_bound", "phase_dev_measured"});
    for (const auto& rec : result.records) {
        for (std::size_t ip = 0; ip < cap.p_list.size(); ++ip) {
            csv.row({std::to_string(cap.n), std::to_string(cap.k),
                     format_double(rec.epsilon), format_double(cap.c_small),
                     format_double(cap.p_list[ip]), format_double(rec.lp_norms[ip]),
                     format_double(rec.normalized_norms[ip]),
                     format_double(rec.mass_closed_form), format_double(rec.mass_numeric),
                     format_double(rec.pointwise_min_ratio), format_double(rec.theta),
                     format_double(rec.phase_dev_bound),
                     format_double(rec.phase_dev_measured)});
        }
    }
    write_file(fs::path(config.out_dir) / "counterexample.csv", csv.text());

    json fits = json::array();
    for (std::size_t ip = 0; ip < cap.p_list.size(); ++ip) {
        experiments::ScalingSeries series;
        series.p = cap.p_list[ip];
        for (const auto& rec : result.records) {
            series.epsilons.push_back(rec.epsilon);
            series.values.push_back(rec.normalized_norms[ip]);
        }
        json entry;
        entry["p"] = series.p;
        entry["target"] = experiments::normalized_slope_target(cap.n, cap.k, series.p);
        if (series.epsilons.size() >= 3) {
            auto fit = experiments::scaling_fit(series);
            entry["slope"] = fit.slope;
            entry["residual"] = fit.residual;
        }
        fits.push_back(entry);
    }
    json summary = base_summary(config);
    summary["records"] = result.records.size();
    summary["fits"] = fits;
    json pointwise = json::array();
    for (const auto& rec : result.records) {
        json entry;
        entry["epsilon"] = rec.epsilon;
        entry["pointwise_min_ratio"] = rec.pointwise_min_ratio;
        entry["theta"] = rec.theta;
        entry["certified"] = rec.pointwise_certified;
        pointwise.push_back(entry);
    }
    summary["pointwise"] = pointwise;
    write_file(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int exec_recursion(const RunConfig& config, const experiments::RecursionConfig& rc) {
    auto trace = experiments::recursion_iterate(rc);

    CsvWriter csv({"p", "n", "C", "C0", "eps", "m", "log2_R", "log_A"});
    for (std::size_t m = 0; m < trace.steps.size(); ++m)
        csv.row({format_double(rc.p), std::to_string(rc.n), format_double(rc.C),
                 format_double(rc.C0), format_double(rc.eps), std::to_string(m),
                 format_double(trace.steps[m].log2_R), format_double(trace.steps[m].log_A)});
    write_file(fs::path(config.out_dir) / "recursion.csv", csv.text());

    json summary = base_summary(config);
    summary["classification"] = trace.classification;
    summary["sign_exponent"] = trace.sign_exponent;
    summary["closed_form_bounded"] = trace.closed_form_bounded;
    summary["settled_at"] = trace.settled_at;
    write_file(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    std::cout << "recursion p = " << format_double(rc.p) << ": " << trace.classification
              << " (sign exponent " << format_double(trace.sign_exponent) << ")\n";
    return 0;
}

int exec_trend(const RunConfig& config, const experiments::TrendConfig& tc) {
    auto result = experiments::double_cone_trend(tc);

    CsvWriter csv({"n", "p", "R", "trilinear_ratio"});
    for (std::size_t i = 0; i < result.R_list.size(); ++i)
        csv.row({std::to_string(tc.n), format_double(tc.p), format_double(result.R_list[i]),
                 format_double(result.ratios[i])});
    write_file(fs::path(config.out_dir) / "trend.csv", csv.text());

    json summary = base_summary(config);
    summary["growth_exponent"] = result.fit.slope;
    summary["fit_residual"] = result.fit.residual;
    summary["nu_transversal"] = result.precheck.nu_transversal;
    summary["nu_curvature"] = result.precheck.nu_curvature;
    summary["note"] = "heuristic evidence only; fixed unit densities, not a sup over data";
    write_file(fs::path(config.out_dir) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

RunConfig finalize_config(KeyValues kv) {
    RunConfig config;
    const ConfigEntry* task = kv.find("task");
    require(task != nullptr && !task->value.empty(), "missing subcommand");
    config.task = task->value;
    config.keys = std::move(kv);

    auto read_integer = [&](const char* key, long long def) {
        const ConfigEntry* entry = config.keys.find(key);
        if (!entry) return def;
        try {
            std::size_t pos = 0;
            long long v = std::stoll(entry->value, &pos);
            require(pos == entry->value.size(), "");
            return v;
        } catch (...) {
            throw ConfigError(std::string("config key `") + key + "` (" + where(*entry) +
                              "): expected an integer");
        }
    };
    config.seed = static_cast<std::uint64_t>(read_integer("seed", 1));
    config.threads = static_cast<int>(read_integer("threads", 1));
    require(config.threads >= 0, "config key `threads`: must be >= 0 (0 = hardware)");
    const ConfigEntry* out_dir = config.keys.find("out_dir");
    config.out_dir = out_dir ? out_dir->value : ".";

    validate_task(config);
    return config;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    return finalize_config(KeyValues::parse_text(text));
}

RunConfig parse_args(const std::vector<std::string>& args) {
    KeyValues kv;
    std::string task;
    std::size_t i = 0;
    while (i < args.size() && args[i].rfind("--", 0) != 0) {
        if (!task.empty()) task += " ";
        task += args[i];
        ++i;
    }
    std::vector<std::pair<std::string, std::string>> overrides;
    for (; i < args.size(); ++i) {
        std::string key = args[i];
        require(key.rfind("--", 0) == 0, "expected --key, got `" + key + "`");
        key = key.substr(2);
        require(i + 1 < args.size(), "missing value for --" + key);
        overrides.emplace_back(key, args[++i]);
    }
    // --config FILE loads a file first; explicit flags win.
    for (const auto& [key, value] : overrides) {
        if (key != "config") continue;
        std::ifstream in(value);
        if (!in) throw ConfigError("cannot open config file: " + value);
        std::stringstream buffer;
        buffer << in.rdbuf();
        KeyValues file_kv = KeyValues::parse_text(buffer.str());
        for (const auto& [k, e] : file_kv.entries()) kv.set(k, e.value, e.line);
    }
    if (!task.empty()) kv.set("task", task, 0);
    for (const auto& [key, value] : overrides)
        if (key != "config") kv.set(key, value, 0);
    return finalize_config(std::move(kv));
}

int run(const RunConfig& config) {
    set_thread_count(config.threads);
    fs::create_directories(config.out_dir);
    ConfigReader reader(config.keys);
    const std::string& task = config.task;
    if (task == "threshold") return exec_threshold(config, read_threshold(reader));
    if (task == "geometry check") return exec_geometry(config, read_geometry(reader));
    if (task == "extend") return exec_extend(config, read_extend(reader));
    if (task == "packets decompose")
        return exec_packets_decompose(config, read_packets(reader, false, 0.0));
    if (task == "packets census")
        return exec_packets_census(config, read_packets(reader, true, 1.5));
    if (task == "table build") return exec_table_build(config, read_table_build(reader));
    if (task == "table census") return exec_table_census(config, read_table_census(reader));
    if (task == "counterexample run")
        return exec_counterexample(config, read_counterexample(reader));
    if (task == "recursion iterate") return exec_recursion(config, read_recursion(reader));
    if (task == "trend run") return exec_trend(config, read_trend(reader, config.seed));
    std::string known;
    for (const auto& name : task_names()) known += (known.empty() ? "" : ", ") + name;
    throw ConfigError("unknown subcommand `" + task + "`; expected one of: " + known);
}

}  // namespace trilab::cli
