#pragma once

// Experiment configuration: flat "key = value" text, one experiment per file.
//
//   # comment
//   topology  = periodic          # or window
//   l         = 2pi               # periodic: period and node count
//   N         = 64
//   x0        = -20               # window: left end, cells, spacing, ghosts
//   M         = 512
//   h         = 0.078125
//   extension = constant
//   init      = helix:pi/4,2
//   speed     = const:1
//   bounds    = 1,3,1,1           # optional override: alpha,beta,beta1,beta'
//   offset    = node              # or mid
//   method    = rotation
//   dt        = fixed:1e-3        # or cfl:0.25
//   T         = 1
//   stride    = 10
//   probes    = diagnostics,oracle
//   csv       = run.csv
//   json      = run.json
//   seed      = 1
//   check.<name> = value          # optional pass/fail thresholds
//
// Numbers accept an optional "pi" factor: "pi", "2pi", "pi/4", "3pi/2".

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bfl/error.hpp"
#include "bfl/grid.hpp"
#include "bfl/integrate.hpp"
#include "bfl/speed.hpp"

namespace bfl {

/// Shortest decimal string that reads back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), r.ptr);
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> plain_number(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto r = std::from_chars(first, s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

} // namespace detail

/// Parses a number with an optional pi factor.
inline double parse_number(const std::string& text, const std::string& what) {
    const std::string s = detail::trim(text);
    auto bad = [&] { return ConfigError("bad number '" + text + "' for " + what); };
    const auto p = s.find("pi");
    if (p == std::string::npos) {
        if (auto v = detail::plain_number(s)) return *v;
        throw bad();
    }
    double factor = 1.0;
    const std::string head = s.substr(0, p);
    if (head == "-") {
        factor = -1.0;
    } else if (!head.empty()) {
        const auto v = detail::plain_number(head);
        if (!v) throw bad();
        factor = *v;
    }
    double value = factor * std::numbers::pi;
    const std::string tail = s.substr(p + 2);
    if (!tail.empty()) {
        if (tail[0] != '/') throw bad();
        const auto d = detail::plain_number(tail.substr(1));
        if (!d || *d == 0.0) throw bad();
        value /= *d;
    }
    return value;
}

inline std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    if (detail::trim(text).empty()) return out;
    for (const auto& item : detail::split(text, ',')) out.push_back(parse_number(item, what));
    return out;
}

/// "kind:p1,p2,..." split into kind and numeric parameters.
struct Selector {
    std::string kind;
    std::vector<double> params;
    std::string raw; ///< text after the colon, unparsed
};

inline Selector parse_selector(const std::string& text) {
    Selector s;
    const auto colon = text.find(':');
    s.kind = detail::trim(text.substr(0, colon));
    if (colon != std::string::npos) s.raw = detail::trim(text.substr(colon + 1));
    return s;
}

inline const std::map<std::string, std::pair<std::size_t, std::size_t>>& init_kinds() {
    // kind -> (min, max) parameter count; "file" takes a path instead.
    static const std::map<std::string, std::pair<std::size_t, std::size_t>> kinds{
        {"great-circle", {0, 1}}, {"helix", {2, 2}},          {"soliton", {2, 2}},
        {"coupled-circle", {0, 0}}, {"coupled-soliton", {0, 2}}, {"file", {0, 0}},
    };
    return kinds;
}

/// Checks an initial-data selector and returns its parsed form.
inline Selector parse_init(const std::string& text) {
    Selector s = parse_selector(text);
    const auto it = init_kinds().find(s.kind);
    if (it == init_kinds().end()) {
        throw ConfigError("unknown init '" + text +
                          "' (expected great-circle:k | helix:alpha,k | soliton:nu,tau0 | file:path | "
                          "coupled-circle | coupled-soliton[:nu,tau0])");
    }
    if (s.kind == "file") {
        if (s.raw.empty()) throw ConfigError("init 'file:' needs a path");
        return s;
    }
    s.params = parse_number_list(s.raw, "init '" + text + "'");
    const auto [lo, hi] = it->second;
    if (s.params.size() < lo || s.params.size() > hi) {
        throw ConfigError("init '" + text + "' has the wrong number of parameters");
    }
    return s;
}

inline bool is_coupled_init(const std::string& kind) { return kind == "coupled-circle" || kind == "coupled-soliton"; }

inline DtPolicy parse_dt(const std::string& text) {
    const Selector s = parse_selector(text);
    const double v = parse_number(s.raw, "dt");
    if (s.kind == "fixed") return DtPolicy::fixed(v);
    if (s.kind == "cfl") return DtPolicy::cfl(v);
    throw ConfigError("bad dt '" + text + "' (expected fixed:<dt> or cfl:<c>)");
}

inline std::string to_string(const DtPolicy& p) {
    return std::string(p.kind == DtPolicy::Kind::fixed ? "fixed:" : "cfl:") + format_double(p.value);
}

inline Extension parse_extension(const std::string& s) {
    if (s == "constant") return Extension::constant;
    if (s == "linear") return Extension::linear;
    if (s == "zero") return Extension::zero;
    throw ConfigError("unknown extension '" + s + "' (expected constant|linear|zero)");
}

inline const char* to_string(Extension e) {
    switch (e) {
    case Extension::constant: return "constant";
    case Extension::linear: return "linear";
    case Extension::zero: return "zero";
    }
    return "?";
}

inline const std::set<std::string>& known_probes() {
    static const std::set<std::string> p{"diagnostics", "oracle", "frenet"};
    return p;
}

inline const std::set<std::string>& known_checks() {
    static const std::set<std::string> c{"oracle_error", "energy_drift", "unit_drift", "margin",
                                         "order_min",    "order_max",    "stability_spread"};
    return c;
}

struct ExperimentConfig {
    Topology topology = Topology::periodic;
    double l = 2.0 * std::numbers::pi;
    std::size_t N = 64;
    double x0 = 0.0;
    std::size_t M = 64;
    double h = 0.1;
    Extension extension = Extension::constant;

    std::string init = "great-circle:1";
    std::string speed = "const:1";
    std::optional<SpeedBounds> bounds;
    SamplingOffset offset = SamplingOffset::node;

    IntegratorSpec integrator;
    double T = 1.0;
    std::vector<std::string> probes{"diagnostics", "oracle"};

    std::string csv = "run.csv";
    std::string json = "run.json";
    std::uint64_t seed = 1;

    std::map<std::string, double> checks;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

    bool has_probe(const std::string& p) const { return std::find(probes.begin(), probes.end(), p) != probes.end(); }

    std::optional<double> check(const std::string& name) const {
        const auto it = checks.find(name);
        if (it == checks.end()) return std::nullopt;
        return it->second;
    }

    Grid grid() const {
        return topology == Topology::periodic ? Grid::periodic(l, N) : Grid::window(x0, M, h, extension);
    }

    SpeedField speed_field() const {
        SpeedField g = SpeedField::parse(speed).with_offset(offset);
        if (bounds) g = g.with_bounds(*bounds);
        return g;
    }
};

namespace detail {

inline std::size_t parse_count(const std::string& v, const std::string& key) {
    std::size_t n = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), n);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
        throw ConfigError("bad integer '" + v + "' for " + key);
    }
    return n;
}

} // namespace detail

/// Semantic checks that do not need the initial data to be built.
inline void validate(const ExperimentConfig& c) {
    try {
        const Grid g = c.grid();
        (void)g;
    } catch (const DomainError& e) {
        throw ConfigError(std::string("bad grid: ") + e.what());
    }
    const Selector init = parse_init(c.init);
    try {
        (void)c.speed_field();
    } catch (const CoefficientBoundError& e) {
        throw ConfigError(std::string("bad speed: ") + e.what());
    }
    validate(c.integrator);
    if (!(c.T > 0.0) || !std::isfinite(c.T)) throw ConfigError("horizon T must be positive");
    for (const auto& p : c.probes) {
        if (!known_probes().count(p)) throw ConfigError("unknown probe '" + p + "' (expected diagnostics|oracle|frenet)");
    }
    for (const auto& [k, v] : c.checks) {
        if (!known_checks().count(k)) throw ConfigError("unknown check 'check." + k + "'");
    }
    const bool coupled_speed = SpeedField::parse(c.speed).flavor() == SpeedFlavor::coupled;
    if (is_coupled_init(init.kind)) {
        if (init.kind == "coupled-circle" && c.topology != Topology::periodic) {
            throw ConfigError("coupled-circle needs a periodic grid");
        }
        if (c.integrator.method != Method::rk4 && c.integrator.method != Method::projected_rk4) {
            throw ConfigError("curve runs need method rk4 or projected-rk4");
        }
        if (c.integrator.method == Method::projected_rk4 && c.topology == Topology::periodic) {
            throw ConfigError("projected-rk4 cannot keep a periodic curve closed; use rk4");
        }
    } else if (coupled_speed && init.kind != "soliton") {
        throw ConfigError("speed '" + c.speed + "' depends on the curve; use a curve init or soliton");
    }
    if (init.kind == "soliton" && c.topology != Topology::window) throw ConfigError("soliton needs a window grid");
    if (init.kind == "coupled-soliton" && c.topology != Topology::window) {
        throw ConfigError("coupled-soliton needs a window grid");
    }
}

inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string v = detail::trim(t.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        if (v.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty value for '" + key + "'");

        if (key == "topology") {
            if (v == "periodic") c.topology = Topology::periodic;
            else if (v == "window") c.topology = Topology::window;
            else throw ConfigError("unknown topology '" + v + "' (expected periodic|window)");
        } else if (key == "l") c.l = parse_number(v, key);
        else if (key == "N") c.N = detail::parse_count(v, key);
        else if (key == "x0") c.x0 = parse_number(v, key);
        else if (key == "M") c.M = detail::parse_count(v, key);
        else if (key == "h") c.h = parse_number(v, key);
        else if (key == "extension") c.extension = parse_extension(v);
        else if (key == "init") c.init = v;
        else if (key == "speed") c.speed = v;
        else if (key == "bounds") {
            const auto b = parse_number_list(v, key);
            if (b.size() < 2 || b.size() > 6) throw ConfigError("bounds expects alpha,beta[,beta1[,beta'[,beta2[,beta3]]]]");
            SpeedBounds sb;
            sb.alpha = b[0];
            sb.beta = b[1];
            if (b.size() > 2) sb.beta1 = b[2];
            if (b.size() > 3) sb.beta_prime = b[3];
            if (b.size() > 4) sb.beta2 = b[4];
            if (b.size() > 5) sb.beta3 = b[5];
            c.bounds = sb;
        } else if (key == "offset") c.offset = parse_offset(v);
        else if (key == "method") c.integrator.method = parse_method(v);
        else if (key == "dt") c.integrator.dt = parse_dt(v);
        else if (key == "T") c.T = parse_number(v, key);
        else if (key == "stride") c.integrator.snapshot_stride = detail::parse_count(v, key);
        else if (key == "probes") {
            c.probes = detail::split(v, ',');
        } else if (key == "csv") c.csv = v;
        else if (key == "json") c.json = v;
        else if (key == "seed") {
            std::uint64_t s = 0;
            const auto r = std::from_chars(v.data(), v.data() + v.size(), s);
            if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("bad seed '" + v + "'");
            c.seed = s;
        } else if (key.rfind("check.", 0) == 0) {
            c.checks[key.substr(6)] = parse_number(v, key);
        } else {
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    const std::set<std::string> periodic_keys{"l", "N"}, window_keys{"x0", "M", "h", "extension"};
    for (const auto& k : c.topology == Topology::periodic ? window_keys : periodic_keys) {
        if (seen.count(k)) throw ConfigError("key '" + k + "' does not apply to this topology");
    }
    validate(c);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Canonical text form; parse_config(serialize(c)) == c.
inline std::string serialize(const ExperimentConfig& c) {
    std::ostringstream o;
    if (c.topology == Topology::periodic) {
        o << "topology = periodic\n";
        o << "l = " << format_double(c.l) << "\n";
        o << "N = " << c.N << "\n";
    } else {
        o << "topology = window\n";
        o << "x0 = " << format_double(c.x0) << "\n";
        o << "M = " << c.M << "\n";
        o << "h = " << format_double(c.h) << "\n";
        o << "extension = " << to_string(c.extension) << "\n";
    }
    o << "init = " << c.init << "\n";
    o << "speed = " << c.speed << "\n";
    if (c.bounds) {
        const auto& b = *c.bounds;
        o << "bounds = " << format_double(b.alpha) << "," << format_double(b.beta) << "," << format_double(b.beta1)
          << "," << format_double(b.beta_prime) << "," << format_double(b.beta2) << "," << format_double(b.beta3)
          << "\n";
    }
    o << "offset = " << to_string(c.offset) << "\n";
    o << "method = " << to_string(c.integrator.method) << "\n";
    o << "dt = " << to_string(c.integrator.dt) << "\n";
    o << "T = " << format_double(c.T) << "\n";
    o << "stride = " << c.integrator.snapshot_stride << "\n";
    o << "probes = ";
    for (std::size_t i = 0; i < c.probes.size(); ++i) o << (i ? "," : "") << c.probes[i];
    o << "\n";
    o << "csv = " << c.csv << "\n";
    o << "json = " << c.json << "\n";
    o << "seed = " << c.seed << "\n";
    for (const auto& [k, v] : c.checks) o << "check." << k << " = " << format_double(v) << "\n";
    return o.str();
}

} // namespace bfl
