#pragma once

// Batch experiments behind the CLI: the randomized identity suite, single
// runs with diagnostics, refinement studies and the stability sweep, plus
// their CSV/JSON reports.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "bfl/config.hpp"
#include "bfl/curve.hpp"
#include "bfl/dynamics.hpp"
#include "bfl/integrate.hpp"
#include "bfl/interp.hpp"
#include "bfl/lattice.hpp"
#include "bfl/probe.hpp"
#include "bfl/speed.hpp"

namespace bfl {

enum class ExitCode : int { pass = 0, divergence = 2, threshold = 3, config = 4 };

inline constexpr const char* csv_columns =
    "t,unit_drift,energy,grad_norm,rhs_norm,rhs_dual_norm,delta_norm,grad_margin,dual_margin,oracle_error,kappa_peak";
inline constexpr const char* csv_schema_version = "bfl-csv-v1";

inline std::string csv_schema() { return std::string(csv_schema_version) + ":" + csv_columns; }

// ---------------------------------------------------------------------------
// Parallel jobs

/// Worker cap: BFL_THREADS when set to a positive integer, else the hardware count.
inline unsigned thread_limit() {
    if (const char* env = std::getenv("BFL_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs job(i) for i in [0, n) on at most thread_limit() threads. Results are
/// stored by index, so the output does not depend on scheduling. The first
/// exception (lowest index) is rethrown after all workers finish.
template <typename R>
std::vector<R> parallel_map(std::size_t n, const std::function<R(std::size_t)>& job) {
    std::vector<std::optional<R>> out(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out[i] = job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min<std::size_t>(n, thread_limit());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<R> result;
    result.reserve(n);
    for (auto& r : out) result.push_back(std::move(*r));
    return result;
}

// ---------------------------------------------------------------------------
// Identity suite

struct IdentityRow {
    std::string name;
    std::size_t trials = 0;
    double worst = 0.0; ///< worst relative residual
    double threshold = 1e-11;
    bool passed() const { return worst <= threshold; }
};

struct IdentityReport {
    std::uint64_t seed = 0;
    std::vector<IdentityRow> rows;
    double seconds = 0.0;
    bool passed() const {
        return std::all_of(rows.begin(), rows.end(), [](const IdentityRow& r) { return r.passed(); });
    }
};

namespace detail {

inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : (num > 0.0 ? num : 0.0); }

struct TrialSetup {
    Grid grid;
    double scale;
};

/// Cycles through both topologies and h in {1, 0.1, 0.01}; every fourth trial
/// uses fields of magnitude 1e6.
inline TrialSetup trial_setup(std::size_t trial, std::mt19937_64& rng) {
    static constexpr double spacings[] = {1.0, 0.1, 0.01};
    const double h = spacings[(trial / 2) % 3];
    const std::size_t n = std::uniform_int_distribution<std::size_t>(8, 40)(rng);
    const double scale = trial % 4 == 3 ? 1e6 : 1.0;
    if (trial % 2 == 0) return {Grid::periodic(static_cast<double>(n) * h, n), scale};
    return {Grid::window(0.0, n, h), scale};
}

inline VectorField random_field(const Grid& g, std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> d(-scale, scale);
    std::vector<Vec3> v(g.size());
    for (auto& e : v) e = {d(rng), d(rng), d(rng)};
    return VectorField(g, std::move(v));
}

inline UnitField random_unit(const Grid& g, std::mt19937_64& rng) {
    std::normal_distribution<double> d;
    std::vector<Vec3> v(g.size());
    for (auto& e : v) e = normalized(Vec3{d(rng), d(rng), d(rng)});
    return UnitField(VectorField(g, std::move(v)));
}

inline ScalarField random_speed(const Grid& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(0.5, 3.0);
    std::vector<double> v(g.size());
    for (auto& e : v) e = d(rng);
    return ScalarField(g, std::move(v));
}

/// Random field vanishing on the two outermost nodes of a window.
inline VectorField compact_field(const Grid& g, std::mt19937_64& rng, double scale) {
    const auto f = random_field(g, rng, scale);
    std::vector<Vec3> v(f.values().begin(), f.values().end());
    if (!g.is_periodic()) {
        const std::size_t n = v.size();
        v[0] = v[1] = v[n - 2] = v[n - 1] = Vec3{};
    }
    return VectorField(g, std::move(v));
}

using Identity = std::function<double(std::size_t, std::mt19937_64&)>;

inline std::vector<std::pair<std::string, Identity>> identities() {
    std::vector<std::pair<std::string, Identity>> list;

    list.emplace_back("summation-by-parts", [](std::size_t k, std::mt19937_64& rng) {
        const auto s = trial_setup(k, rng);
        const auto u = compact_field(s.grid, rng, s.scale);
        const auto v = random_field(s.grid, rng, s.scale);
        const auto du = dplus(u), dv = dminus(v);
        double sum = 0.0, mag = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            sum += dot(v[i], du[i]) + dot(u[i], dv[i]);
            mag += norm(v[i]) * norm(du[i]) + norm(u[i]) * norm(dv[i]);
        }
        return safe_ratio(std::abs(sum), mag);
    });

    list.emplace_back("product-rule", [](std::size_t k, std::mt19937_64& rng) {
        const auto s = trial_setup(k, rng);
        const auto u = random_field(s.grid, rng, s.scale);
        const auto v = random_field(s.grid, rng, s.scale);
        const auto uv = dot(u, v);
        const auto lp = dplus(uv), lm = dminus(uv);
        const auto up = shift_plus(u), um = shift_minus(u), dup = dplus(u), dum = dminus(u);
        const auto dvp = dplus(v), dvm = dminus(v);
        double worst = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double rp = lp[i] - dot(up[i], dvp[i]) - dot(dup[i], v[i]);
            const double rm = lm[i] - dot(um[i], dvm[i]) - dot(dum[i], v[i]);
            const double sp = norm(up[i]) * norm(dvp[i]) + norm(dup[i]) * norm(v[i]);
            const double sm = norm(um[i]) * norm(dvm[i]) + norm(dum[i]) * norm(v[i]);
            worst = std::max({worst, safe_ratio(std::abs(rp), sp), safe_ratio(std::abs(rm), sm)});
        }
        return worst;
    });

    list.emplace_back("difference-bound", [](std::size_t k, std::mt19937_64& rng) {
        const auto s = trial_setup(k, rng);
        const auto v = random_field(s.grid, rng, s.scale);
        const double bound = 2.0 / s.grid.h() * norm_h(v);
        return safe_ratio(std::max(0.0, norm_h(dplus(v)) - bound), bound);
    });

    list.emplace_back("unit-dot-differences", [](std::size_t k, std::mt19937_64& rng) {
        const auto s = trial_setup(k, rng);
        const auto u = random_unit(s.grid, rng).field();
        const double h = s.grid.h();
        const auto dp = dplus(u), dm = dminus(u);
        double worst = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double rp = dot(u[i], dp[i]) + 0.5 * h * norm2(dp[i]);
            const double rm = dot(u[i], dm[i]) - 0.5 * h * norm2(dm[i]);
            worst = std::max({worst, safe_ratio(std::abs(rp), norm(dp[i]) + 0.5 * h * norm2(dp[i])),
                              safe_ratio(std::abs(rm), norm(dm[i]) + 0.5 * h * norm2(dm[i]))});
        }
        return worst;
    });

    list.emplace_back("unit-dot-laplacian", [](std::size_t k, std::mt19937_64& rng) {
        const auto s = trial_setup(k, rng);
        const auto u = random_unit(s.grid, rng).field();
        const auto g = random_speed(s.grid, rng);
        const auto lap = delta_g(g, u);
        const auto dp = dplus(u), dm = dminus(u);
        const auto gp = shift_plus(g);
        double worst = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double e = 0.5 * (g[i] * norm2(dm[i]) + gp[i] * norm2(dp[i]));
            worst = std::max(worst, safe_ratio(std::abs(dot(u[i], lap[i]) + e), norm(lap[i]) + e));
        }
        return worst;
    });

    list.emplace_back("laplacian-factorization", [](std::size_t k, std::mt19937_64& rng) {
        const auto s = trial_setup(k, rng);
        const auto v = random_field(s.grid, rng, s.scale);
        const auto g = random_speed(s.grid, rng);
        const auto a = delta_g(g, v), b = delta_g_shifted(g, v);
        const auto gp = shift_plus(g);
        const auto dp = dplus(v), dm = dminus(v);
        double worst = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double mag = (gp[i] * norm(dp[i]) + g[i] * norm(dm[i])) / s.grid.h();
            worst = std::max(worst, safe_ratio(norm(a[i] - b[i]), mag));
        }
        return worst;
    });

    list.emplace_back("rhs-form-equivalence", [](std::size_t k, std::mt19937_64& rng) {
        const auto s = trial_setup(k, rng);
        const auto u = random_unit(s.grid, rng).field();
        const auto g = random_speed(s.grid, rng);
        const auto flux = g * dminus(u);
        double mag = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            mag = std::max(mag, (norm(flux.at(static_cast<std::ptrdiff_t>(i) + 1)) + norm(flux[i])) / s.grid.h());
        }
        return safe_ratio(form_equivalence_residual(u, g), mag);
    });

    list.emplace_back("pq-gap", [](std::size_t k, std::mt19937_64& rng) {
        const auto s = trial_setup(k, rng);
        const auto v = random_field(s.grid, rng, s.scale);
        const double gap = pq_gap(v);
        const double quad = l2_distance_quadrature(linear_interpolant(v), constant_interpolant(v));
        return safe_ratio(std::abs(gap - quad), gap);
    });

    // ||P_h v||^2 = |v|_h^2 - (h^2/6)|D+v|_h^2 (minus the half end-node weights
    // on a window, whose sums count the end nodes fully).
    list.emplace_back("interpolant-norm", [](std::size_t k, std::mt19937_64& rng) {
        const auto s = trial_setup(k, rng);
        const auto v = random_field(s.grid, rng, s.scale);
        const double h = s.grid.h();
        double expect = std::pow(norm_h(v), 2) - h * h / 6.0 * std::pow(norm_h(dplus(v)), 2);
        if (!s.grid.is_periodic()) expect -= 0.5 * h * (norm2(v[0]) + norm2(v[v.size() - 1]));
        const double got = std::pow(l2_norm_P(v), 2);
        return safe_ratio(std::abs(got - expect), std::pow(norm_h(v), 2));
    });

    return list;
}

/// The worked h = 1 example: u = (0,2,0), v = (0,1,0) embedded in zeros,
/// sum v D+u = -2 and -sum u D-v = -2.
inline double worked_example_residual() {
    const Grid g = Grid::window(0.0, 6, 1.0);
    const ScalarField u(g, {0, 0, 0, 2, 0, 0, 0});
    const ScalarField v(g, {0, 0, 0, 1, 0, 0, 0});
    const auto du = dplus(u), dv = dminus(v);
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        a += v[i] * du[i];
        b -= u[i] * dv[i];
    }
    return std::abs(a + 2.0) + std::abs(b + 2.0);
}

} // namespace detail

inline IdentityReport run_identities(std::uint64_t seed, std::size_t trials = 1000) {
    const auto start = std::chrono::steady_clock::now();
    IdentityReport report;
    report.seed = seed;
    report.rows.push_back({"worked-example", 1, detail::worked_example_residual(), 1e-11});
    std::uint64_t salt = 0;
    for (const auto& [name, identity] : detail::identities()) {
        std::mt19937_64 rng(seed * 1000003u + (++salt));
        IdentityRow row{name, trials, 0.0, 1e-11};
        for (std::size_t k = 0; k < trials; ++k) row.worst = std::max(row.worst, identity(k, rng));
        report.rows.push_back(row);
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

// ---------------------------------------------------------------------------
// Initial data and oracles

/// Closed-form error of a state, when one is known.
using Oracle = std::function<double(const FlowState&)>;

struct InitialData {
    FlowState state;
    Oracle oracle; ///< empty when no closed form applies
    std::string oracle_name;
};

namespace detail {

inline UnitField read_tangent_file(const std::string& path, const Grid& grid) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read initial data file '" + path + "'");
    std::vector<Vec3> v;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto parts = split(trim(line), ',');
        if (parts.size() != 3) throw ConfigError("initial data line '" + line + "' is not x,y,z");
        v.push_back({parse_number(parts[0], path), parse_number(parts[1], path), parse_number(parts[2], path)});
    }
    if (v.size() != grid.size()) {
        throw ConfigError("initial data file has " + std::to_string(v.size()) + " vectors, grid has " +
                          std::to_string(grid.size()) + " nodes");
    }
    VectorField f(grid, std::move(v));
    if (unit_drift(f) > 1e-6) throw ConfigError("initial data file is not a unit field (drift > 1e-6)");
    return UnitField::normalize(f);
}

inline std::optional<double> constant_speed(const SpeedField& g) {
    if (g.flavor() != SpeedFlavor::constant) return std::nullopt;
    return g(0.0, 0.0);
}

} // namespace detail

inline InitialData make_initial(const ExperimentConfig& cfg) {
    const Grid grid = cfg.grid();
    auto speed = std::make_shared<const SpeedField>(cfg.speed_field());
    const Selector init = parse_init(cfg.init);
    const auto c = detail::constant_speed(*speed);
    const auto& p = init.params;

    if (init.kind == "great-circle") {
        const double k = p.empty() ? 1.0 : p[0];
        const auto u0 = oracle_great_circle(grid, k);
        InitialData d{FlowState::tangent(u0, speed), {}, {}};
        if (c) {
            d.oracle = [u0](const FlowState& s) { return norm_Linf_h(s.field - u0.field()); };
            d.oracle_name = "stationary great circle";
        }
        return d;
    }
    if (init.kind == "helix") {
        const double alpha = p[0], k = p[1];
        const auto u0 = oracle_helix(grid, alpha, k);
        InitialData d{FlowState::tangent(u0, speed), {}, {}};
        if (c && grid.is_periodic()) {
            HelixOracle o = HelixOracle::semi_discrete(grid, alpha, k);
            o.omega *= *c;
            d.oracle = [o](const FlowState& s) { return norm_Linf_h(s.field - o.at(s.grid(), s.t).field()); };
            d.oracle_name = "semi-discrete precessing helix";
        }
        return d;
    }
    if (init.kind == "soliton") {
        const auto gamma = oracle_soliton_curve(grid, p[0], p[1]);
        const std::size_t a = default_origin(grid);
        const UnitField u0(dplus(gamma));
        return {FlowState::anchored_tangent(u0, speed, a, gamma[a]), {}, {}};
    }
    if (init.kind == "file") {
        return {FlowState::tangent(detail::read_tangent_file(init.raw, grid), speed), {}, {}};
    }
    if (init.kind == "coupled-circle") {
        const auto gamma = oracle_unit_polygon(grid);
        InitialData d{FlowState::coupled(gamma, speed), {}, {}};
        if (c) {
            // The polygon translates rigidly along e3 at speed c sin(h)/h.
            const double v = *c * std::sin(grid.h()) / grid.h();
            d.oracle = [gamma, v](const FlowState& s) {
                const auto shift = VectorField::filled(s.grid(), Vec3{0, 0, v * s.t});
                return norm_Linf_h(s.field - (gamma + shift));
            };
            d.oracle_name = "rigidly translating polygon";
        }
        return d;
    }
    // coupled-soliton
    const double nu = p.size() > 0 ? p[0] : 1.0;
    const double tau0 = p.size() > 1 ? p[1] : 0.5;
    return {FlowState::coupled(oracle_soliton_curve(grid, nu, tau0), speed), {}, {}};
}

// ---------------------------------------------------------------------------
// Single run

struct RunRow {
    DiagnosticsRecord diag;
    double kappa_peak = std::numeric_limits<double>::quiet_NaN();
};

struct CheckResult {
    std::string name;
    double value;
    double threshold;
    bool passed;
};

struct RunSummary {
    double max_unit_drift = 0.0;
    double max_energy_drift = 0.0; ///< max |E(t) - E(0)| / E(0)
    double min_grad_margin = std::numeric_limits<double>::infinity();
    double min_dual_margin = std::numeric_limits<double>::infinity();
    double final_oracle_error = std::numeric_limits<double>::quiet_NaN();
    double max_oracle_error = std::numeric_limits<double>::quiet_NaN();
    double peak_speed = std::numeric_limits<double>::quiet_NaN();
};

struct RunReport {
    ExperimentConfig config;
    std::vector<RunRow> rows;
    RunSummary summary;
    std::vector<CheckResult> checks;
    std::string oracle_name;
    bool complete = true;
    std::string failure;
    std::size_t steps = 0;
    ExitCode exit = ExitCode::pass;
};

namespace detail {

/// Least-squares slope of y against t.
inline double fitted_slope(const std::vector<double>& t, const std::vector<double>& y) {
    const double n = static_cast<double>(t.size());
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        st += t[i];
        sy += y[i];
        stt += t[i] * t[i];
        sty += t[i] * y[i];
    }
    const double den = n * stt - st * st;
    return den > 0 ? (n * sty - st * sy) / den : std::numeric_limits<double>::quiet_NaN();
}

inline void apply_check(std::vector<CheckResult>& out, const ExperimentConfig& cfg, const std::string& name,
                        double value, bool upper) {
    const auto thr = cfg.check(name);
    if (!thr) return;
    const bool ok = upper ? (value <= *thr) : (value >= *thr);
    out.push_back({name, value, *thr, ok && std::isfinite(value)});
}

} // namespace detail

inline RunReport run_experiment(const ExperimentConfig& cfg) {
    RunReport report;
    report.config = cfg;
    const InitialData init = make_initial(cfg);
    report.oracle_name = init.oracle_name;
    const bool diagnostics = cfg.has_probe("diagnostics");
    const bool oracle = cfg.has_probe("oracle") && static_cast<bool>(init.oracle);
    const bool peaks = cfg.has_probe("frenet");
    const double grad0 = norm_h(dplus(init.state.tangent_field()));

    auto record = [&](const FlowState& s, std::size_t) {
        RunRow row;
        if (diagnostics) {
            row.diag = diagnose(s, grad0);
        } else {
            constexpr double nan = std::numeric_limits<double>::quiet_NaN();
            row.diag = {s.t, unit_drift(s.tangent_field()), nan, nan, nan, nan, nan, nan, nan, nan};
        }
        if (oracle) row.diag.oracle_error = init.oracle(s);
        if (peaks) row.kappa_peak = peak_location(frenet(s.curve()).kappa);
        report.rows.push_back(row);
    };
    const auto run = evolve(init.state, cfg.T, cfg.integrator, {record}, false);
    report.complete = run.complete;
    report.failure = run.failure;
    report.steps = run.steps;

    auto& sm = report.summary;
    const double e0 = report.rows.front().diag.energy;
    std::vector<double> ts, peaks_x;
    for (const auto& r : report.rows) {
        sm.max_unit_drift = std::max(sm.max_unit_drift, r.diag.unit_drift);
        if (diagnostics) {
            sm.max_energy_drift = std::max(sm.max_energy_drift, std::abs(r.diag.energy - e0) / e0);
            sm.min_grad_margin = std::min(sm.min_grad_margin, r.diag.grad_margin);
            sm.min_dual_margin = std::min(sm.min_dual_margin, r.diag.dual_margin);
        }
        if (oracle) sm.max_oracle_error = std::isnan(sm.max_oracle_error) ? r.diag.oracle_error
                                                                          : std::max(sm.max_oracle_error, r.diag.oracle_error);
        ts.push_back(r.diag.t);
        peaks_x.push_back(r.kappa_peak);
    }
    if (oracle) sm.final_oracle_error = report.rows.back().diag.oracle_error;
    if (peaks && ts.size() >= 2) sm.peak_speed = detail::fitted_slope(ts, peaks_x);
    if (!diagnostics) {
        sm.max_energy_drift = sm.min_grad_margin = sm.min_dual_margin = std::numeric_limits<double>::quiet_NaN();
    }

    detail::apply_check(report.checks, cfg, "oracle_error", sm.max_oracle_error, true);
    detail::apply_check(report.checks, cfg, "energy_drift", sm.max_energy_drift, true);
    detail::apply_check(report.checks, cfg, "unit_drift", sm.max_unit_drift, true);
    detail::apply_check(report.checks, cfg, "margin", std::min(sm.min_grad_margin, sm.min_dual_margin), false);

    if (!report.complete) {
        report.exit = ExitCode::divergence;
    } else if (std::any_of(report.checks.begin(), report.checks.end(), [](const CheckResult& c) { return !c.passed; })) {
        report.exit = ExitCode::threshold;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Refinement study

struct ConvergenceRow {
    std::size_t level = 0;
    std::size_t nodes = 0;
    double h = 0.0;
    double dt = 0.0;
    double error = std::numeric_limits<double>::quiet_NaN(); ///< vs oracle, or |u_k - u_{k+1}| on level k
    double order = std::numeric_limits<double>::quiet_NaN(); ///< log2(error_{k-1} / error_k)
};

struct ConvergenceReport {
    ExperimentConfig config;
    std::string reference; ///< "continuum-helix" or "richardson"
    SamplingOffset offset = SamplingOffset::node;
    std::vector<ConvergenceRow> rows;
    std::vector<CheckResult> checks;
    ExitCode exit = ExitCode::pass;
    std::string failure;
};

/// Config for refinement level k: 2^k times more cells, dt = c h^2 / beta at
/// every level (a fixed dt in the base config fixes c from the base h).
inline ExperimentConfig refined(const ExperimentConfig& base, std::size_t k) {
    ExperimentConfig c = base;
    const double factor = std::ldexp(1.0, static_cast<int>(k));
    if (base.topology == Topology::periodic) {
        c.N = base.N << k;
    } else {
        c.M = base.M << k;
        c.h = base.h / factor;
    }
    if (base.integrator.dt.kind == DtPolicy::Kind::fixed) {
        const double h0 = base.grid().h();
        c.integrator.dt = DtPolicy::cfl(base.integrator.dt.value * base.speed_field().bounds().beta / (h0 * h0));
    }
    return c;
}

inline ConvergenceReport run_convergence(const ExperimentConfig& base, std::size_t levels,
                                         std::optional<SamplingOffset> offset = std::nullopt) {
    if (levels < 3) throw ConfigError("a refinement study needs at least 3 levels");
    ExperimentConfig cfg = base;
    if (offset) cfg.offset = *offset;
    const Selector init = parse_init(cfg.init);
    if (is_coupled_init(init.kind) || init.kind == "file") {
        throw ConfigError("refinement studies need a grid-generated tangent init (great-circle, helix, soliton)");
    }
    ConvergenceReport report;
    report.config = cfg;
    report.offset = cfg.offset;
    const auto c = detail::constant_speed(cfg.speed_field());
    const bool continuum = init.kind == "helix" && c && cfg.topology == Topology::periodic;
    report.reference = continuum ? "continuum-helix" : "richardson";

    struct Level {
        VectorField u;
        double dt;
    };
    std::vector<Level> sols;
    try {
        sols = parallel_map<Level>(levels, [&](std::size_t k) {
            const ExperimentConfig ck = refined(cfg, k);
            const InitialData d = make_initial(ck);
            const auto run = evolve(d.state, ck.T, ck.integrator, {}, false);
            if (!run.complete) throw DivergenceError("level " + std::to_string(k) + ": " + run.failure, run.failed_step);
            return Level{run.final_state.field, resolve_dt(ck.integrator.dt, d.state.grid(), *d.state.speed)};
        });
    } catch (const DivergenceError& e) {
        report.exit = ExitCode::divergence;
        report.failure = e.what();
        return report;
    }

    const std::size_t rows = continuum ? levels : levels - 1;
    for (std::size_t k = 0; k < rows; ++k) {
        const Grid& g = sols[k].u.grid();
        ConvergenceRow r{k, g.size(), g.h(), sols[k].dt};
        if (continuum) {
            HelixOracle o = HelixOracle::continuum(init.params[0], init.params[1]);
            o.omega *= *c;
            r.error = norm_Linf_h(sols[k].u - o.at(g, cfg.T).field());
        } else {
            r.error = norm_Linf_h(sols[k].u - resample(sols[k + 1].u, g));
        }
        if (k > 0) r.order = std::log2(report.rows.back().error / r.error);
        report.rows.push_back(r);
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : report.rows) {
        if (!std::isnan(r.order)) {
            lo = std::min(lo, r.order);
            hi = std::max(hi, r.order);
        }
    }
    detail::apply_check(report.checks, cfg, "order_min", lo, false);
    detail::apply_check(report.checks, cfg, "order_max", hi, true);
    if (std::any_of(report.checks.begin(), report.checks.end(), [](const CheckResult& x) { return !x.passed; })) {
        report.exit = ExitCode::threshold;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Stability sweep

struct StabilityRow {
    double eps;
    StabilityResult result;
};

struct StabilityReport {
    ExperimentConfig config;
    std::vector<StabilityRow> rows;
    double spread = std::numeric_limits<double>::quiet_NaN(); ///< max ratio / min ratio - 1
    std::vector<CheckResult> checks;
    ExitCode exit = ExitCode::pass;
    std::string failure;
};

inline StabilityReport run_stability(const ExperimentConfig& cfg, const std::vector<double>& eps) {
    if (eps.size() < 2) throw ConfigError("the stability sweep needs at least two perturbation scales");
    for (double e : eps) {
        if (!(e > 0.0) || e > 0.1) throw ConfigError("perturbation scale " + format_double(e) + " outside (0, 0.1]");
    }
    const InitialData init = make_initial(cfg);
    if (init.state.mode != FlowMode::tangent || init.state.speed->flavor() == SpeedFlavor::coupled) {
        throw ConfigError("the stability sweep needs tangent-mode initial data and a curve-independent speed");
    }
    StabilityReport report;
    report.config = cfg;
    const UnitField u0(init.state.field);
    try {
        const auto results = parallel_map<StabilityResult>(eps.size(), [&](std::size_t i) {
            return stability_probe(u0, eps[i], init.state.speed, cfg.T, cfg.integrator);
        });
        for (std::size_t i = 0; i < eps.size(); ++i) report.rows.push_back({eps[i], results[i]});
    } catch (const DivergenceError& e) {
        report.exit = ExitCode::divergence;
        report.failure = e.what();
        return report;
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& r : report.rows) {
        lo = std::min(lo, r.result.ratio);
        hi = std::max(hi, r.result.ratio);
    }
    report.spread = hi / lo - 1.0;
    detail::apply_check(report.checks, cfg, "stability_spread", report.spread, true);
    if (std::any_of(report.checks.begin(), report.checks.end(), [](const CheckResult& x) { return !x.passed; })) {
        report.exit = ExitCode::threshold;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string csv_cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

inline nlohmann::json json_number(double v) {
    if (std::isnan(v) || std::isinf(v)) return nullptr;
    return v;
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
    nlohmann::json j = nlohmann::json::object();
    std::istringstream in(serialize(c));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        j[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return j;
}

inline nlohmann::json checks_json(const std::vector<CheckResult>& checks) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : checks) {
        a.push_back({{"name", c.name}, {"value", json_number(c.value)}, {"threshold", c.threshold}, {"passed", c.passed}});
    }
    return a;
}

} // namespace detail

/// One row per snapshot, columns as in csv_columns; unmeasured cells are empty.
inline std::string to_csv(const RunReport& r) {
    std::string out = std::string(csv_columns) + "\n";
    for (const auto& row : r.rows) {
        const auto& d = row.diag;
        const double cells[] = {d.t,         d.unit_drift,    d.energy,      d.grad_norm,
                                d.rhs_norm,  d.rhs_dual_norm, d.delta_norm,  d.grad_margin,
                                d.dual_margin, d.oracle_error, row.kappa_peak};
        bool first = true;
        for (double v : cells) {
            if (!first) out += ',';
            out += detail::csv_cell(v);
            first = false;
        }
        out += '\n';
    }
    return out;
}

inline nlohmann::json to_json(const RunReport& r) {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        std::stringstream ss(csv_columns);
        std::string item;
        while (std::getline(ss, item, ',')) v.push_back(item);
        return v;
    }();
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        const auto& d = row.diag;
        const double cells[] = {d.t,         d.unit_drift,    d.energy,      d.grad_norm,
                                d.rhs_norm,  d.rhs_dual_norm, d.delta_norm,  d.grad_margin,
                                d.dual_margin, d.oracle_error, row.kappa_peak};
        nlohmann::json o = nlohmann::json::object();
        for (std::size_t i = 0; i < names.size(); ++i) o[names[i]] = detail::json_number(cells[i]);
        rows.push_back(o);
    }
    const auto& s = r.summary;
    return {
        {"command", "run"},
        {"csv_schema", csv_schema()},
        {"config", detail::config_json(r.config)},
        {"oracle", r.oracle_name},
        {"rows", rows},
        {"summary",
         {{"max_unit_drift", detail::json_number(s.max_unit_drift)},
          {"max_energy_drift", detail::json_number(s.max_energy_drift)},
          {"min_grad_margin", detail::json_number(s.min_grad_margin)},
          {"min_dual_margin", detail::json_number(s.min_dual_margin)},
          {"final_oracle_error", detail::json_number(s.final_oracle_error)},
          {"max_oracle_error", detail::json_number(s.max_oracle_error)},
          {"peak_speed", detail::json_number(s.peak_speed)}}},
        {"checks", detail::checks_json(r.checks)},
        {"complete", r.complete},
        {"failure", r.failure},
        {"steps", r.steps},
        {"exit_code", static_cast<int>(r.exit)},
    };
}

inline std::string to_csv(const ConvergenceReport& r) {
    std::string out = "level,nodes,h,dt,error,order\n";
    for (const auto& row : r.rows) {
        out += std::to_string(row.level) + ',' + std::to_string(row.nodes) + ',' + format_double(row.h) + ',' +
               format_double(row.dt) + ',' + detail::csv_cell(row.error) + ',' + detail::csv_cell(row.order) + '\n';
    }
    return out;
}

inline nlohmann::json to_json(const ConvergenceReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"level", row.level},
                        {"nodes", row.nodes},
                        {"h", row.h},
                        {"dt", row.dt},
                        {"error", detail::json_number(row.error)},
                        {"order", detail::json_number(row.order)}});
    }
    return {{"command", "converge"},
            {"csv_schema", std::string(csv_schema_version) + ":level,nodes,h,dt,error,order"},
            {"config", detail::config_json(r.config)},
            {"reference", r.reference},
            {"offset", to_string(r.offset)},
            {"rows", rows},
            {"checks", detail::checks_json(r.checks)},
            {"failure", r.failure},
            {"exit_code", static_cast<int>(r.exit)}};
}

inline std::string to_csv(const StabilityReport& r) {
    std::string out = "eps,ratio,initial_distance,final_distance\n";
    for (const auto& row : r.rows) {
        out += format_double(row.eps) + ',' + format_double(row.result.ratio) + ',' +
               format_double(row.result.initial_distance) + ',' + format_double(row.result.final_distance) + '\n';
    }
    return out;
}

inline nlohmann::json to_json(const StabilityReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"eps", row.eps},
                        {"ratio", row.result.ratio},
                        {"initial_distance", row.result.initial_distance},
                        {"final_distance", row.result.final_distance}});
    }
    return {{"command", "stability"},
            {"csv_schema", std::string(csv_schema_version) + ":eps,ratio,initial_distance,final_distance"},
            {"config", detail::config_json(r.config)},
            {"rows", rows},
            {"spread", detail::json_number(r.spread)},
            {"checks", detail::checks_json(r.checks)},
            {"failure", r.failure},
            {"exit_code", static_cast<int>(r.exit)}};
}

inline std::string to_csv(const IdentityReport& r) {
    std::string out = "identity,trials,worst_relative_residual,threshold,passed\n";
    for (const auto& row : r.rows) {
        out += row.name + ',' + std::to_string(row.trials) + ',' + format_double(row.worst) + ',' +
               format_double(row.threshold) + ',' + (row.passed() ? "1" : "0") + '\n';
    }
    return out;
}

inline nlohmann::json to_json(const IdentityReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"identity", row.name},
                        {"trials", row.trials},
                        {"worst_relative_residual", row.worst},
                        {"threshold", row.threshold},
                        {"passed", row.passed()}});
    }
    return {{"command", "identities"},
            {"csv_schema", std::string(csv_schema_version) + ":identity,trials,worst_relative_residual,threshold,passed"},
            {"seed", r.seed},
            {"rows", rows},
            {"passed", r.passed()}};
}

/// Writes text with LF line endings (binary mode, no translation).
inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << text;
}

} // namespace bfl
