// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bfl/experiments.hpp"
#include "bfl/reconstruct.hpp"

using namespace bfl;

namespace {

struct Outcome {
    bool passed;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> body;
};

const double two_pi = 2 * std::numbers::pi;

std::shared_ptr<const SpeedField> speed(const std::string& s) { return std::make_shared<const SpeedField>(SpeedField::parse(s)); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome check_identities() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_identities(1, 1000);
    const double secs = seconds_since(t0);
    double worst = 0.0;
    std::string worst_name;
    for (const auto& row : r.rows) {
        if (row.worst >= worst) {
            worst = row.worst;
            worst_name = row.name;
        }
    }
    return {r.passed() && secs < 10.0,
            "worst residual " + fmt(worst) + " (" + worst_name + "), " + fmt(secs) + " s"};
}

// The sandwich is checked exactly as stated. ||P_h v||^2 = |v|^2 - (h^2/6)|D+v|^2
// (minus the half-weight end terms on a window) puts the ratio in [1/sqrt3, 1],
// so the lower bound fails for any non-constant field; the gap identity holds.
Outcome check_norm_bridges() {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    double min_ratio = 1e300, max_ratio = 0.0, gap_err = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double h = std::array{1.0, 0.1, 0.01}[k % 3];
        const std::size_t n = 8 + static_cast<std::size_t>(k % 33);
        const Grid g = k % 2 ? Grid::periodic(n * h, n) : Grid::window(0.0, n, h);
        std::vector<Vec3> v(g.size());
        for (auto& e : v) e = {d(rng), d(rng), d(rng)};
        const VectorField f(g, std::move(v));
        const double ratio = l2_norm_P(f) / norm_h(f);
        min_ratio = std::min(min_ratio, ratio);
        max_ratio = std::max(max_ratio, ratio);
        const double gap2 = std::pow(pq_gap(f), 2);
        const double expect = h * h / 3.0 * std::pow(norm_h(dplus(f)), 2);
        gap_err = std::max(gap_err, std::abs(gap2 - expect) / expect);
    }
    const bool lower = min_ratio >= 1.0 - 1e-10;
    const bool upper = max_ratio <= std::sqrt(4.0 / 3.0) * (1 + 1e-10);
    const bool gap = gap_err <= 1e-10;
    return {lower && upper && gap, "||P_h v||/|v|_h in [" + fmt(min_ratio) + ", " + fmt(max_ratio) +
                                       "] vs stated [1, 1.15]; lower bound " + (lower ? "holds" : "violated") +
                                       " (true constants 1/sqrt3 and 1); gap identity rel err " + fmt(gap_err)};
}

Outcome check_helix() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto g = Grid::periodic(two_pi, 64);
    const auto o = HelixOracle::semi_discrete(g, std::numbers::pi / 4, 2);
    auto error = [&](Method m, double dt) {
        const auto r = evolve(FlowState::tangent(o.at(g, 0), speed("const:1")), 1.0, {m, DtPolicy::fixed(dt), 1000000},
                              {}, false);
        return norm_Linf_h(r.final_state.field - o.at(g, 1.0).field());
    };
    const double err = error(Method::rotation, 1e-3);
    const double order = std::log2(error(Method::rk4, 2e-3) / error(Method::rk4, 1e-3));
    const double secs = seconds_since(t0);
    return {err <= 1e-6 && order >= 3.7 && order <= 4.3 && secs < 5.0,
            "rotation error " + fmt(err) + ", rk4 order " + fmt(order) + ", " + fmt(secs) + " s"};
}

Outcome check_great_circle() {
    const auto g = Grid::periodic(two_pi, 64);
    const auto u0 = oracle_great_circle(g);
    const auto r = evolve(FlowState::tangent(u0, speed("const:1")), 1.0, {Method::rotation, DtPolicy::fixed(1e-3), 1},
                          {}, false);
    const double drift = norm_Linf_h(r.final_state.field - u0.field());
    const double unit = unit_drift(r.final_state.field);
    return {drift <= 1e-10 && unit <= 1e-12, "L-inf drift " + fmt(drift) + ", unit drift " + fmt(unit)};
}

Outcome check_energy() {
    const double h = two_pi / 128;
    auto cfg = parse_config("N = 128\ninit = helix:pi/4,2\nspeed = sin:2,1,1\nmethod = rotation-split\nT = 1\n"
                            "stride = 100\nprobes = diagnostics\n");
    cfg.integrator.dt = DtPolicy::fixed(h * h / 4);
    const auto r = run_experiment(cfg);
    const double drift = r.summary.max_energy_drift;
    return {r.complete && drift <= 1e-7, "rotation-split, dt = h^2/4: relative energy drift " + fmt(drift)};
}

Outcome check_bounds() {
    const auto cfg = parse_config("init = helix:pi/4,2\nspeed = sintime:2,1,1,1\nmethod = rotation\ndt = cfl:0.25\n"
                                  "T = 1\nstride = 10\nprobes = diagnostics\n");
    const auto& b = cfg.speed_field().bounds();
    const auto r = run_experiment(cfg);
    const double m = std::min(r.summary.min_grad_margin, r.summary.min_dual_margin);
    const bool right_bounds = b.alpha == 1.0 && b.beta == 3.0 && b.beta1 == 1.0;
    return {r.complete && right_bounds && m >= -1e-8,
            "min margin " + fmt(m) + " over " + std::to_string(r.rows.size()) + " snapshots"};
}

Outcome check_reconstruction() {
    const auto g = Grid::periodic(two_pi, 64);
    const double h = g.h();
    const auto u0 = oracle_great_circle(g);
    const auto run = evolve(FlowState::tangent(u0, speed("const:1")), 1.0, {Method::rotation, DtPolicy::fixed(1e-3), 100});
    const auto traj = TangentTrajectory::from_run(run);
    const auto curve = reconstruct_curve(traj, 0);
    double translation = 0.0, tangency = 0.0;
    for (std::size_t k = 0; k < curve.snapshots.size(); ++k) {
        const auto moved = curve.snapshots[k].gamma - curve.snapshots[0].gamma;
        const auto rigid = VectorField::filled(g, Vec3{0, 0, curve.snapshots[k].t});
        translation = std::max(translation, norm_Linf_h(moved - rigid));
        tangency = std::max(tangency, norm_Linf_h(dplus(curve.snapshots[k].gamma) - traj[k].u));
    }
    const double allowed = std::abs(1 - std::sin(h) / h) * 1.0 + 1e-8;

    // the drift is anchor independent up to the time quadrature, which
    // refines with the snapshot spacing
    const auto o = HelixOracle::semi_discrete(g, std::numbers::pi / 4, 2);
    std::vector<double> disp;
    for (double dt : {2e-3, 1e-3, 5e-4}) {
        const auto r = evolve(FlowState::tangent(o.at(g, 0), speed("const:1")), 1.0,
                              {Method::rotation, DtPolicy::fixed(dt), 10});
        disp.push_back(anchor_dispersion(TangentTrajectory::from_run(r), {0, 16, 32, 48}));
    }
    const double order = std::min(std::log2(disp[0] / disp[1]), std::log2(disp[1] / disp[2]));
    return {translation <= allowed && order >= 1.0 && tangency <= 1e-13,
            "translation error " + fmt(translation) + " (allowed " + fmt(allowed) + "), dispersion order " +
                fmt(order) + ", |D+gamma - u| " + fmt(tangency)};
}

Outcome check_convergence() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto helix_cfg = parse_config("N = 16\ninit = helix:pi/4,1\nmethod = rotation\ndt = cfl:0.25\nT = 0.25\n");
    const auto var_cfg =
        parse_config("N = 32\ninit = helix:pi/4,1\nspeed = sin:2,1,1\nmethod = rotation\ndt = cfl:0.25\nT = 0.25\n");
    const auto c = run_convergence(helix_cfg, 4);
    const auto node = run_convergence(var_cfg, 5, SamplingOffset::node);
    const auto mid = run_convergence(var_cfg, 5, SamplingOffset::midpoint);
    auto range = [](const ConvergenceReport& r) {
        double lo = 1e300, hi = -1e300;
        for (const auto& row : r.rows) {
            if (std::isnan(row.order)) continue;
            lo = std::min(lo, row.order);
            hi = std::max(hi, row.order);
        }
        return std::pair{lo, hi};
    };
    const auto [c_lo, c_hi] = range(c);
    const auto [n_lo, n_hi] = range(node);
    const auto [m_lo, m_hi] = range(mid);
    const double secs = seconds_since(t0);
    const bool ok = c_lo >= 1.7 && c_hi <= 2.3 && n_lo >= 0.8 && n_hi <= 1.3 && m_lo >= 1.7 && m_hi <= 2.3 &&
                    secs < 120.0;
    return {ok, "continuum [" + fmt(c_lo) + ", " + fmt(c_hi) + "], node [" + fmt(n_lo) + ", " + fmt(n_hi) +
                    "], midpoint [" + fmt(m_lo) + ", " + fmt(m_hi) + "], " + fmt(secs) + " s"};
}

Outcome check_stability() {
    const auto cfg =
        parse_config("init = helix:pi/4,2\nspeed = sin:2,1,1\nmethod = rotation\ndt = cfl:0.25\nT = 0.5\n");
    const auto r = run_stability(cfg, {1e-2, 1e-3, 1e-4});
    std::string ratios;
    for (const auto& row : r.rows) ratios += (ratios.empty() ? "" : ", ") + fmt(row.result.ratio);
    return {r.exit == ExitCode::pass && r.spread < 0.2, "ratios " + ratios + ", spread " + fmt(r.spread)};
}

// Regression values frozen from the reference build, with headroom for
// compiler and libm differences. Measured: 2.3e-14 between D+gamma and u and
// 2.5e-15 for the curve carried by the tangent run's anchor (rounding only);
// 4.3e-8 for the rebuilt curve, the trapezoid rule in the base-point drift at
// one snapshot per step (it drops 4x when the step halves).
constexpr double frozen_tangent_discrepancy = 1e-12;
constexpr double frozen_reconstruction_discrepancy = 1e-6;

Outcome check_coupled() {
    const auto g = Grid::periodic(two_pi, 64);
    const auto gamma0 = oracle_unit_polygon(g);
    const auto sp = speed("coupled-tanh:1,0.5");
    const IntegratorSpec spec{Method::rk4, DtPolicy::cfl(0.25), 1};
    const auto direct = evolve(FlowState::coupled(gamma0, sp), 0.5, spec);
    const auto tangent =
        evolve(FlowState::anchored_tangent(UnitField::normalize(dplus(gamma0)), sp, 0, gamma0[0]), 0.5, spec);
    if (!direct.complete || !tangent.complete) return {false, "diverged"};

    double arclength = 0.0, discrepancy = 0.0, anchored = 0.0, rebuilt = 0.0;
    const auto traj = TangentTrajectory::from_run(tangent);
    const auto curve = reconstruct_curve(traj, 0);
    for (std::size_t k = 0; k < direct.snapshots.size(); ++k) {
        const auto& s = direct.snapshots[k];
        arclength = std::max(arclength, unit_drift(dplus(s.field)));
        discrepancy = std::max(discrepancy, norm_Linf_h(dplus(s.field) - tangent.snapshots[k].field));
        anchored = std::max(anchored, norm_Linf_h(tangent.snapshots[k].curve() - s.field));
        const auto moved = curve.snapshots[k].gamma - curve.snapshots[0].gamma;
        rebuilt = std::max(rebuilt, norm_Linf_h(moved - (s.field - gamma0)));
    }
    return {arclength <= 1e-8 && discrepancy <= frozen_tangent_discrepancy &&
                anchored <= frozen_tangent_discrepancy && rebuilt <= frozen_reconstruction_discrepancy,
            "arclength drift " + fmt(arclength) + ", D+gamma vs u " + fmt(discrepancy) + ", anchored curve " +
                fmt(anchored) + ", reconstruction " + fmt(rebuilt)};
}

Outcome check_soliton() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = parse_config("topology = window\nx0 = -20\nM = 512\nh = 0.078125\ninit = soliton:1,0.5\n"
                                  "method = rotation\ndt = cfl:0.25\nT = 1\nstride = 100\nprobes = frenet\n");
    const auto r = run_experiment(cfg);
    const double v = r.summary.peak_speed;
    const double secs = seconds_since(t0);
    return {r.complete && std::abs(v - 1.0) <= 0.1 && secs < 30.0,
            "peak speed " + fmt(v) + " vs 2 tau0 = 1, " + fmt(secs) + " s"};
}

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "identity suite", check_identities},
        {2, "norm bridges", check_norm_bridges},
        {3, "semi-discrete helix", check_helix},
        {4, "great-circle equilibrium", check_great_circle},
        {5, "energy conservation", check_energy},
        {6, "a-priori bounds", check_bounds},
        {7, "reconstruction", check_reconstruction},
        {8, "spatial convergence", check_convergence},
        {9, "stability", check_stability},
        {10, "coupled flow", check_coupled},
        {11, "soliton transport", check_soliton},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.body();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        if (!o.passed) ++failed;
        std::printf("%s #%d %s: %s\n", o.passed ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
