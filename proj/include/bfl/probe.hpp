#pragma once

// Monitored quantities, a-priori bound margins, discrete Frenet data, exact
// semi-discrete solutions and the empirical stability probe.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "bfl/curve.hpp"
#include "bfl/dynamics.hpp"
#include "bfl/integrate.hpp"
#include "bfl/lattice.hpp"
#include "bfl/speed.hpp"

namespace bfl {

// ---------------------------------------------------------------------------
// Monitored quantities

/// h sum_i g_i |D- u_i|^2.
inline double energy(const VectorField& u, const ScalarField& g) {
    require_aligned(u.grid(), g.grid(), "energy");
    const auto dm = dminus(u);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += g[i] * norm2(dm[i]);
    return u.grid().h() * s;
}

/// Predicted d/dt of the energy: h sum (dg_i/dt) |D-u_i|^2, plus, for coupled
/// speeds, the transport term h sum (dgamma_i/dt . grad_gamma g_i) |D-u_i|^2.
inline double energy_rate(const FlowState& s) {
    const auto u = s.tangent_field();
    const auto dm = dminus(u);
    const Grid& grid = s.grid();
    const SpeedField& g = *s.speed;
    double rate = 0.0;
    if (g.flavor() == SpeedFlavor::coupled) {
        const auto gamma = s.curve();
        const auto gs = sample(g, s.t, grid, &gamma);
        const auto vel = curve_rhs(gamma, gs);
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double x = grid.x(i);
            rate += (g.dt(s.t, x, gamma[i]) + dot(vel[i], g.grad_gamma(s.t, x, gamma[i]))) * norm2(dm[i]);
        }
    } else {
        const auto gt = sample_dt(g, s.t, grid);
        for (std::size_t i = 0; i < u.size(); ++i) rate += gt[i] * norm2(dm[i]);
    }
    return grid.h() * rate;
}

/// sqrt(beta/alpha) |D+u^0|_h exp(beta1 t / (2 alpha)).
inline double gradient_bound(const SpeedBounds& b, double grad0, double t) {
    return std::sqrt(b.beta / b.alpha) * grad0 * std::exp(b.beta1 * t / (2.0 * b.alpha));
}

/// Bound minus |D+u(t)|_h; negative means violation.
inline double gradient_bound_margin(const SpeedBounds& b, double grad0, double t, double grad_t) {
    return gradient_bound(b, grad0, t) - grad_t;
}

/// beta times the gradient bound, minus |du/dt|_{H^-1_h}.
inline double dual_bound_margin(const SpeedBounds& b, double grad0, double t, double rhs_dual) {
    return b.beta * gradient_bound(b, grad0, t) - rhs_dual;
}

struct DiagnosticsRecord {
    double t = 0.0;
    double unit_drift = 0.0;
    double energy = 0.0;
    double grad_norm = 0.0;
    double rhs_norm = 0.0;
    double rhs_dual_norm = 0.0;
    double delta_norm = 0.0;
    double grad_margin = 0.0;
    double dual_margin = 0.0;
    double oracle_error = std::numeric_limits<double>::quiet_NaN();
};

/// All monitored quantities of one snapshot. `grad0` is |D+u^0|_h of the run.
inline DiagnosticsRecord diagnose(const FlowState& s, double grad0) {
    const auto u = s.tangent_field();
    const auto g = speed_samples(s);
    const auto lap = delta_g(g, u);
    const auto rhs = cross(u, lap);
    DiagnosticsRecord r;
    r.t = s.t;
    r.unit_drift = unit_drift(u);
    r.energy = energy(u, g);
    r.grad_norm = norm_h(dplus(u));
    r.rhs_norm = norm_h(rhs);
    r.rhs_dual_norm = norm_Hneg1(rhs);
    r.delta_norm = norm_h(lap);
    const auto& b = s.speed->bounds();
    r.grad_margin = gradient_bound_margin(b, grad0, s.t, r.grad_norm);
    r.dual_margin = dual_bound_margin(b, grad0, s.t, r.rhs_dual_norm);
    return r;
}

// ---------------------------------------------------------------------------
// Frenet data

inline constexpr double default_kappa_min = 1e-8;

struct FrenetData {
    ScalarField kappa;            ///< |D+D- gamma_i|
    ScalarField tau;              ///< det(D+g, D2 g, D3 g) / kappa^2, 0 where undefined
    std::vector<bool> tau_valid;  ///< false where kappa < kappa_min
    std::optional<std::string> warning;
};

inline FrenetData frenet(const VectorField& gamma, double kappa_min = default_kappa_min) {
    const auto t1 = dplus(gamma);
    const auto t2 = d2(gamma);
    const auto t3 = d3(gamma);
    std::vector<double> k(gamma.size()), tau(gamma.size(), 0.0);
    std::vector<bool> valid(gamma.size(), false);
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        k[i] = norm(t2[i]);
        if (k[i] >= kappa_min) {
            tau[i] = det(t1[i], t2[i], t3[i]) / (k[i] * k[i]);
            valid[i] = true;
        }
    }
    FrenetData out{ScalarField(gamma.grid(), std::move(k)), ScalarField(gamma.grid(), std::move(tau)),
                   std::move(valid), std::nullopt};
    const double drift = unit_drift(t1);
    if (drift > 1e-3) {
        out.warning = "curve is not arc-length parametrized (| |D+gamma| - 1 | = " + std::to_string(drift) + ")";
    }
    return out;
}

/// Sub-node location of the maximum of a scalar field by a parabola through
/// the largest sample and its neighbours.
inline double peak_location(const ScalarField& f) {
    std::size_t m = 0;
    for (std::size_t i = 1; i < f.size(); ++i) {
        if (f[i] > f[m]) m = i;
    }
    const Grid& g = f.grid();
    const auto im = static_cast<std::ptrdiff_t>(m);
    if (!g.is_periodic() && (m == 0 || m + 1 == f.size())) return g.x(m);
    const double a = f.at(im - 1), b = f.at(im), c = f.at(im + 1);
    const double denom = a - 2.0 * b + c;
    const double shift = denom == 0.0 ? 0.0 : 0.5 * (a - c) / denom;
    return g.x(m) + shift * g.h();
}

// ---------------------------------------------------------------------------
// Exact solutions

/// u_i = (cos k x_i, sin k x_i, 0); Delta u is parallel to u on the lattice.
inline UnitField oracle_great_circle(const Grid& grid, double k = 1.0) {
    return UnitField(VectorField::sample(grid, [k](double x) { return Vec3{std::cos(k * x), std::sin(k * x), 0.0}; }));
}

/// Helix u_i = (sin a cos k x_i, sin a sin k x_i, cos a) with g = 1. On the
/// lattice it precesses rigidly about e3: u(t) has phase k x - omega_h t with
/// omega_h = cos a (2 - 2 cos kh)/h^2. The continuum rate is k^2 cos a.
struct HelixOracle {
    double alpha;
    double k;
    double omega;

    static HelixOracle semi_discrete(const Grid& grid, double alpha, double k) {
        const double h = grid.h();
        return {alpha, k, std::cos(alpha) * (2.0 - 2.0 * std::cos(k * h)) / (h * h)};
    }

    static HelixOracle continuum(double alpha, double k) { return {alpha, k, k * k * std::cos(alpha)}; }

    Vec3 operator()(double t, double x) const {
        const double phase = k * x - omega * t;
        return {std::sin(alpha) * std::cos(phase), std::sin(alpha) * std::sin(phase), std::cos(alpha)};
    }

    UnitField at(const Grid& grid, double t) const {
        return UnitField(VectorField::sample(grid, [&](double x) { return (*this)(t, x); }));
    }
};

inline UnitField oracle_helix(const Grid& grid, double alpha, double k) {
    return HelixOracle::semi_discrete(grid, alpha, k).at(grid, 0.0);
}

/// Closed polygon with unit sides inscribed in a circle, the lattice version of
/// the unit circle: gamma_i = R (cos x_i, sin x_i, 0), R = h / (2 sin(h/2)).
inline VectorField oracle_unit_polygon(const Grid& grid) {
    const double h = grid.h();
    const double radius = h / (2.0 * std::sin(h / 2.0));
    return VectorField::sample(grid, [radius](double x) { return Vec3{radius * std::cos(x), radius * std::sin(x), 0.0}; });
}

namespace detail {

struct FrenetFrame {
    Vec3 p, t, n, b;
};

/// Integrates gamma' = T, T' = k N, N' = -k T + tau B, B' = -tau N from
/// x_start to x_end with classical RK4 at `substeps` per unit of `dx`.
template <typename Kappa, typename Tau>
FrenetFrame march_frenet(FrenetFrame f, double x_start, double x_end, int substeps, Kappa&& kappa, Tau&& tau) {
    const double hstep = (x_end - x_start) / substeps;
    auto rate = [&](double x, const FrenetFrame& s) {
        const double k = kappa(x), w = tau(x);
        return FrenetFrame{s.t, s.n * k, s.t * (-k) + s.b * w, s.n * (-w)};
    };
    auto add = [](const FrenetFrame& a, const FrenetFrame& d, double c) {
        return FrenetFrame{a.p + d.p * c, a.t + d.t * c, a.n + d.n * c, a.b + d.b * c};
    };
    double x = x_start;
    for (int s = 0; s < substeps; ++s) {
        const auto k1 = rate(x, f);
        const auto k2 = rate(x + hstep / 2, add(f, k1, hstep / 2));
        const auto k3 = rate(x + hstep / 2, add(f, k2, hstep / 2));
        const auto k4 = rate(x + hstep, add(f, k3, hstep));
        f = FrenetFrame{f.p + (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p) * (hstep / 6),
                        f.t + (k1.t + 2.0 * k2.t + 2.0 * k3.t + k4.t) * (hstep / 6),
                        f.n + (k1.n + 2.0 * k2.n + 2.0 * k3.n + k4.n) * (hstep / 6),
                        f.b + (k1.b + 2.0 * k2.b + 2.0 * k3.b + k4.b) * (hstep / 6)};
        x += hstep;
    }
    return f;
}

} // namespace detail

/// Curve with prescribed curvature and torsion, integrated from the node
/// nearest x = 0 (frame e1, e2, e3 there) at ten RK4 substeps per cell. The
/// node samples are then joined by unit chords so that |D+gamma| = 1.
template <typename Kappa, typename Tau>
VectorField frenet_curve(const Grid& grid, Kappa&& kappa, Tau&& tau) {
    if (grid.is_periodic()) throw DomainError("Frenet-built curves need a window grid");
    const std::size_t n = grid.size();
    std::size_t c = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs(grid.x(i)) < std::abs(grid.x(c))) c = i;
    }
    std::vector<Vec3> p(n);
    const detail::FrenetFrame start{{}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    detail::FrenetFrame f = start;
    p[c] = f.p;
    for (std::size_t i = c + 1; i < n; ++i) {
        f = detail::march_frenet(f, grid.x(i - 1), grid.x(i), 10, kappa, tau);
        p[i] = f.p;
    }
    f = start;
    for (std::size_t i = c; i-- > 0;) {
        f = detail::march_frenet(f, grid.x(i + 1), grid.x(i), 10, kappa, tau);
        p[i] = f.p;
    }
    std::vector<Vec3> q(n);
    q[c] = p[c];
    for (std::size_t i = c + 1; i < n; ++i) q[i] = q[i - 1] + normalized(p[i] - p[i - 1]) * grid.h();
    for (std::size_t i = c; i-- > 0;) q[i] = q[i + 1] - normalized(p[i + 1] - p[i]) * grid.h();
    return VectorField(grid, std::move(q), Extension::linear);
}

/// Initial curve of the Hasimoto soliton: curvature 2 nu sech(nu x), constant
/// torsion tau0.
inline VectorField oracle_soliton_curve(const Grid& grid, double nu, double tau0) {
    if (grid.is_periodic()) throw DomainError("the soliton curve needs a window grid");
    const double edge = std::min(std::abs(grid.x0()), std::abs(grid.x_end()));
    if (grid.x0() >= 0.0 || grid.x_end() <= 0.0 || 1.0 / std::cosh(nu * edge) >= 1e-8) {
        throw DomainError("window too narrow for the soliton: need sech(nu * edge) < 1e-8 on both sides of x = 0");
    }
    return frenet_curve(
        grid, [nu](double x) { return 2.0 * nu / std::cosh(nu * x); }, [tau0](double) { return tau0; });
}

/// Self-similar profile at t = 1: curvature a, torsion x/2.
inline VectorField self_similar_curve(const Grid& grid, double a) {
    return frenet_curve(grid, [a](double) { return a; }, [](double x) { return x / 2.0; });
}

// ---------------------------------------------------------------------------
// Stability probe

/// Smooth bump supported on the middle half of the grid, along a fixed
/// direction, projected tangent to u.
inline VectorField stability_perturbation(const VectorField& u) {
    const Grid& g = u.grid();
    const double centre = g.x0() + 0.5 * g.length();
    const double width = 0.25 * g.length();
    const Vec3 dir = normalized(Vec3{0.3, -0.5, 0.8});
    std::vector<Vec3> v(u.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = (g.x(i) - centre) / width;
        const double bump = std::abs(r) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - r * r)) : 0.0;
        const Vec3 w = dir * bump;
        v[i] = w - u[i] * dot(w, u[i]);
    }
    return VectorField(g, std::move(v), u.extension());
}

struct StabilityResult {
    double ratio;
    double initial_distance;
    double final_distance;
};

/// ||u(T) - u~(T)||_{H^1_h} / ||u0 - u~0||_{H^1_h} for u~0 = normalize(u0 + eps v).
inline StabilityResult stability_probe(const UnitField& u0, double eps, std::shared_ptr<const SpeedField> g,
                                       double horizon, const IntegratorSpec& spec) {
    if (!(eps > 0.0) || eps > 0.1) throw DomainError("perturbation scale must lie in (0, 0.1]");
    const auto v = stability_perturbation(u0.field());
    std::vector<Vec3> w(u0.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = normalized(u0[i] + v[i] * eps);
    const UnitField perturbed(VectorField(u0.grid(), std::move(w), u0.field().extension()));

    const auto a = evolve(FlowState::tangent(u0, g), horizon, spec, {}, false);
    const auto b = evolve(FlowState::tangent(perturbed, g), horizon, spec, {}, false);
    if (!a.complete || !b.complete) {
        throw DivergenceError("stability probe diverged: " + (a.complete ? b.failure : a.failure),
                              a.complete ? b.failed_step : a.failed_step);
    }
    const double d0 = norm_H1h(u0.field() - perturbed.field());
    const double d1 = norm_H1h(a.final_state.field - b.final_state.field);
    return {d1 / d0, d0, d1};
}

} // namespace bfl
