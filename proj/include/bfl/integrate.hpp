#pragma once

// Explicit time steppers for the semi-discrete flows.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bfl/dynamics.hpp"
#include "bfl/error.hpp"

namespace bfl {

enum class Method {
    rk4,               ///< classical Runge-Kutta
    projected_rk4,     ///< RK4, then renormalize u_i (or the curve segments)
    rotation,          ///< per-node rotations, commutator-free 4th-order Lie group scheme
    rotation_split,    ///< exact per-node rotations in a red-black splitting, 4th-order composition
    rotation_midpoint, ///< rotations about -Delta_g u composed as an explicit midpoint pair
};

inline const char* to_string(Method m) {
    switch (m) {
    case Method::rk4: return "rk4";
    case Method::projected_rk4: return "projected-rk4";
    case Method::rotation: return "rotation";
    case Method::rotation_split: return "rotation-split";
    case Method::rotation_midpoint: return "rotation-midpoint";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "rk4") return Method::rk4;
    if (s == "projected-rk4") return Method::projected_rk4;
    if (s == "rotation") return Method::rotation;
    if (s == "rotation-split") return Method::rotation_split;
    if (s == "rotation-midpoint") return Method::rotation_midpoint;
    throw ConfigError("unknown integrator '" + s +
                      "' (expected rk4|projected-rk4|rotation|rotation-split|rotation-midpoint)");
}

struct DtPolicy {
    enum class Kind { fixed, cfl };
    Kind kind = Kind::cfl;
    double value = 0.25; ///< dt for fixed, safety factor c for cfl (dt = c h^2 / beta)

    static DtPolicy fixed(double dt) { return {Kind::fixed, dt}; }
    static DtPolicy cfl(double c) { return {Kind::cfl, c}; }

    friend bool operator==(const DtPolicy&, const DtPolicy&) = default;
};

struct IntegratorSpec {
    Method method = Method::rotation;
    DtPolicy dt = DtPolicy::cfl(0.25);
    std::size_t snapshot_stride = 1;

    friend bool operator==(const IntegratorSpec&, const IntegratorSpec&) = default;
};

inline void validate(const IntegratorSpec& spec) {
    if (!(spec.dt.value > 0.0)) {
        throw ConfigError("time step / CFL factor must be positive");
    }
    if (spec.dt.kind == DtPolicy::Kind::cfl && spec.dt.value > 1.0) {
        throw ConfigError("CFL safety factor must lie in (0, 1]");
    }
    if (spec.snapshot_stride == 0) {
        throw ConfigError("snapshot stride must be at least 1");
    }
}

/// Step size for a policy. CFL is tied to h^2 / beta, the inverse spectral
/// radius of the stencil.
inline double resolve_dt(const DtPolicy& p, const Grid& grid, const SpeedField& g) {
    if (p.kind == DtPolicy::Kind::fixed) return p.value;
    return p.value * grid.h() * grid.h() / g.bounds().beta;
}

namespace detail {

struct Derivative {
    std::vector<Vec3> field;
    Vec3 anchor{};
};

inline bool tracks_anchor(const FlowState& s) {
    return s.mode == FlowMode::tangent && s.speed->flavor() == SpeedFlavor::coupled;
}

inline Derivative derivative_impl(const FlowState& s) {
    const auto g = speed_samples(s);
    if (s.mode == FlowMode::coupled) {
        const auto r = curve_rhs(s.field, g);
        return {{r.values().begin(), r.values().end()}, {}};
    }
    const auto r = tangent_rhs(s.field, g);
    Derivative d{{r.values().begin(), r.values().end()}, {}};
    if (tracks_anchor(s)) d.anchor = anchor_velocity(s.field, g, s.anchor_node);
    return d;
}

/// Overflow inside the stencils surfaces as a non-finite field entry.
inline Derivative derivative(const FlowState& s) {
    try {
        return derivative_impl(s);
    } catch (const DomainError& e) {
        throw DivergenceError(std::string("right-hand side overflowed: ") + e.what(), -1);
    }
}

inline void check_finite(const std::vector<Vec3>& v, double t) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!is_finite(v[i])) {
            throw DivergenceError("non-finite value at node " + std::to_string(i) + ", t = " + std::to_string(t), -1);
        }
    }
}

/// s + c * d, as a state at time s.t + dt_shift.
inline FlowState offset_state(const FlowState& s, const Derivative& d, double c, double dt_shift) {
    std::vector<Vec3> v(s.field.values().begin(), s.field.values().end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += d.field[i] * c;
    check_finite(v, s.t + dt_shift);
    FlowState out = s;
    out.t = s.t + dt_shift;
    out.field = VectorField(s.grid(), std::move(v), s.field.extension());
    out.anchor_point = s.anchor_point + d.anchor * c;
    return out;
}

inline FlowState rk4_step(const FlowState& s, double dt) {
    const auto k1 = derivative(s);
    const auto k2 = derivative(offset_state(s, k1, dt / 2, dt / 2));
    const auto k3 = derivative(offset_state(s, k2, dt / 2, dt / 2));
    const auto k4 = derivative(offset_state(s, k3, dt, dt));
    Derivative sum{std::vector<Vec3>(s.field.size()), {}};
    for (std::size_t i = 0; i < sum.field.size(); ++i) {
        sum.field[i] = (k1.field[i] + 2.0 * k2.field[i] + 2.0 * k3.field[i] + k4.field[i]) / 6.0;
    }
    sum.anchor = (k1.anchor + 2.0 * k2.anchor + 2.0 * k3.anchor + k4.anchor) / 6.0;
    return offset_state(s, sum, dt, dt);
}

inline FlowState project(const FlowState& s) {
    FlowState out = s;
    if (s.mode == FlowMode::tangent) {
        out.field = UnitField::normalize(s.field).field().with_extension(s.field.extension());
        return out;
    }
    if (s.grid().is_periodic()) {
        throw ConfigError("projected-rk4 cannot renormalize a closed curve; use rk4");
    }
    // Rebuild the curve from the anchor node with unit segments.
    const auto u = UnitField::normalize(dplus(s.field));
    out.field = curve_from_tangent(u.field(), s.anchor_node, s.field[s.anchor_node]);
    return out;
}

/// Rotates every u_i about w_i = -(Delta_g u)_i by |w_i| dt.
inline std::vector<Vec3> rotate_all(const VectorField& base, const VectorField& u, const ScalarField& g, double dt) {
    const auto lap = delta_g(g, u);
    std::vector<Vec3> out(u.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Vec3 w = -lap[i];
        out[i] = rotate(base[i], w, norm(w) * dt);
    }
    return out;
}

inline FlowState rotation_midpoint_step(const FlowState& s, double dt) {
    if (s.mode != FlowMode::tangent) {
        throw ConfigError("the rotation stepper advances tangent fields only; use rk4 for curve states");
    }
    const auto g0 = speed_samples(s);
    auto half = rotate_all(s.field, s.field, g0, dt / 2);
    check_finite(half, s.t + dt / 2);
    FlowState mid = s;
    mid.t = s.t + dt / 2;
    mid.field = VectorField(s.grid(), std::move(half), s.field.extension());
    if (tracks_anchor(s)) mid.anchor_point = s.anchor_point + anchor_velocity(s.field, g0, s.anchor_node) * (dt / 2);

    const auto gm = speed_samples(mid);
    auto next = rotate_all(s.field, mid.field, gm, dt);
    check_finite(next, s.t + dt);
    FlowState out = s;
    out.t = s.t + dt;
    out.field = VectorField(s.grid(), std::move(next), s.field.extension());
    if (tracks_anchor(s)) out.anchor_point = s.anchor_point + anchor_velocity(mid.field, gm, s.anchor_node) * dt;
    return out;
}

// Red-black splitting. With its neighbours frozen, node i obeys
// du_i/dt = b_i ^ u_i, b_i = -(g_{i+1} u_{i+1} + g_i u_{i-1}) / h^2 (the u_i
// part of -Delta_g u_i drops out of the cross product), which is an exact
// rotation about b_i. Nodes of one colour share no neighbours, so a colour
// sweep is the exact flow of its sub-system; every sweep keeps |u_i| = 1 and
// h sum g_i |D-u_i|^2 unchanged.

/// Colour classes: even/odd, plus the last node on its own for odd rings.
inline std::vector<std::vector<std::size_t>> colour_classes(const Grid& grid) {
    const std::size_t n = grid.size();
    std::vector<std::vector<std::size_t>> c(2);
    const bool odd_ring = grid.is_periodic() && n % 2 == 1;
    for (std::size_t i = 0; i < n; ++i) {
        if (odd_ring && i == n - 1) continue;
        c[i % 2].push_back(i);
    }
    if (odd_ring) c.push_back({n - 1});
    return c;
}

inline void sweep_colour(std::vector<Vec3>& u, const Grid& grid, const ScalarField& g,
                         const std::vector<std::size_t>& nodes, double dt) {
    const std::size_t n = u.size();
    const double inv_h2 = 1.0 / (grid.h() * grid.h());
    const bool ring = grid.is_periodic();
    for (const std::size_t i : nodes) {
        Vec3 b{};
        // Window ghosts are copies of the end node itself and drop out.
        if (ring || i + 1 < n) b -= u[(i + 1) % n] * (g.at(static_cast<std::ptrdiff_t>(i) + 1) * inv_h2);
        if (ring || i > 0) b -= u[(i + n - 1) % n] * (g[i] * inv_h2);
        u[i] = rotate(u[i], b, norm(b) * dt);
    }
}

/// Symmetric composition C1(dt/2) ... C_{K-1}(dt/2) C_K(dt) C_{K-1}(dt/2) ... C1(dt/2)
/// with g frozen.
inline void strang_sweeps(std::vector<Vec3>& u, const Grid& grid, const ScalarField& g,
                          const std::vector<std::vector<std::size_t>>& colours, double dt) {
    const std::size_t k = colours.size();
    for (std::size_t c = 0; c + 1 < k; ++c) sweep_colour(u, grid, g, colours[c], dt / 2);
    sweep_colour(u, grid, g, colours[k - 1], dt);
    for (std::size_t c = k - 1; c-- > 0;) sweep_colour(u, grid, g, colours[c], dt / 2);
}

/// One symmetric second-order split step. The speed is frozen at the
/// sub-step midpoint; for curve-dependent speeds the midpoint curve comes from
/// a half-step predictor.
inline FlowState split_step(const FlowState& s, double dt, const std::vector<std::vector<std::size_t>>& colours) {
    const Grid& grid = s.grid();
    FlowState mid = s;
    mid.t = s.t + dt / 2;
    ScalarField g = [&] {
        if (!tracks_anchor(s)) return speed_samples(mid);
        const auto g0 = speed_samples(s);
        std::vector<Vec3> half(s.field.values().begin(), s.field.values().end());
        strang_sweeps(half, grid, g0, colours, dt / 2);
        mid.field = VectorField(grid, std::move(half), s.field.extension());
        mid.anchor_point = s.anchor_point + anchor_velocity(s.field, g0, s.anchor_node) * (dt / 2);
        return speed_samples(mid);
    }();
    std::vector<Vec3> u(s.field.values().begin(), s.field.values().end());
    strang_sweeps(u, grid, g, colours, dt);
    check_finite(u, s.t + dt);
    FlowState out = s;
    out.t = s.t + dt;
    if (tracks_anchor(s)) {
        out.anchor_point = s.anchor_point + anchor_velocity(mid.field, g, s.anchor_node) * dt;
    }
    out.field = VectorField(grid, std::move(u), s.field.extension());
    return out;
}

/// Yoshida's triple jump of the symmetric split step: fourth order.
inline FlowState rotation_split_step(const FlowState& s, double dt) {
    if (s.mode != FlowMode::tangent) {
        throw ConfigError("the rotation stepper advances tangent fields only; use rk4 for curve states");
    }
    const auto colours = colour_classes(s.grid());
    const double cbrt2 = std::cbrt(2.0);
    const double w1 = 1.0 / (2.0 - cbrt2);
    const double w0 = -cbrt2 * w1;
    FlowState a = split_step(s, w1 * dt, colours);
    a = split_step(a, w0 * dt, colours);
    a = split_step(a, w1 * dt, colours);
    a.t = s.t + dt;
    return a;
}

// Commutator-free Lie group method of order four (Celledoni, Marthinsen and
// Owren). Every node moves by du_i/dt = w_i ^ u_i, w_i = -(Delta_g u)_i, so the
// group action is a rotation and each exponential below is one rotation per
// node about a combination of the stage vectors k = dt w.

inline std::vector<Vec3> stage_axes(const FlowState& s, const ScalarField& g, double dt) {
    const auto lap = delta_g(g, s.field);
    std::vector<Vec3> k(lap.size());
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = -lap[i] * dt;
    return k;
}

inline FlowState apply_rotation(const FlowState& base, const std::vector<Vec3>& axes, double t) {
    std::vector<Vec3> out(base.field.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rotate(base.field[i], axes[i], norm(axes[i]));
    check_finite(out, t);
    FlowState r = base;
    r.t = t;
    r.field = VectorField(base.grid(), std::move(out), base.field.extension());
    return r;
}

template <typename... Terms>
std::vector<Vec3> combine_axes(std::size_t n, const Terms&... terms) {
    std::vector<Vec3> out(n);
    for (std::size_t i = 0; i < n; ++i) ((out[i] += terms.second[i] * terms.first), ...);
    return out;
}

inline FlowState rotation_step(const FlowState& s, double dt) {
    if (s.mode != FlowMode::tangent) {
        throw ConfigError("the rotation stepper advances tangent fields only; use rk4 for curve states");
    }
    const bool anchored = tracks_anchor(s);
    const std::size_t n = s.field.size();
    auto with_anchor = [&](FlowState st, const Vec3& p) {
        st.anchor_point = p;
        return st;
    };

    const auto g1 = speed_samples(s);
    const auto k1 = stage_axes(s, g1, dt);
    const Vec3 a1 = anchored ? anchor_velocity(s.field, g1, s.anchor_node) : Vec3{};

    auto y2 = with_anchor(apply_rotation(s, combine_axes(n, std::pair{0.5, k1}), s.t + dt / 2),
                          s.anchor_point + a1 * (dt / 2));
    const auto g2 = speed_samples(y2);
    const auto k2 = stage_axes(y2, g2, dt);
    const Vec3 a2 = anchored ? anchor_velocity(y2.field, g2, s.anchor_node) : Vec3{};

    auto y3 = with_anchor(apply_rotation(s, combine_axes(n, std::pair{0.5, k2}), s.t + dt / 2),
                          s.anchor_point + a2 * (dt / 2));
    const auto g3 = speed_samples(y3);
    const auto k3 = stage_axes(y3, g3, dt);
    const Vec3 a3 = anchored ? anchor_velocity(y3.field, g3, s.anchor_node) : Vec3{};

    auto y4 = with_anchor(apply_rotation(y2, combine_axes(n, std::pair{1.0, k3}, std::pair{-0.5, k1}), s.t + dt),
                          s.anchor_point + a3 * dt);
    const auto g4 = speed_samples(y4);
    const auto k4 = stage_axes(y4, g4, dt);
    const Vec3 a4 = anchored ? anchor_velocity(y4.field, g4, s.anchor_node) : Vec3{};

    const auto late = combine_axes(n, std::pair{-1.0 / 12, k1}, std::pair{1.0 / 6, k2}, std::pair{1.0 / 6, k3},
                                    std::pair{0.25, k4});
    const auto early = combine_axes(n, std::pair{0.25, k1}, std::pair{1.0 / 6, k2}, std::pair{1.0 / 6, k3},
                                     std::pair{-1.0 / 12, k4});
    FlowState out = apply_rotation(apply_rotation(s, early, s.t + dt), late, s.t + dt);
    out.anchor_point = s.anchor_point + (a1 + 2.0 * a2 + 2.0 * a3 + a4) * (dt / 6);
    return out;
}

} // namespace detail

/// Advances the state by dt with the chosen method.
inline FlowState step(const FlowState& s, Method method, double dt) {
    if (!(dt > 0.0) && !(dt < 0.0)) {
        throw DomainError("time step must be non-zero");
    }
    switch (method) {
    case Method::rk4: return detail::rk4_step(s, dt);
    case Method::projected_rk4: return detail::project(detail::rk4_step(s, dt));
    case Method::rotation: return detail::rotation_step(s, dt);
    case Method::rotation_split: return detail::rotation_split_step(s, dt);
    case Method::rotation_midpoint: return detail::rotation_midpoint_step(s, dt);
    }
    throw InternalError("unknown method");
}

using Probe = std::function<void(const FlowState&, std::size_t step_index)>;

struct EvolveResult {
    FlowState final_state;
    std::vector<FlowState> snapshots; ///< every snapshot_stride steps, plus t0 and the final time
    std::size_t steps = 0;
    bool complete = true;
    std::string failure;
    long failed_step = -1;
};

/// Fixed-step march from s.t to `horizon`; the last step is shortened to land
/// on the horizon. Negative horizons (relative to s.t) march backwards.
/// Divergence stops the march and returns a partial result flagged
/// incomplete.
inline EvolveResult evolve(const FlowState& s, double horizon, const IntegratorSpec& spec,
                           const std::vector<Probe>& probes = {}, bool keep_snapshots = true) {
    validate(spec);
    const double span = horizon - s.t;
    if (span == 0.0) {
        throw DomainError("evolve: horizon equals the start time");
    }
    const double dir = span > 0 ? 1.0 : -1.0;
    const double dt = resolve_dt(spec.dt, s.grid(), *s.speed);
    const auto full_steps = static_cast<std::size_t>(std::floor(std::abs(span) / dt * (1.0 + 1e-12)));
    const double remainder = std::abs(span) - static_cast<double>(full_steps) * dt;
    const bool tail = remainder > 1e-12 * dt;
    const std::size_t total = full_steps + (tail ? 1 : 0);

    EvolveResult r{s, {}, 0, true, {}, -1};
    auto snapshot = [&](const FlowState& st, std::size_t k) {
        for (const auto& p : probes) p(st, k);
        if (keep_snapshots) r.snapshots.push_back(st);
    };
    snapshot(s, 0);
    FlowState cur = s;
    for (std::size_t k = 1; k <= total; ++k) {
        const bool last = k == total;
        double h = dt;
        if (last && tail) h = remainder;
        try {
            cur = step(cur, spec.method, dir * h);
        } catch (const DivergenceError& e) {
            r.complete = false;
            r.failure = e.what();
            r.failed_step = static_cast<long>(k);
            r.final_state = cur;
            r.steps = k - 1;
            return r;
        }
        // pin the clock to the step grid so snapshot times do not accumulate rounding
        cur.t = last ? horizon : s.t + dir * static_cast<double>(k) * dt;
        if (last || k % spec.snapshot_stride == 0) snapshot(cur, k);
    }
    r.steps = total;
    r.final_state = cur;
    return r;
}

} // namespace bfl
