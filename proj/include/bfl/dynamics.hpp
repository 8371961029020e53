#pragma once

// Right-hand sides of the semi-discrete flows:
//   tangent form   du/dt     = u ^ D+(g D- u)           (line and periodic)
//   curve form     dgamma/dt = g D+gamma ^ D+D- gamma   (coupled flow)

#include <algorithm>
#include <cstddef>
#include <memory>
#include <utility>

#include "bfl/curve.hpp"
#include "bfl/field.hpp"
#include "bfl/lattice.hpp"
#include "bfl/speed.hpp"

namespace bfl {

enum class FlowMode { tangent, coupled };

/// Tolerance on | |D+ gamma_i| - 1 | when a curve state is created.
inline constexpr double default_arclength_tolerance = 1e-8;

/// Snapshot of an evolving flow. In tangent mode `field` is u; in coupled mode
/// it is the curve gamma. A tangent state driven by a coupled speed also
/// carries the curve position at `anchor_node`, from which gamma is rebuilt.
struct FlowState {
    double t = 0.0;
    FlowMode mode = FlowMode::tangent;
    VectorField field;
    std::shared_ptr<const SpeedField> speed;
    Vec3 anchor_point{};
    std::size_t anchor_node = 0;

    static FlowState tangent(const UnitField& u, std::shared_ptr<const SpeedField> g, double t0 = 0.0) {
        FlowState s{t0, FlowMode::tangent, u.field(), std::move(g), {}, default_origin(u.grid())};
        if (s.field.grid().is_periodic() == false && s.field.extension() != Extension::constant) {
            s.field = s.field.with_extension(Extension::constant);
        }
        return s;
    }

    /// Tangent state whose curve passes through `base` at node `anchor`.
    static FlowState anchored_tangent(const UnitField& u, std::shared_ptr<const SpeedField> g, std::size_t anchor,
                                      const Vec3& base, double t0 = 0.0) {
        FlowState s = tangent(u, std::move(g), t0);
        s.anchor_node = anchor;
        s.anchor_point = base;
        return s;
    }

    static FlowState coupled(const VectorField& gamma, std::shared_ptr<const SpeedField> g, double t0 = 0.0,
                             double tol = default_arclength_tolerance) {
        VectorField curve = gamma.grid().is_periodic() ? gamma : gamma.with_extension(Extension::linear);
        const double drift = unit_drift(dplus(curve));
        if (drift > tol) {
            throw DomainError("curve is not arc-length parametrized: | |D+gamma| - 1 | = " + std::to_string(drift));
        }
        return FlowState{t0, FlowMode::coupled, std::move(curve), std::move(g), {}, default_origin(gamma.grid())};
    }

    const Grid& grid() const { return field.grid(); }

    /// u: the field itself in tangent mode, D+ gamma in coupled mode.
    VectorField tangent_field() const { return mode == FlowMode::tangent ? field : dplus(field); }

    /// The curve: gamma in coupled mode, the anchored integral of u otherwise.
    VectorField curve() const {
        return mode == FlowMode::coupled ? field : curve_from_tangent(field, anchor_node, anchor_point);
    }
};

/// g_h at the state's time (and curve, for coupled speeds).
inline ScalarField speed_samples(const FlowState& s) {
    if (s.speed->flavor() == SpeedFlavor::coupled) {
        const auto gamma = s.curve();
        return sample(*s.speed, s.t, s.grid(), &gamma);
    }
    return sample(*s.speed, s.t, s.grid());
}

/// u ^ Delta_g u with the given speed samples.
inline VectorField tangent_rhs(const VectorField& u, const ScalarField& g) { return cross(u, delta_g(g, u)); }

inline VectorField rhs_tangent(const FlowState& s) {
    if (s.mode != FlowMode::tangent) {
        throw DomainError("rhs_tangent called on a curve state");
    }
    return tangent_rhs(s.field, speed_samples(s));
}

/// g D+gamma ^ D+D- gamma with the given speed samples.
inline VectorField curve_rhs(const VectorField& gamma, const ScalarField& g) {
    return g * cross(dplus(gamma), d2(gamma));
}

inline VectorField rhs_coupled(const FlowState& s) {
    if (s.mode != FlowMode::coupled) {
        throw DomainError("rhs_coupled called on a tangent state");
    }
    return curve_rhs(s.field, speed_samples(s));
}

/// Velocity of the curve point at the anchor node, g_a u_a ^ D-u_a.
inline Vec3 anchor_velocity(const VectorField& u, const ScalarField& g, std::size_t anchor) {
    const double h = u.grid().h();
    const auto a = static_cast<std::ptrdiff_t>(anchor);
    return cross(u.at(a), (u.at(a) - u.at(a - 1)) / h) * g[anchor];
}

/// max_i | D+(u ^ g D-u) - u ^ D+(g D-u) |, zero up to rounding.
inline double form_equivalence_residual(const VectorField& u, const ScalarField& g) {
    const auto flux = g * dminus(u);
    const auto lhs = dplus(cross(u, flux));
    const auto rhs = cross(u, dplus(flux));
    return norm_Linf_h(lhs - rhs);
}

} // namespace bfl
