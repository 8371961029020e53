#pragma once

// Rebuilding the filament from a tangent trajectory:
//   gamma(t, x) = Gamma_u(t, x) + c_u(t),
//   c_u(t) = int_{x0}^{xa} (u(0) - u(t)) dz + int_0^t g u ^ D-u |_{xa} dtau.

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "bfl/curve.hpp"
#include "bfl/dynamics.hpp"
#include "bfl/error.hpp"
#include "bfl/integrate.hpp"

namespace bfl {

struct TangentSnapshot {
    double t;
    VectorField u;
    ScalarField g; ///< speed samples in force at t
};

class TangentTrajectory {
public:
    explicit TangentTrajectory(std::vector<TangentSnapshot> snaps, double unit_tol = 1e-6)
        : snaps_(std::move(snaps)) {
        if (snaps_.empty()) throw DomainError("empty tangent trajectory");
        for (std::size_t k = 0; k < snaps_.size(); ++k) {
            require_aligned(snaps_[0].u.grid(), snaps_[k].u.grid(), "tangent trajectory");
            require_aligned(snaps_[k].u.grid(), snaps_[k].g.grid(), "tangent trajectory");
            if (k > 0 && !(snaps_[k].t > snaps_[k - 1].t)) {
                throw DomainError("tangent trajectory times must increase strictly");
            }
            if (unit_drift(snaps_[k].u) > unit_tol) {
                throw DomainError("tangent snapshot " + std::to_string(k) + " is not a unit field");
            }
        }
    }

    /// u(t_k) (or D+ gamma for curve runs) and the speed samples of each snapshot.
    static TangentTrajectory from_run(const EvolveResult& run, double unit_tol = 1e-6) {
        std::vector<TangentSnapshot> s;
        s.reserve(run.snapshots.size());
        for (const auto& st : run.snapshots) {
            s.push_back({st.t, st.tangent_field(), speed_samples(st)});
        }
        return TangentTrajectory(std::move(s), unit_tol);
    }

    const Grid& grid() const { return snaps_.front().u.grid(); }
    std::size_t size() const { return snaps_.size(); }
    const TangentSnapshot& operator[](std::size_t k) const { return snaps_[k]; }
    auto begin() const { return snaps_.begin(); }
    auto end() const { return snaps_.end(); }

private:
    std::vector<TangentSnapshot> snaps_;
};

enum class CurveProvenance { reconstructed, direct_coupled };

struct CurveSnapshot {
    double t;
    VectorField gamma;
};

struct CurveTrajectory {
    std::vector<CurveSnapshot> snapshots;
    CurveProvenance provenance = CurveProvenance::reconstructed;
};

/// c(t_k) at one anchor node, with the spatial integral taken from `origin`.
/// The time integral is the trapezoid rule over the stored snapshots.
inline std::vector<Vec3> basepoint_drift(const TangentTrajectory& traj, std::size_t anchor, std::size_t origin) {
    const Grid& grid = traj.grid();
    if (anchor >= grid.size() || origin >= grid.size()) {
        throw DomainError("anchor node outside the grid");
    }
    const Vec3 start = gamma_integral(traj[0].u, origin)[anchor];
    std::vector<Vec3> c(traj.size());
    Vec3 transport{};
    Vec3 prev_rate = anchor_velocity(traj[0].u, traj[0].g, anchor);
    c[0] = Vec3{};
    for (std::size_t k = 1; k < traj.size(); ++k) {
        const Vec3 rate = anchor_velocity(traj[k].u, traj[k].g, anchor);
        transport += (prev_rate + rate) * (0.5 * (traj[k].t - traj[k - 1].t));
        prev_rate = rate;
        c[k] = start - gamma_integral(traj[k].u, origin)[anchor] + transport;
    }
    return c;
}

inline std::vector<Vec3> basepoint_drift(const TangentTrajectory& traj, std::size_t anchor) {
    return basepoint_drift(traj, anchor, default_origin(traj.grid()));
}

/// gamma(t_k) = Gamma(u(t_k)) + c(t_k); the curve sits at the origin at t_0.
inline CurveTrajectory reconstruct_curve(const TangentTrajectory& traj, std::size_t anchor, std::size_t origin) {
    const auto c = basepoint_drift(traj, anchor, origin);
    CurveTrajectory out;
    out.provenance = CurveProvenance::reconstructed;
    out.snapshots.reserve(traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out.snapshots.push_back({traj[k].t, curve_from_tangent(traj[k].u, origin, c[k])});
    }
    return out;
}

inline CurveTrajectory reconstruct_curve(const TangentTrajectory& traj, std::size_t anchor) {
    return reconstruct_curve(traj, anchor, default_origin(traj.grid()));
}

/// Curve snapshots of a direct coupled run.
inline CurveTrajectory curve_trajectory(const EvolveResult& run) {
    CurveTrajectory out;
    out.provenance = CurveProvenance::direct_coupled;
    for (const auto& s : run.snapshots) out.snapshots.push_back({s.t, s.curve()});
    return out;
}

/// max over anchor pairs and snapshots of |c_a(t_k) - c_b(t_k)|. In exact
/// arithmetic and exact time integration the drift does not depend on the
/// anchor; what remains is the time-quadrature and stepping error.
inline double anchor_dispersion(const TangentTrajectory& traj, const std::vector<std::size_t>& anchors) {
    if (anchors.size() < 2) throw DomainError("anchor_dispersion needs at least two anchors");
    const std::size_t origin = default_origin(traj.grid());
    std::vector<std::vector<Vec3>> drifts;
    for (auto a : anchors) drifts.push_back(basepoint_drift(traj, a, origin));
    double worst = 0.0;
    for (std::size_t i = 0; i < drifts.size(); ++i) {
        for (std::size_t j = i + 1; j < drifts.size(); ++j) {
            for (std::size_t k = 0; k < traj.size(); ++k) {
                worst = std::max(worst, norm(drifts[i][k] - drifts[j][k]));
            }
        }
    }
    return worst;
}

} // namespace bfl
