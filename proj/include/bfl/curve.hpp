#pragma once

#include <cstddef>
#include <vector>

#include "bfl/field.hpp"

namespace bfl {

/// Default origin node for spatial integration: the middle node of a window,
/// node 0 of a periodic grid.
inline std::size_t default_origin(const Grid& grid) { return grid.is_periodic() ? 0 : grid.size() / 2; }

/// Gamma_i = h sum_{j=i0}^{i-1} u_j, the exact integral of Q_h u from x_{i0}.
/// Gamma_{i0} = 0 and D+ Gamma = u at every node whose forward neighbour is
/// stored; across the periodic seam this also needs sum_j u_j = 0. The result carries linear extension so that D+ of it is
/// constant-extended, matching u.
inline VectorField gamma_integral(const VectorField& u, std::size_t origin) {
    const std::size_t n = u.size();
    if (origin >= n) {
        throw DomainError("origin node outside the grid");
    }
    const double h = u.grid().h();
    std::vector<Vec3> out(n);
    out[origin] = Vec3{};
    for (std::size_t i = origin + 1; i < n; ++i) {
        out[i] = out[i - 1] + u[i - 1] * h;
    }
    for (std::size_t i = origin; i-- > 0;) {
        out[i] = out[i + 1] - u[i] * h;
    }
    return VectorField(u.grid(), std::move(out), u.grid().is_periodic() ? u.extension() : Extension::linear);
}

inline VectorField gamma_integral(const VectorField& u) { return gamma_integral(u, default_origin(u.grid())); }

/// Rebuilds a curve through `base` at node `origin` from the tangent u.
inline VectorField curve_from_tangent(const VectorField& u, std::size_t origin, const Vec3& base) {
    const auto g = gamma_integral(u, origin);
    std::vector<Vec3> out(g.values().begin(), g.values().end());
    for (auto& p : out) p += base;
    return VectorField(g.grid(), std::move(out), g.extension());
}

} // namespace bfl
