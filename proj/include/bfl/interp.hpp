#pragma once

// Piecewise-linear (P_h) and piecewise-constant (Q_h) lifts of lattice fields,
// and the exact lattice/continuum norm bridges they satisfy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "bfl/error.hpp"
#include "bfl/field.hpp"
#include "bfl/lattice.hpp"

namespace bfl {

enum class InterpolantKind { piecewise_linear, piecewise_constant };

template <typename T>
class InterpolantView {
public:
    InterpolantView(const Field<T>& base, InterpolantKind kind) : base_(&base), kind_(kind) {}

    InterpolantKind kind() const { return kind_; }
    const Field<T>& base() const { return *base_; }

    /// Value at x. Periodic grids wrap; windows accept [x0, x_M].
    T operator()(double x) const {
        const Grid& g = base_->grid();
        double s = (x - g.x0()) / g.h();
        const auto n = static_cast<double>(g.size());
        if (g.is_periodic()) {
            s = std::fmod(s, n);
            if (s < 0.0) s += n;
        } else {
            // tolerate rounding in the coordinate arithmetic at the two ends
            const double slack = 1e-12 * std::max(1.0, n);
            if (s < -slack || s > n - 1.0 + slack) throw DomainError("interpolant evaluated outside the window");
            s = std::clamp(s, 0.0, n - 1.0);
        }
        auto i = static_cast<std::ptrdiff_t>(std::floor(s));
        double frac = s - static_cast<double>(i);
        if (!g.is_periodic() && i == static_cast<std::ptrdiff_t>(g.size()) - 1) {
            // right end node x_M
            return (*base_)[static_cast<std::size_t>(i)];
        }
        const T left = base_->at(i);
        if (kind_ == InterpolantKind::piecewise_constant || frac == 0.0) {
            return left;
        }
        return left + (base_->at(i + 1) - left) * frac;
    }

    /// Value at x_c + frac h for frac in [0, 1], taking the left limit at the
    /// right end of the cell (the constant lift keeps the left node value).
    T in_cell(std::size_t c, double frac) const {
        const auto i = static_cast<std::ptrdiff_t>(c);
        const T left = base_->at(i);
        if (kind_ == InterpolantKind::piecewise_constant) return left;
        return left + (base_->at(i + 1) - left) * frac;
    }

private:
    const Field<T>* base_;
    InterpolantKind kind_;
};

template <typename T>
InterpolantView<T> linear_interpolant(const Field<T>& v) {
    return {v, InterpolantKind::piecewise_linear};
}

template <typename T>
InterpolantView<T> constant_interpolant(const Field<T>& v) {
    return {v, InterpolantKind::piecewise_constant};
}

/// ||P_h v||_{L^2}, integrated exactly cell by cell over the grid's cells.
template <typename T>
double l2_norm_P(const Field<T>& v) {
    const std::size_t cells = v.grid().cells();
    const double h = v.grid().h();
    double s = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        const T a = v.at(static_cast<std::ptrdiff_t>(i));
        const T b = v.at(static_cast<std::ptrdiff_t>(i) + 1);
        s += (h / 3.0) * (norm2(a) + dot(a, b) + norm2(b));
    }
    return std::sqrt(s);
}

/// ||P_h v - Q_h v||_{L^2} = (h / sqrt 3) |D+ v| over the cells.
template <typename T>
double pq_gap(const Field<T>& v) {
    const std::size_t cells = v.grid().cells();
    const double h = v.grid().h();
    const auto dv = dplus(v);
    double s = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        s += norm2(dv[i]);
    }
    return h / std::sqrt(3.0) * std::sqrt(h * s);
}

/// ||A - B||_{L^2} over the grid's cells by composite Simpson quadrature with
/// `panels` (even) sub-intervals per cell. Exact for piecewise cubics.
template <typename T>
double l2_distance_quadrature(const InterpolantView<T>& a, const InterpolantView<T>& b, int panels = 10) {
    const Grid& g = a.base().grid();
    require_aligned(g, b.base().grid(), "l2_distance_quadrature");
    if (panels < 2 || panels % 2 != 0) {
        throw DomainError("Simpson quadrature needs an even panel count");
    }
    const double h = g.h();
    const double dx = h / panels;
    double total = 0.0;
    for (std::size_t c = 0; c < g.cells(); ++c) {
        double cell = 0.0;
        for (int k = 0; k <= panels; ++k) {
            const double frac = static_cast<double>(k) / panels;
            const double w = (k == 0 || k == panels) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
            cell += w * norm2(a.in_cell(c, frac) - b.in_cell(c, frac));
        }
        total += cell * dx / 3.0;
    }
    return std::sqrt(total);
}

/// sup |P_h v| equals the largest node magnitude.
template <typename T>
double sup_norm_P(const Field<T>& v) {
    return norm_Linf_h(v);
}

/// Restriction of a field to a coarser grid whose nodes are a subset of the
/// fine grid's nodes.
template <typename T>
Field<T> resample(const Field<T>& fine, const Grid& coarse) {
    const Grid& g = fine.grid();
    if (g.topology() != coarse.topology()) {
        throw AlignmentError("resample: topologies differ");
    }
    const double ratio = coarse.h() / g.h();
    const auto r = static_cast<std::size_t>(std::llround(ratio));
    if (r == 0 || std::abs(ratio - static_cast<double>(r)) > 1e-9 * ratio) {
        throw AlignmentError("resample: coarse spacing is not a multiple of the fine spacing");
    }
    const double shift = (coarse.x0() - g.x0()) / g.h();
    const auto off = static_cast<long long>(std::llround(shift));
    if (std::abs(shift - static_cast<double>(off)) > 1e-9 * std::max(1.0, std::abs(shift))) {
        throw AlignmentError("resample: coarse origin is not a fine node");
    }
    if (g.is_periodic()) {
        if (std::abs(coarse.length() - g.length()) > 1e-12 * g.length()) {
            throw AlignmentError("resample: periods differ");
        }
    } else if (off < 0 || static_cast<std::size_t>(off) + r * (coarse.size() - 1) >= g.size()) {
        throw AlignmentError("resample: coarse window extends past the fine window");
    }
    std::vector<T> out(coarse.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = fine.at(static_cast<std::ptrdiff_t>(off + static_cast<long long>(r * i)));
    }
    return Field<T>(coarse, std::move(out), fine.extension());
}

} // namespace bfl
