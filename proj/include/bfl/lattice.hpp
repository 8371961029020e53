#pragma once

// Shift and difference operators on lattice fields, pointwise algebra, and the
// discrete norms: |.|_h, |.|_{H^1_h}, |.|_{L^inf_h} and the dual |.|_{H^-1_h}.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bfl/error.hpp"
#include "bfl/field.hpp"
#include "bfl/grid.hpp"
#include "bfl/tridiagonal.hpp"
#include "bfl/vec3.hpp"

namespace bfl {

enum class Summation { plain, compensated };

namespace detail {

/// Neumaier's variant of Kahan summation.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

template <typename F>
double accumulate(std::size_t n, Summation mode, F&& term) {
    if (mode == Summation::plain) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += term(i);
        }
        return s;
    }
    CompensatedSum s;
    for (std::size_t i = 0; i < n; ++i) {
        s.add(term(i));
    }
    return s.value();
}

inline Extension combine(Extension a, Extension b) {
    return (a == Extension::zero || b == Extension::zero) ? Extension::zero : b;
}

template <typename T, typename F>
Field<T> generate(const Grid& grid, Extension ext, F&& f) {
    std::vector<T> out(grid.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(static_cast<std::ptrdiff_t>(i));
    }
    return Field<T>(grid, std::move(out), ext);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Shifts and differences

template <typename T>
Field<T> shift_plus(const Field<T>& v) {
    return detail::generate<T>(v.grid(), v.extension(), [&](std::ptrdiff_t i) { return v.at(i + 1); });
}

template <typename T>
Field<T> shift_minus(const Field<T>& v) {
    return detail::generate<T>(v.grid(), v.extension(), [&](std::ptrdiff_t i) { return v.at(i - 1); });
}

/// Forward difference (v_{i+1} - v_i)/h.
template <typename T>
Field<T> dplus(const Field<T>& v) {
    const double h = v.grid().h();
    return detail::generate<T>(v.grid(), differenced(v.extension()),
                               [&](std::ptrdiff_t i) { return (v.at(i + 1) - v.at(i)) / h; });
}

/// Backward difference (v_i - v_{i-1})/h.
template <typename T>
Field<T> dminus(const Field<T>& v) {
    const double h = v.grid().h();
    return detail::generate<T>(v.grid(), differenced(v.extension()),
                               [&](std::ptrdiff_t i) { return (v.at(i) - v.at(i - 1)) / h; });
}

/// D+D- v, evaluated with the three-point stencil.
template <typename T>
Field<T> d2(const Field<T>& v) {
    const double h2 = v.grid().h() * v.grid().h();
    return detail::generate<T>(v.grid(), differenced(differenced(v.extension())), [&](std::ptrdiff_t i) {
        return (v.at(i + 1) - v.at(i) * 2.0 + v.at(i - 1)) / h2;
    });
}

/// D+D-D+ v.
template <typename T>
Field<T> d3(const Field<T>& v) {
    return dplus(dminus(dplus(v)));
}

// ---------------------------------------------------------------------------
// Pointwise algebra

template <typename T>
Field<T> operator+(const Field<T>& a, const Field<T>& b) {
    require_aligned(a.grid(), b.grid(), "field sum");
    return detail::generate<T>(a.grid(), a.extension(), [&](std::ptrdiff_t i) { return a.at(i) + b.at(i); });
}

template <typename T>
Field<T> operator-(const Field<T>& a, const Field<T>& b) {
    require_aligned(a.grid(), b.grid(), "field difference");
    return detail::generate<T>(a.grid(), a.extension(), [&](std::ptrdiff_t i) { return a.at(i) - b.at(i); });
}

template <typename T>
Field<T> operator*(double s, const Field<T>& a) {
    return detail::generate<T>(a.grid(), a.extension(), [&](std::ptrdiff_t i) { return a.at(i) * s; });
}

/// Node-wise scaling g_i v_i.
template <typename T>
Field<T> operator*(const ScalarField& g, const Field<T>& v) {
    require_aligned(g.grid(), v.grid(), "scalar product");
    return detail::generate<T>(v.grid(), detail::combine(g.extension(), v.extension()),
                               [&](std::ptrdiff_t i) { return v.at(i) * g.at(i); });
}

inline VectorField cross(const VectorField& a, const VectorField& b) {
    require_aligned(a.grid(), b.grid(), "cross product");
    return detail::generate<Vec3>(a.grid(), detail::combine(a.extension(), b.extension()),
                                  [&](std::ptrdiff_t i) { return cross(a.at(i), b.at(i)); });
}

template <typename T>
ScalarField dot(const Field<T>& a, const Field<T>& b) {
    require_aligned(a.grid(), b.grid(), "dot product");
    return detail::generate<double>(a.grid(), detail::combine(a.extension(), b.extension()),
                                    [&](std::ptrdiff_t i) { return dot(a.at(i), b.at(i)); });
}

/// Node-wise squared magnitude |v_i|^2.
template <typename T>
ScalarField magnitude2(const Field<T>& v) {
    return detail::generate<double>(v.grid(), v.extension(), [&](std::ptrdiff_t i) { return norm2(v.at(i)); });
}

// ---------------------------------------------------------------------------
// Norms

/// (u, v)_h = h sum_i u_i . v_i over the stored nodes.
template <typename T>
double inner_h(const Field<T>& u, const Field<T>& v, Summation mode = Summation::plain) {
    require_aligned(u.grid(), v.grid(), "inner_h");
    return u.grid().h() * detail::accumulate(u.size(), mode, [&](std::size_t i) { return dot(u[i], v[i]); });
}

template <typename T>
double norm_h(const Field<T>& v, Summation mode = Summation::plain) {
    return std::sqrt(inner_h(v, v, mode));
}

template <typename T>
double norm_H1h(const Field<T>& v, Summation mode = Summation::plain) {
    const double a = inner_h(v, v, mode);
    const auto dv = dplus(v);
    return std::sqrt(a + inner_h(dv, dv, mode));
}

template <typename T>
double norm_Linf_h(const Field<T>& v) {
    double m = 0.0;
    for (const auto& e : v.values()) {
        m = std::max(m, norm(e));
    }
    return m;
}

namespace detail {

/// Solves (I - D+D-) w = rhs for one scalar component.
inline std::vector<double> riesz_solve(const Grid& grid, const std::vector<double>& rhs) {
    const std::size_t n = grid.size();
    const double k = 1.0 / (grid.h() * grid.h());
    std::vector<double> lower(n, -k), diag(n, 1.0 + 2.0 * k), upper(n, -k);
    if (grid.is_periodic()) {
        return solve_cyclic_tridiagonal(lower, diag, upper, rhs);
    }
    // Window ghosts: constant (and linear, whose second difference at the end
    // is not a Dirichlet form) become reflecting rows; zero keeps the full
    // diagonal.
    if (grid.extension() != Extension::zero) {
        diag.front() = 1.0 + k;
        diag.back() = 1.0 + k;
    }
    return solve_tridiagonal(lower, diag, upper, rhs);
}

} // namespace detail

/// Riesz representative w of v in H^1_h, i.e. (I - D+D-) w = v componentwise.
template <typename T>
Field<T> riesz_representative(const Field<T>& v) {
    const Grid& grid = v.grid();
    const Extension ext = grid.is_periodic() || grid.extension() == Extension::zero ? Extension::zero
                                                                                     : Extension::constant;
    constexpr int dims = std::is_same_v<T, Vec3> ? 3 : 1;
    std::vector<T> w(v.size());
    for (int c = 0; c < dims; ++c) {
        std::vector<double> rhs(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            if constexpr (dims == 3) rhs[i] = v[i][c]; else rhs[i] = v[i];
        }
        const auto sol = detail::riesz_solve(grid, rhs);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if constexpr (dims == 3) w[i][c] = sol[i]; else w[i] = sol[i];
        }
    }
    Field<T> wf(grid, std::move(w), grid.is_periodic() ? grid.extension() : ext);

    // Residual check of the solve.
    const auto res = wf - d2(wf) - v.with_extension(wf.extension());
    const double scale = std::max(1.0, norm_Linf_h(v));
    const double r = norm_Linf_h(res);
    if (r > 1e-10 * scale) {
        throw InternalError("H^-1_h Riesz solve residual " + std::to_string(r));
    }
    return wf;
}

/// Dual norm sup_u (v,u)_h / |u|_{H^1_h}, computed as sqrt((v, w)_h) with w the
/// Riesz representative.
template <typename T>
double norm_Hneg1(const Field<T>& v) {
    const auto w = riesz_representative(v);
    return std::sqrt(std::max(0.0, inner_h(v, w)));
}

// ---------------------------------------------------------------------------
// Weighted Laplacian

inline void require_positive(const ScalarField& g) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(g[i] > 0.0)) {
            throw CoefficientBoundError("speed sample g_" + std::to_string(i) + " = " + std::to_string(g[i]) +
                                        " is not positive");
        }
    }
}

/// Delta_g v = D+(g D- v), the conservative discrete (g v')'.
template <typename T>
Field<T> delta_g(const ScalarField& g, const Field<T>& v) {
    require_aligned(g.grid(), v.grid(), "delta_g");
    require_positive(g);
    return dplus(g * dminus(v));
}

/// The same operator through the other factorization, D-(tau+g D+ v).
template <typename T>
Field<T> delta_g_shifted(const ScalarField& g, const Field<T>& v) {
    require_aligned(g.grid(), v.grid(), "delta_g");
    require_positive(g);
    return dminus(shift_plus(g) * dplus(v));
}

} // namespace bfl
