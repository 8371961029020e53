#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bfl/error.hpp"

namespace bfl {

/// Thomas algorithm for a tridiagonal system with sub-diagonal `lower`
/// (lower[0] unused), diagonal `diag` and super-diagonal `upper`
/// (upper[n-1] unused). No pivoting; the callers only pass diagonally
/// dominant matrices.
inline std::vector<double> solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                                             std::span<const double> upper, std::span<const double> rhs) {
    const std::size_t n = diag.size();
    if (lower.size() != n || upper.size() != n || rhs.size() != n || n == 0) {
        throw InternalError("tridiagonal solve: inconsistent sizes");
    }
    std::vector<double> c_prime(n);
    std::vector<double> x(n);
    double denom = diag[0];
    if (denom == 0.0) {
        throw InternalError("tridiagonal solve: zero pivot");
    }
    c_prime[0] = upper[0] / denom;
    x[0] = rhs[0] / denom;
    for (std::size_t i = 1; i < n; ++i) {
        denom = diag[i] - lower[i] * c_prime[i - 1];
        if (denom == 0.0) {
            throw InternalError("tridiagonal solve: zero pivot");
        }
        c_prime[i] = i + 1 < n ? upper[i] / denom : 0.0;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i > 0; --i) {
        x[i - 1] -= c_prime[i - 1] * x[i];
    }
    return x;
}

/// Cyclic tridiagonal solve: as above, plus corner entries A[0][n-1] = lower[0]
/// and A[n-1][0] = upper[n-1]. Sherman-Morrison on top of two Thomas sweeps.
inline std::vector<double> solve_cyclic_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                                                    std::span<const double> upper, std::span<const double> rhs) {
    const std::size_t n = diag.size();
    if (n < 3) {
        throw InternalError("cyclic tridiagonal solve needs n >= 3");
    }
    const double alpha = upper[n - 1]; // bottom-left corner
    const double beta = lower[0];      // top-right corner
    const double gamma = -diag[0];

    std::vector<double> b(diag.begin(), diag.end());
    b[0] -= gamma;
    b[n - 1] -= alpha * beta / gamma;

    std::vector<double> lo(lower.begin(), lower.end());
    std::vector<double> up(upper.begin(), upper.end());
    lo[0] = 0.0;
    up[n - 1] = 0.0;

    auto x = solve_tridiagonal(lo, b, up, rhs);

    std::vector<double> u(n, 0.0);
    u[0] = gamma;
    u[n - 1] = alpha;
    auto z = solve_tridiagonal(lo, b, up, u);

    const double fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] -= fact * z[i];
    }
    return x;
}

} // namespace bfl
