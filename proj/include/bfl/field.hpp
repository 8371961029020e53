#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bfl/error.hpp"
#include "bfl/grid.hpp"
#include "bfl/vec3.hpp"

namespace bfl {

/// Values of type T (double or Vec3) attached to the nodes of a Grid, plus the
/// ghost policy used when a stencil reaches past a window end.
template <typename T>
class Field {
public:
    using value_type = T;

    Field(Grid grid, std::vector<T> values) : Field(grid, std::move(values), grid.extension()) {}

    Field(Grid grid, std::vector<T> values, Extension ext)
        : grid_(std::move(grid)), values_(std::move(values)), ext_(ext) {
        if (values_.size() != grid_.size()) {
            throw AlignmentError("field has " + std::to_string(values_.size()) + " values for a grid of " +
                                 std::to_string(grid_.size()) + " nodes");
        }
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!is_finite(values_[i])) {
                throw DomainError("non-finite field entry at node " + std::to_string(i));
            }
        }
    }

    static Field filled(const Grid& grid, const T& value) {
        return Field(grid, std::vector<T>(grid.size(), value));
    }

    /// Samples f(x_i) at every node.
    template <typename F>
    static Field sample(const Grid& grid, F&& f) {
        std::vector<T> v(grid.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = f(grid.x(i));
        }
        return Field(grid, std::move(v));
    }

    const Grid& grid() const { return grid_; }
    Extension extension() const { return ext_; }
    std::size_t size() const { return values_.size(); }
    std::span<const T> values() const { return values_; }
    const T& operator[](std::size_t i) const { return values_[i]; }

    /// Node value with cyclic indexing (periodic) or one ghost layer (window).
    T at(std::ptrdiff_t i) const {
        const auto n = static_cast<std::ptrdiff_t>(values_.size());
        if (i >= 0 && i < n) {
            return values_[static_cast<std::size_t>(i)];
        }
        if (grid_.is_periodic()) {
            return values_[static_cast<std::size_t>(((i % n) + n) % n)];
        }
        if (i == -1) {
            switch (ext_) {
            case Extension::constant: return values_.front();
            case Extension::linear: return values_[0] * 2.0 - values_[1];
            case Extension::zero: return T{};
            }
        }
        if (i == n) {
            switch (ext_) {
            case Extension::constant: return values_.back();
            case Extension::linear: return values_[values_.size() - 1] * 2.0 - values_[values_.size() - 2];
            case Extension::zero: return T{};
            }
        }
        throw InternalError("ghost index " + std::to_string(i) + " beyond the single ghost layer");
    }

    Field with_extension(Extension ext) const { return Field(grid_, values_, ext); }

    friend bool operator==(const Field&, const Field&) = default;

private:
    Grid grid_;
    std::vector<T> values_;
    Extension ext_;
};

using ScalarField = Field<double>;
using VectorField = Field<Vec3>;

inline constexpr double default_unit_tolerance = 1e-12;

/// Largest deviation | |v_i| - 1 | over the nodes.
inline double unit_drift(const VectorField& v) {
    double worst = 0.0;
    for (const auto& e : v.values()) {
        worst = std::max(worst, std::abs(norm(e) - 1.0));
    }
    return worst;
}

/// A vector field whose entries lie on the unit sphere.
class UnitField {
public:
    explicit UnitField(VectorField f, double tol = default_unit_tolerance) : field_(std::move(f)) {
        const double drift = unit_drift(field_);
        if (drift > tol) {
            throw DomainError("unit field deviates from |u| = 1 by " + std::to_string(drift));
        }
    }

    /// Normalizes every entry; zero vectors are rejected.
    static UnitField normalize(const VectorField& f) {
        std::vector<Vec3> v(f.values().begin(), f.values().end());
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double n = norm(v[i]);
            if (n == 0.0) {
                throw DomainError("cannot normalize zero vector at node " + std::to_string(i));
            }
            v[i] /= n;
        }
        return UnitField(VectorField(f.grid(), std::move(v), f.extension()));
    }

    const VectorField& field() const { return field_; }
    operator const VectorField&() const { return field_; }
    const Grid& grid() const { return field_.grid(); }
    std::size_t size() const { return field_.size(); }
    const Vec3& operator[](std::size_t i) const { return field_[i]; }

private:
    VectorField field_;
};

} // namespace bfl
