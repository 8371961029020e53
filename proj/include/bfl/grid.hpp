#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "bfl/error.hpp"

namespace bfl {

enum class Topology { periodic, window };

/// How a window field supplies its single ghost value beyond each end.
///
/// constant: v_{-1} = v_0, v_{M+1} = v_M (the default for tangent fields).
/// linear:   v_{-1} = 2v_0 - v_1 (used for curves, so that D+ of the curve is
///           constant-extended).
/// zero:     ghosts vanish; this is what differences of a constant-extended
///           field look like beyond the window.
enum class Extension { constant, linear, zero };

/// Extension carried by D+/D- of a field with extension `e`.
constexpr Extension differenced(Extension e) {
    return e == Extension::linear ? Extension::constant : Extension::zero;
}

/// A uniform 1-D lattice: either a periodic ring of N nodes with period l, or
/// a window of M+1 nodes x_i = x0 + i h.
class Grid {
public:
    static Grid periodic(double period, std::size_t nodes, double x0 = 0.0) {
        if (nodes < 3) {
            throw DomainError("periodic grid needs N >= 3 nodes");
        }
        if (!(period > 0.0) || !std::isfinite(period)) {
            throw DomainError("periodic grid needs a positive period");
        }
        Grid g;
        g.topology_ = Topology::periodic;
        g.period_ = period;
        g.nodes_ = nodes;
        g.h_ = period / static_cast<double>(nodes);
        g.x0_ = x0;
        return g;
    }

    /// Window with M+1 nodes (M cells).
    static Grid window(double x0, std::size_t cells, double h, Extension ext = Extension::constant) {
        if (cells < 4) {
            throw DomainError("window grid needs M >= 4 cells");
        }
        if (!(h > 0.0) || !std::isfinite(h)) {
            throw DomainError("grid spacing must be positive");
        }
        Grid g;
        g.topology_ = Topology::window;
        g.nodes_ = cells + 1;
        g.h_ = h;
        g.x0_ = x0;
        g.period_ = h * static_cast<double>(cells);
        g.extension_ = ext;
        return g;
    }

    Topology topology() const { return topology_; }
    bool is_periodic() const { return topology_ == Topology::periodic; }
    double h() const { return h_; }
    double x0() const { return x0_; }
    /// Number of stored nodes: N (periodic) or M+1 (window).
    std::size_t size() const { return nodes_; }
    /// Number of interpolation cells: N (periodic) or M (window).
    std::size_t cells() const { return is_periodic() ? nodes_ : nodes_ - 1; }
    /// Period l for periodic grids, window length M h otherwise.
    double length() const { return period_; }
    Extension extension() const { return extension_; }

    double x(std::size_t i) const { return x0_ + static_cast<double>(i) * h_; }
    double x_end() const { return x0_ + static_cast<double>(cells()) * h_; }

    /// Index of the node nearest to `x` (wrapping for periodic grids).
    std::size_t nearest_node(double x) const {
        double s = (x - x0_) / h_;
        if (is_periodic()) {
            s = std::fmod(s, static_cast<double>(nodes_));
            if (s < 0) s += static_cast<double>(nodes_);
            auto i = static_cast<std::size_t>(std::llround(s));
            return i % nodes_;
        }
        if (s < -0.5 || s > static_cast<double>(nodes_ - 1) + 0.5) {
            throw DomainError("coordinate outside the window");
        }
        return static_cast<std::size_t>(std::llround(std::max(0.0, s)));
    }

    Grid with_extension(Extension ext) const {
        Grid g = *this;
        g.extension_ = ext;
        return g;
    }

    /// Grids are aligned when they describe the same nodes; the ghost policy
    /// is a property of the field, not of alignment.
    bool aligned_with(const Grid& o) const {
        return topology_ == o.topology_ && nodes_ == o.nodes_ && h_ == o.h_ && x0_ == o.x0_;
    }

    friend bool operator==(const Grid&, const Grid&) = default;

    std::string describe() const {
        if (is_periodic()) {
            return "periodic(l=" + std::to_string(period_) + ", N=" + std::to_string(nodes_) + ")";
        }
        return "window(x0=" + std::to_string(x0_) + ", M=" + std::to_string(nodes_ - 1) +
               ", h=" + std::to_string(h_) + ")";
    }

private:
    Grid() = default;

    Topology topology_ = Topology::periodic;
    double h_ = 1.0;
    double x0_ = 0.0;
    double period_ = 1.0;
    std::size_t nodes_ = 0;
    Extension extension_ = Extension::constant;
};

inline void require_aligned(const Grid& a, const Grid& b, const char* where) {
    if (!a.aligned_with(b)) {
        throw AlignmentError(std::string(where) + ": fields live on different grids (" + a.describe() +
                             " vs " + b.describe() + ")");
    }
}

} // namespace bfl
