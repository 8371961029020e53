#pragma once

// The speed coefficient g(t, x, gamma) with caller-declared bounds, node
// sampling, and a dense spot-check of the declared bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bfl/error.hpp"
#include "bfl/field.hpp"
#include "bfl/grid.hpp"
#include "bfl/vec3.hpp"

namespace bfl {

enum class SpeedFlavor { constant, space_only, space_time, coupled };

/// Where g is sampled relative to node x_i. g_i weights D-u_i, which is
/// centred at x_i - h/2, so `midpoint` samples there.
enum class SamplingOffset { node, midpoint };

inline const char* to_string(SamplingOffset o) { return o == SamplingOffset::node ? "node" : "mid"; }

inline SamplingOffset parse_offset(const std::string& s) {
    if (s == "node" || s == "0") return SamplingOffset::node;
    if (s == "mid" || s == "midpoint" || s == "h/2") return SamplingOffset::midpoint;
    throw ConfigError("unknown sampling offset '" + s + "' (expected node|mid)");
}

/// alpha <= g <= beta, |dg/dt| <= beta1, |dg/dx|, |grad_gamma g| <= beta_prime.
/// Higher-derivative bounds are recorded on declaration and never checked.
struct SpeedBounds {
    double alpha = 1.0;
    double beta = 1.0;
    double beta1 = 0.0;
    double beta_prime = 0.0;
    double beta2 = 0.0;
    double beta3 = 0.0;

    friend bool operator==(const SpeedBounds&, const SpeedBounds&) = default;
};

using SpeedFunction = std::function<double(double t, double x, const Vec3& gamma)>;
using SpeedGradient = std::function<Vec3(double t, double x, const Vec3& gamma)>;

class SpeedField {
public:
    static SpeedField constant(double c) {
        if (!(c > 0.0)) throw CoefficientBoundError("constant speed must be positive");
        SpeedField g(SpeedFlavor::constant, [c](double, double, const Vec3&) { return c; },
                     SpeedBounds{c, c, 0.0, 0.0, 0.0, 0.0});
        g.dt_ = [](double, double, const Vec3&) { return 0.0; };
        g.dx_ = g.dt_;
        g.grad_ = [](double, double, const Vec3&) { return Vec3{}; };
        g.name_ = "const:" + format_number(c);
        return g;
    }

    static SpeedField space_only(std::function<double(double)> f, SpeedBounds b) {
        SpeedField g(SpeedFlavor::space_only, [f](double, double x, const Vec3&) { return f(x); }, b);
        g.dt_ = [](double, double, const Vec3&) { return 0.0; };
        g.grad_ = [](double, double, const Vec3&) { return Vec3{}; };
        return g;
    }

    static SpeedField space_time(std::function<double(double, double)> f, SpeedBounds b) {
        SpeedField g(SpeedFlavor::space_time, [f](double t, double x, const Vec3&) { return f(t, x); }, b);
        g.grad_ = [](double, double, const Vec3&) { return Vec3{}; };
        return g;
    }

    static SpeedField coupled(SpeedFunction f, SpeedBounds b) {
        return SpeedField(SpeedFlavor::coupled, std::move(f), b);
    }

    /// Built-in library: "const:c", "sin:a,b,k" (a + b sin kx),
    /// "sintime:a,b,k,w" (a + b sin(kx) cos(wt)), "coupled-tanh:a,b"
    /// (a + b tanh |gamma|^2). Bounds are derived from the parameters.
    static SpeedField parse(const std::string& spec) {
        const auto colon = spec.find(':');
        const std::string kind = spec.substr(0, colon);
        std::vector<double> p;
        if (colon != std::string::npos) {
            std::stringstream ss(spec.substr(colon + 1));
            std::string item;
            while (std::getline(ss, item, ',')) {
                try {
                    std::size_t used = 0;
                    p.push_back(std::stod(item, &used));
                    if (used != item.size()) throw std::invalid_argument(item);
                } catch (const std::exception&) {
                    throw ConfigError("bad number '" + item + "' in speed '" + spec + "'");
                }
            }
        }
        auto need = [&](std::size_t n) {
            if (p.size() != n) {
                throw ConfigError("speed '" + spec + "' expects " + std::to_string(n) + " parameters");
            }
        };
        SpeedField g = [&] {
            if (kind == "const") {
                need(1);
                return constant(p[0]);
            }
            if (kind == "sin") {
                need(3);
                const double a = p[0], b = p[1], k = p[2];
                check_positive_band(a, b, spec);
                SpeedField s = space_only([=](double x) { return a + b * std::sin(k * x); },
                                          SpeedBounds{a - std::abs(b), a + std::abs(b), 0.0, std::abs(b * k)});
                s.dx_ = [=](double, double x, const Vec3&) { return b * k * std::cos(k * x); };
                return s;
            }
            if (kind == "sintime") {
                need(4);
                const double a = p[0], b = p[1], k = p[2], w = p[3];
                check_positive_band(a, b, spec);
                SpeedField s = space_time([=](double t, double x) { return a + b * std::sin(k * x) * std::cos(w * t); },
                                          SpeedBounds{a - std::abs(b), a + std::abs(b), std::abs(b * w),
                                                      std::abs(b * k)});
                s.dt_ = [=](double t, double x, const Vec3&) { return -b * w * std::sin(k * x) * std::sin(w * t); };
                s.dx_ = [=](double t, double x, const Vec3&) { return b * k * std::cos(k * x) * std::cos(w * t); };
                return s;
            }
            if (kind == "coupled-tanh") {
                need(2);
                const double a = p[0], b = p[1];
                const double lo = std::min(a, a + b);
                if (!(lo > 0.0)) throw ConfigError("speed '" + spec + "' is not bounded below by a positive constant");
                // sup over r of |d/dr tanh(r^2)| = 2r sech^2(r^2), located by a scan.
                double slope = 0.0;
                for (int i = 1; i <= 4000; ++i) {
                    const double r = 1e-3 * i;
                    const double s = 1.0 / std::cosh(r * r);
                    slope = std::max(slope, 2.0 * r * s * s);
                }
                SpeedField s = coupled([=](double, double, const Vec3& y) { return a + b * std::tanh(norm2(y)); },
                                       SpeedBounds{lo, std::max(a, a + b), 0.0, std::abs(b) * slope});
                s.dt_ = [](double, double, const Vec3&) { return 0.0; };
                s.grad_ = [=](double, double, const Vec3& y) {
                    const double c = 1.0 / std::cosh(norm2(y));
                    return y * (2.0 * b * c * c);
                };
                return s;
            }
            throw ConfigError("unknown speed '" + spec + "'");
        }();
        g.name_ = spec;
        return g;
    }

    SpeedFlavor flavor() const { return flavor_; }
    const SpeedBounds& bounds() const { return bounds_; }
    SamplingOffset offset() const { return offset_; }
    /// Selector string when built from the library, empty otherwise.
    const std::string& name() const { return name_; }

    SpeedField with_offset(SamplingOffset o) const {
        SpeedField g = *this;
        g.offset_ = o;
        return g;
    }

    SpeedField with_bounds(SpeedBounds b) const {
        SpeedField g = *this;
        g.bounds_ = b;
        return g;
    }

    double operator()(double t, double x, const Vec3& gamma = {}) const { return f_(t, x, gamma); }

    /// dg/dt, analytic for built-ins, central difference otherwise.
    double dt(double t, double x, const Vec3& gamma = {}) const {
        if (dt_) return dt_(t, x, gamma);
        const double d = 1e-6 * std::max(1.0, std::abs(t));
        return (f_(t + d, x, gamma) - f_(t - d, x, gamma)) / (2.0 * d);
    }

    double dx(double t, double x, const Vec3& gamma = {}) const {
        if (dx_) return dx_(t, x, gamma);
        if (flavor_ == SpeedFlavor::coupled || flavor_ == SpeedFlavor::constant) return 0.0;
        const double d = 1e-6 * std::max(1.0, std::abs(x));
        return (f_(t, x + d, gamma) - f_(t, x - d, gamma)) / (2.0 * d);
    }

    Vec3 grad_gamma(double t, double x, const Vec3& gamma) const {
        if (grad_) return grad_(t, x, gamma);
        Vec3 out;
        for (int k = 0; k < 3; ++k) {
            const double d = 1e-6 * std::max(1.0, std::abs(gamma[k]));
            Vec3 p = gamma, m = gamma;
            p[k] += d;
            m[k] -= d;
            out[k] = (f_(t, x, p) - f_(t, x, m)) / (2.0 * d);
        }
        return out;
    }

    /// Point at which node i is sampled.
    double sample_point(const Grid& grid, std::size_t i) const {
        if (flavor_ == SpeedFlavor::coupled || offset_ == SamplingOffset::node) return grid.x(i);
        return grid.x(i) - 0.5 * grid.h();
    }

    static std::string format_number(double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    }

private:
    SpeedField(SpeedFlavor flavor, SpeedFunction f, SpeedBounds b)
        : flavor_(flavor), f_(std::move(f)), bounds_(b) {
        if (!(b.alpha > 0.0) || b.beta < b.alpha) {
            throw CoefficientBoundError("speed bounds need 0 < alpha <= beta");
        }
    }

    static void check_positive_band(double a, double b, const std::string& spec) {
        if (!(a - std::abs(b) > 0.0)) {
            throw ConfigError("speed '" + spec + "' is not bounded below by a positive constant");
        }
    }

    SpeedFlavor flavor_;
    SpeedFunction f_;
    SpeedBounds bounds_;
    SamplingOffset offset_ = SamplingOffset::node;
    std::function<double(double, double, const Vec3&)> dt_;
    std::function<double(double, double, const Vec3&)> dx_;
    SpeedGradient grad_;
    std::string name_;
};

namespace detail {
inline double bound_slack(const SpeedBounds& b) { return 1e-12 * std::max(1.0, b.beta); }
} // namespace detail

/// g_h = { g(t, x_i [+ offset], gamma_i) }, validated against [alpha, beta].
/// `gamma` is required exactly when the flavor is coupled.
inline ScalarField sample(const SpeedField& g, double t, const Grid& grid, const VectorField* gamma = nullptr) {
    const bool coupled = g.flavor() == SpeedFlavor::coupled;
    if (coupled && gamma == nullptr) {
        throw CoefficientBoundError("coupled speed needs the curve gamma to be sampled");
    }
    if (!coupled && gamma != nullptr) {
        throw CoefficientBoundError("curve supplied to a speed that does not depend on it");
    }
    if (gamma) require_aligned(grid, gamma->grid(), "speed sample");
    const auto& b = g.bounds();
    const double slack = detail::bound_slack(b);
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = g.sample_point(grid, i);
        v[i] = g(t, x, gamma ? (*gamma)[i] : Vec3{});
        if (!(v[i] >= b.alpha - slack && v[i] <= b.beta + slack)) {
            throw CoefficientBoundError("speed sample g(" + std::to_string(t) + ", x_" + std::to_string(i) + " = " +
                                        std::to_string(x) + ") = " + std::to_string(v[i]) +
                                        " outside [alpha, beta] = [" + std::to_string(b.alpha) + ", " +
                                        std::to_string(b.beta) + "]");
        }
    }
    return ScalarField(grid, std::move(v));
}

/// Node samples of dg/dt at the same points as `sample`.
inline ScalarField sample_dt(const SpeedField& g, double t, const Grid& grid, const VectorField* gamma = nullptr) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = g.dt(t, g.sample_point(grid, i), gamma ? (*gamma)[i] : Vec3{});
    }
    return ScalarField(grid, std::move(v));
}

struct BoundsReport {
    bool passed = true;
    double lower_margin = std::numeric_limits<double>::infinity(); ///< min g - alpha
    double upper_margin = std::numeric_limits<double>::infinity(); ///< beta - max g
    double dt_margin = std::numeric_limits<double>::infinity();    ///< 1.05 beta1 - max |dg/dt|
    double dx_margin = std::numeric_limits<double>::infinity();    ///< 1.05 beta' - max |dg/dx|
    double worst_lower_x = 0.0;
    double worst_lower_t = 0.0;
    std::vector<std::string> violations;
};

/// Spot-checks the declared bounds at 10 points per cell for every listed time.
/// For coupled speeds the curve samples (one per time) are used at the nodes.
inline BoundsReport validate_bounds(const SpeedField& g, const Grid& grid, const std::vector<double>& times,
                                    const std::vector<VectorField>& gamma_samples = {}) {
    BoundsReport r;
    const auto& b = g.bounds();
    const bool coupled = g.flavor() == SpeedFlavor::coupled;
    if (coupled && gamma_samples.size() != times.size()) {
        throw CoefficientBoundError("validate_bounds: coupled speed needs one curve sample per time");
    }
    auto visit = [&](double t, double x, const Vec3& y) {
        const double v = g(t, x, y);
        if (v - b.alpha < r.lower_margin) {
            r.lower_margin = v - b.alpha;
            r.worst_lower_x = x;
            r.worst_lower_t = t;
        }
        r.upper_margin = std::min(r.upper_margin, b.beta - v);
        r.dt_margin = std::min(r.dt_margin, 1.05 * b.beta1 - std::abs(g.dt(t, x, y)));
        const double slope = coupled ? norm(g.grad_gamma(t, x, y)) : std::abs(g.dx(t, x, y));
        r.dx_margin = std::min(r.dx_margin, 1.05 * b.beta_prime - slope);
    };
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        if (coupled) {
            const auto& y = gamma_samples[k];
            require_aligned(grid, y.grid(), "validate_bounds");
            for (std::size_t i = 0; i < grid.size(); ++i) visit(t, grid.x(i), y[i]);
            continue;
        }
        for (std::size_t c = 0; c < grid.cells(); ++c) {
            for (int j = 0; j < 10; ++j) visit(t, grid.x(c) + 0.1 * j * grid.h(), {});
        }
        if (!grid.is_periodic()) visit(t, grid.x_end(), {});
    }
    const double slack = detail::bound_slack(b);
    auto flag = [&](double margin, const std::string& what) {
        if (margin < -slack) {
            r.passed = false;
            r.violations.push_back(what + " violated by " + std::to_string(-margin));
        }
    };
    flag(r.lower_margin, "lower bound alpha (worst at x = " + std::to_string(r.worst_lower_x) + ")");
    flag(r.upper_margin, "upper bound beta");
    flag(r.dt_margin, "time-derivative bound beta1");
    flag(r.dx_margin, "first-derivative bound beta'");
    return r;
}

} // namespace bfl
