#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bfl/lattice.hpp"
#include "test_support.hpp"

using namespace bfl;
using bfl::testing::random_scalar_field;
using bfl::testing::random_unit_field;
using bfl::testing::random_vector_field;

namespace {

ScalarField spike(const Grid& g, std::size_t at, double value) {
    std::vector<double> v(g.size(), 0.0);
    v[at] = value;
    return ScalarField(g, std::move(v));
}

} // namespace

TEST(Grid, PeriodicSpacingAndValidation) {
    const auto g = Grid::periodic(2.0, 8);
    EXPECT_DOUBLE_EQ(g.h(), 0.25);
    EXPECT_EQ(g.size(), 8u);
    EXPECT_EQ(g.cells(), 8u);
    EXPECT_THROW(Grid::periodic(1.0, 2), DomainError);
    EXPECT_THROW(Grid::window(0.0, 3, 0.1), DomainError);
    EXPECT_THROW(Grid::window(0.0, 8, -0.1), DomainError);
    const auto w = Grid::window(-1.0, 8, 0.25);
    EXPECT_EQ(w.size(), 9u);
    EXPECT_DOUBLE_EQ(w.x(8), 1.0);
}

TEST(Field, RejectsMisalignedAndNonFinite) {
    const auto g = Grid::periodic(1.0, 4);
    EXPECT_THROW(ScalarField(g, {1.0, 2.0}), AlignmentError);
    EXPECT_THROW(ScalarField(g, {1.0, 2.0, NAN, 0.0}), DomainError);
    EXPECT_THROW(UnitField(VectorField::filled(g, Vec3{2, 0, 0})), DomainError);
}

TEST(Field, GhostPolicies) {
    const auto g = Grid::window(0.0, 4, 1.0);
    const ScalarField f(g, {1, 2, 4, 7, 11});
    EXPECT_EQ(f.at(-1), 1);
    EXPECT_EQ(f.at(5), 11);
    EXPECT_EQ(f.with_extension(Extension::linear).at(-1), 0);
    EXPECT_EQ(f.with_extension(Extension::linear).at(5), 15);
    EXPECT_EQ(f.with_extension(Extension::zero).at(5), 0);
    const auto p = ScalarField(Grid::periodic(4.0, 4), {1, 2, 3, 4});
    EXPECT_EQ(p.at(-1), 4);
    EXPECT_EQ(p.at(4), 1);
}

TEST(Differences, ConstantFieldHasZeroDifferences) {
    const auto g = Grid::periodic(2.0, 8);
    const auto c = VectorField::filled(g, Vec3{1, -2, 3});
    EXPECT_EQ(norm_Linf_h(dplus(c)), 0.0);
    EXPECT_EQ(norm_Linf_h(dminus(c)), 0.0);
    EXPECT_EQ(norm_Linf_h(d2(c)), 0.0);
}

TEST(Differences, SecondDifferenceExactOnQuadratics) {
    const auto g = Grid::window(0.0, 10, 0.5);
    const auto v = ScalarField::sample(g, [](double x) { return x * x; });
    const auto dd = d2(v);
    for (std::size_t i = 1; i + 1 < g.size(); ++i) {
        EXPECT_NEAR(dd[i], 2.0, 1e-12) << i;
    }
}

TEST(Differences, CompositionMatchesStencilIncludingWindowEnds) {
    std::mt19937_64 rng(3);
    for (auto ext : {Extension::constant, Extension::linear}) {
        const auto g = Grid::window(0.0, 12, 0.3, ext);
        const auto v = random_vector_field(g, rng);
        EXPECT_LT(norm_Linf_h(dplus(dminus(v)) - d2(v)), 1e-12);
        EXPECT_LT(norm_Linf_h(dminus(dplus(v)) - d2(v)), 1e-12);
    }
    const auto p = random_vector_field(Grid::periodic(1.0, 9), rng);
    EXPECT_LT(norm_Linf_h(dplus(dminus(p)) - d2(p)), 1e-12);
}

TEST(Differences, ThirdDifferenceOfCubic) {
    const auto g = Grid::window(-1.0, 20, 0.1);
    const auto v = ScalarField::sample(g, [](double x) { return x * x * x; });
    const auto t = d3(v);
    for (std::size_t i = 2; i + 3 < g.size(); ++i) EXPECT_NEAR(t[i], 6.0, 1e-9);
}

TEST(Differences, SummationByPartsWorkedExample) {
    const auto g = Grid::window(0.0, 8, 1.0);
    const auto u = spike(g, 4, 2.0);
    const auto v = spike(g, 4, 1.0);
    const auto dpu = dplus(u);
    const auto dmv = dminus(v);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        lhs += v[i] * dpu[i];
        rhs -= u[i] * dmv[i];
    }
    EXPECT_EQ(lhs, -2.0);
    EXPECT_EQ(rhs, -2.0);
}

TEST(Differences, SummationByPartsRandomized) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = Grid::periodic(3.0, 5 + trial);
        const auto u = random_vector_field(g, rng);
        const auto v = random_vector_field(g, rng);
        const double a = inner_h(v, dplus(u));
        const double b = inner_h(u, dminus(v));
        EXPECT_LT(std::abs(a + b), 1e-12 * (std::abs(a) + 1.0) * g.size() / g.h());
    }
    // Window: u supported away from the ends.
    const auto w = Grid::window(0.0, 30, 0.1);
    auto u = random_vector_field(w, rng);
    std::vector<Vec3> uc(u.values().begin(), u.values().end());
    for (std::size_t i = 0; i < uc.size(); ++i) {
        if (i < 3 || i + 3 > uc.size()) uc[i] = {};
    }
    const VectorField uu(w, uc);
    const auto v = random_vector_field(w, rng);
    EXPECT_NEAR(inner_h(v, dplus(uu)), -inner_h(uu, dminus(v)), 1e-12);
}

TEST(Differences, ProductRules) {
    std::mt19937_64 rng(5);
    const auto g = Grid::periodic(2.0, 17);
    const auto u = random_scalar_field(g, rng);
    const auto v = random_scalar_field(g, rng);
    const auto uv = dot(u, v);
    EXPECT_LT(norm_Linf_h(dplus(uv) - (dot(shift_plus(u), dplus(v)) + dot(dplus(u), v))), 1e-12);
    EXPECT_LT(norm_Linf_h(dminus(uv) - (dot(shift_minus(u), dminus(v)) + dot(dminus(u), v))), 1e-12);
}

TEST(Differences, UnitFieldDotDifference) {
    std::mt19937_64 rng(9);
    for (auto g : {Grid::periodic(1.0, 20), Grid::window(0.0, 20, 0.05)}) {
        const auto u = random_unit_field(g, rng);
        const auto dp = dplus(u.field());
        const auto dm = dminus(u.field());
        for (std::size_t i = 0; i < g.size(); ++i) {
            EXPECT_NEAR(dot(u[i], dp[i]), -0.5 * g.h() * norm2(dp[i]), 1e-12 / g.h());
            EXPECT_NEAR(dot(u[i], dm[i]), 0.5 * g.h() * norm2(dm[i]), 1e-12 / g.h());
        }
    }
}

TEST(Norms, ConstantFieldOnPeriodicGrid) {
    const auto g = Grid::periodic(2.0, 8);
    const auto v = VectorField::filled(g, Vec3{1, 0, 0});
    EXPECT_NEAR(norm_h(v), std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(norm_H1h(v), std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(norm_h(v, Summation::compensated), std::sqrt(2.0), 1e-15);
}

TEST(Norms, LinfOfSpike) { EXPECT_EQ(norm_Linf_h(spike(Grid::periodic(1.0, 10), 3, 5.0)), 5.0); }

TEST(Norms, DifferenceBoundedByTwoOverH) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const auto g = trial % 2 ? Grid::periodic(1.0, 16) : Grid::window(0.0, 16, 0.1);
        const auto v = random_vector_field(g, rng);
        EXPECT_LE(norm_h(dplus(v)), 2.0 / g.h() * norm_h(v) * (1 + 1e-14));
    }
}

TEST(Norms, CompensatedSummationHandlesCancellation) {
    const auto g = Grid::periodic(4.0, 4);
    const ScalarField a(g, {1e16, 1.0, -1e16, 1.0});
    const auto one = ScalarField::filled(g, 1.0);
    EXPECT_EQ(inner_h(a, one, Summation::compensated), 2.0);
}

TEST(DualNorm, ConstantField) {
    const auto g = Grid::periodic(1.0, 12);
    EXPECT_NEAR(norm_Hneg1(ScalarField::filled(g, -3.0)), 3.0, 1e-13);
}

TEST(DualNorm, AlternatingMode) {
    for (std::size_t n : {4u, 10u, 64u}) {
        const auto g = Grid::periodic(2.0, n);
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = i % 2 ? -1.0 : 1.0;
        const ScalarField f(g, v);
        const double h = g.h();
        EXPECT_NEAR(norm_Hneg1(f), norm_h(f) / std::sqrt(1 + 4 / (h * h)), 1e-13);
    }
}

TEST(DualNorm, DominatesSampledQuotientsAndIsBelowL2) {
    std::mt19937_64 rng(21);
    for (auto g : {Grid::periodic(2.0, 24), Grid::window(-1.0, 24, 0.1)}) {
        const auto v = random_vector_field(g, rng);
        const double dual = norm_Hneg1(v);
        EXPECT_LE(dual, norm_h(v));
        for (int k = 0; k < 100; ++k) {
            const auto u = random_vector_field(g, rng);
            EXPECT_GE(dual * (1 + 1e-12), inner_h(v, u) / norm_H1h(u));
        }
        // The Riesz representative attains the supremum.
        const auto w = riesz_representative(v);
        EXPECT_NEAR(inner_h(v, w) / norm_H1h(w), dual, 1e-12);
    }
}

TEST(CyclicSolver, MatchesDenseProduct) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(-1, 1);
    const std::size_t n = 7;
    std::vector<double> lo(n), di(n), up(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        lo[i] = d(rng);
        up[i] = d(rng);
        di[i] = 4 + d(rng);
        b[i] = d(rng);
    }
    const auto x = solve_cyclic_tridiagonal(lo, di, up, b);
    for (std::size_t i = 0; i < n; ++i) {
        const double ax = lo[i] * x[(i + n - 1) % n] + di[i] * x[i] + up[i] * x[(i + 1) % n];
        EXPECT_NEAR(ax, b[i], 1e-13);
    }
}

TEST(WeightedLaplacian, SpikeStencil) {
    const auto g = Grid::periodic(8.0, 8);
    const auto one = ScalarField::filled(g, 1.0);
    const auto r = delta_g(one, spike(g, 4, 1.0));
    EXPECT_EQ(r[3], 1.0);
    EXPECT_EQ(r[4], -2.0);
    EXPECT_EQ(r[5], 1.0);
    EXPECT_EQ(r[0], 0.0);
}

TEST(WeightedLaplacian, GreatCircleIsAnEigenfield) {
    const auto g = Grid::periodic(2 * std::numbers::pi, 40);
    const auto u = VectorField::sample(g, [](double x) { return Vec3{std::cos(x), std::sin(x), 0}; });
    const auto r = delta_g(ScalarField::filled(g, 1.0), u);
    const double h = g.h();
    const double lam = (2 * std::cos(h) - 2) / (h * h);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_LT(norm(r[i] - u[i] * lam), 1e-12);
        EXPECT_LT(norm(cross(r[i], u[i])), 1e-12);
    }
}

TEST(WeightedLaplacian, FactorizationsAgree) {
    std::mt19937_64 rng(4);
    for (auto g : {Grid::periodic(1.0, 30), Grid::window(0.0, 30, 0.03)}) {
        const auto v = random_vector_field(g, rng);
        const auto w = random_scalar_field(g, rng, 0.5, 2.0);
        const auto a = delta_g(w, v);
        EXPECT_LT(norm_Linf_h(a - delta_g_shifted(w, v)), 1e-14 * norm_Linf_h(a));
    }
}

TEST(WeightedLaplacian, UnitFieldEnergyIdentity) {
    std::mt19937_64 rng(8);
    for (auto g : {Grid::periodic(1.0, 25), Grid::window(0.0, 25, 0.04)}) {
        const auto u = random_unit_field(g, rng);
        const auto w = random_scalar_field(g, rng, 0.5, 2.0);
        const auto lap = delta_g(w, u.field());
        const auto dm = dminus(u.field());
        const auto dp = dplus(u.field());
        const auto tw = shift_plus(w);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double expect = -0.5 * (w[i] * norm2(dm[i]) + tw[i] * norm2(dp[i]));
            EXPECT_NEAR(dot(u[i], lap[i]), expect, 1e-12 * std::abs(expect) + 1e-12);
        }
    }
}

TEST(WeightedLaplacian, RejectsNonPositiveSpeed) {
    const auto g = Grid::periodic(1.0, 5);
    EXPECT_THROW(delta_g(ScalarField(g, {1, 1, 0, 1, 1}), ScalarField::filled(g, 1.0)), CoefficientBoundError);
    EXPECT_THROW(delta_g(ScalarField::filled(Grid::periodic(1.0, 6), 1.0), ScalarField::filled(g, 1.0)),
                 AlignmentError);
}
