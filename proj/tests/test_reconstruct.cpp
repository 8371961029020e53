#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "bfl/probe.hpp"
#include "bfl/reconstruct.hpp"
#include "test_support.hpp"

using namespace bfl;

namespace {

std::shared_ptr<const SpeedField> speed(const std::string& s) { return std::make_shared<const SpeedField>(SpeedField::parse(s)); }

const double two_pi = 2 * std::numbers::pi;

TangentTrajectory frozen(const UnitField& u, const std::vector<double>& times) {
    std::vector<TangentSnapshot> s;
    for (double t : times) s.push_back({t, u.field(), ScalarField::filled(u.grid(), 1.0)});
    return TangentTrajectory(std::move(s));
}

} // namespace

TEST(GammaIntegral, ConstantTangentGivesRamp) {
    const auto g = Grid::window(-1.0, 20, 0.1);
    const auto u = VectorField::filled(g, Vec3{1, 0, 0});
    const auto gam = gamma_integral(u);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(gam[i][0], g.x(i), 1e-14);
    EXPECT_LE(norm_Linf_h(dplus(gam) - u), 1e-13);
}

TEST(GammaIntegral, ClosesOverBalancedPeriodicTangent) {
    const auto g = Grid::periodic(two_pi, 32);
    const auto u = oracle_great_circle(g).field();
    const auto gam = gamma_integral(u, 5);
    EXPECT_EQ(gam[5], (Vec3{}));
    // sum_j u_j = 0, so the seam difference matches too
    EXPECT_LE(norm_Linf_h(dplus(gam) - u), 1e-13);
    EXPECT_THROW(gamma_integral(u, 32), DomainError);
}

TEST(GammaIntegral, RandomWindowTangent) {
    std::mt19937_64 rng(21);
    const auto g = Grid::window(0.0, 30, 0.05);
    const auto u = bfl::testing::random_unit_field(g, rng).field();
    const auto gam = curve_from_tangent(u, 3, Vec3{1, 1, 1});
    EXPECT_EQ(gam[3], (Vec3{1, 1, 1}));
    EXPECT_LE(unit_drift(dplus(gam)), 1e-13);
}

// The great circle is stationary; its curve translates along e3 at sin(h)/h.
TEST(BasepointDrift, GreatCircleTranslates) {
    const auto g = Grid::periodic(two_pi, 64);
    const auto traj = frozen(oracle_great_circle(g), {0.0, 0.25, 0.5, 1.0});
    const double v = std::sin(g.h()) / g.h();
    for (std::size_t a : {0u, 17u, 63u}) {
        const auto c = basepoint_drift(traj, a);
        EXPECT_EQ(c[0], (Vec3{}));
        for (std::size_t k = 0; k < traj.size(); ++k) {
            EXPECT_LE(norm(c[k] - Vec3{0, 0, v * traj[k].t}), 1e-14);
        }
    }
    EXPECT_LE(anchor_dispersion(traj, {0, 10, 40}), 1e-14);
}

TEST(BasepointDrift, ConstantTangentDoesNotMove) {
    const auto g = Grid::window(-1.0, 20, 0.1);
    const auto traj = frozen(UnitField(VectorField::filled(g, Vec3{0, 0, 1})), {0.0, 1.0});
    for (const auto& c : basepoint_drift(traj, 4)) EXPECT_EQ(c, (Vec3{}));
    EXPECT_THROW(basepoint_drift(traj, 21), DomainError);
    EXPECT_THROW(anchor_dispersion(traj, {1}), DomainError);
}

TEST(Trajectory, RejectsBadInput) {
    const auto g = Grid::periodic(1.0, 8);
    EXPECT_THROW(TangentTrajectory({}), DomainError);
    const auto u = oracle_great_circle(g);
    EXPECT_THROW(frozen(u, {0.0, 0.0}), DomainError);
    const auto two = VectorField::filled(g, Vec3{2, 0, 0});
    EXPECT_THROW(TangentTrajectory({{0.0, two, ScalarField::filled(g, 1.0)}}), DomainError);
}

// Tangent run of the polygon's edge field against a direct curve run.
TEST(Reconstruct, MatchesDirectCurveRun) {
    const auto g = Grid::periodic(two_pi, 32);
    const auto polygon = oracle_unit_polygon(g);
    const auto sp = speed("const:1");
    const IntegratorSpec spec{Method::rk4, DtPolicy::fixed(1e-3), 100};
    const auto direct = evolve(FlowState::coupled(polygon, sp), 0.5, spec);
    const auto tangent = evolve(FlowState::tangent(UnitField::normalize(dplus(polygon)), sp), 0.5, spec);
    ASSERT_EQ(direct.snapshots.size(), tangent.snapshots.size());

    const auto rebuilt = reconstruct_curve(TangentTrajectory::from_run(tangent), 7);
    const auto ref = curve_trajectory(direct);
    EXPECT_EQ(rebuilt.provenance, CurveProvenance::reconstructed);
    EXPECT_EQ(ref.provenance, CurveProvenance::direct_coupled);
    const double v = std::sin(g.h()) / g.h();
    for (std::size_t k = 0; k < ref.snapshots.size(); ++k) {
        const auto shift = ref.snapshots[k].gamma - ref.snapshots[0].gamma;
        const auto moved = rebuilt.snapshots[k].gamma - rebuilt.snapshots[0].gamma;
        EXPECT_LE(norm_Linf_h(shift - moved), 1e-12);
        for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(moved[i][2], v * ref.snapshots[k].t, 1e-12);
        EXPECT_LE(norm_Linf_h(dplus(rebuilt.snapshots[k].gamma) - tangent.snapshots[k].field), 1e-12);
    }
}

// The time integral is a trapezoid rule over snapshots, so thinning the
// snapshots on a precessing helix grows the anchor disagreement.
TEST(AnchorDispersion, ShrinksWithSnapshotSpacing) {
    const auto g = Grid::periodic(two_pi, 64);
    const auto o = HelixOracle::semi_discrete(g, std::numbers::pi / 4, 2);
    auto dispersion = [&](std::size_t stride) {
        const auto r = evolve(FlowState::tangent(o.at(g, 0), speed("const:1")), 0.5,
                              {Method::rotation, DtPolicy::fixed(1e-3), stride});
        return anchor_dispersion(TangentTrajectory::from_run(r), {0, 11, 33, 50});
    };
    const double coarse = dispersion(40), fine = dispersion(20);
    EXPECT_GT(coarse, fine);
    EXPECT_GE(std::log2(coarse / fine), 1.0);
}
