#include <gtest/gtest.h>

#include <cmath>

#include "lilkit/coupling.hpp"
#include "lilkit/errors.hpp"

using namespace lilkit;

TEST(Coupling, DefaultThreshold) { EXPECT_DOUBLE_EQ(default_threshold(0.25, 0.05), 4.0 * 0.05 / 0.75); }

TEST(Coupling, ValidateRejectsBadGamma) {
    CouplingSpec c = make_coupling(reference_instance(), 0.9, 1.0);
    EXPECT_NO_THROW(c.validate());
    c.gamma = 1.0;
    EXPECT_THROW(c.validate(), InputError);
}

TEST(Coupling, FIsEqualModes) {
    const CouplingSpec c = make_coupling(reference_instance(), 0.9, 1.0);
    EXPECT_TRUE(c.F(make_point(0.1, 1), make_point(3.0, 1)));
    EXPECT_FALSE(c.F(make_point(0.1, 1), make_point(0.1, 2)));
}

TEST(Coupling, ComponentsHaveMarginalMeans) {
    // E y' = E θ λ/(λ + a_i) y + ε/2 for each component separately.
    const CouplingSpec c = make_coupling(reference_instance(), 0.9, 1.0);
    const Point x = make_point(2.0, 1), y = make_point(0.5, 1);
    RngStream r(3);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0, q1 = 0.0, q2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const CoupledState s = coupled_step(c, {x, y, Branch::none}, r);
        s1 += s.first.y[0];
        s2 += s.second.y[0];
        q1 += s.first.y[0] * s.first.y[0];
        q2 += s.second.y[0] * s.second.y[0];
    }
    const double m1 = s1 / n, m2 = s2 / n;
    const double sd1 = std::sqrt(q1 / n - m1 * m1), sd2 = std::sqrt(q2 / n - m2 * m2);
    EXPECT_NEAR(m1, 0.5 * 0.5 * 2.0 + 0.05, 5.0 * sd1 / std::sqrt(n));
    EXPECT_NEAR(m2, 0.5 * 0.5 * 0.5 + 0.05, 5.0 * sd2 / std::sqrt(n));
}

TEST(Coupling, DifferentModesStepIndependently) {
    const CouplingSpec c = make_coupling(reference_instance(), 0.9, 1.0);
    RngStream r(5);
    for (int i = 0; i < 100; ++i) {
        const CoupledState s = coupled_step(c, {make_point(1.0, 1), make_point(1.0, 2), Branch::none}, r);
        EXPECT_EQ(s.last_branch, Branch::R);
    }
}

TEST(Coupling, QBranchContractionClosedForm) {
    // With a state-free θ density every θ is shared, so the Q step maps the
    // gap |y1 - y2| to θ e^{-a Δτ}|y1 - y2|: ratio E θ · λ/(λ + a).
    const CouplingSpec c = make_coupling(reference_instance(), 0.9, 1.0);
    EXPECT_NEAR(q_branch_mass(c, make_point(0.3, 1), make_point(1.7, 1)), 1.0, 1e-9);
    EXPECT_NEAR(q_branch_contraction(c, make_point(0.3, 1), make_point(1.7, 1)), 0.5 * 1.0 / 2.0, 1e-9);
    EXPECT_NEAR(q_branch_contraction(c, make_point(0.3, 2), make_point(1.7, 2)), 0.5 * 1.0 / 3.0, 1e-9);
    LinearGeneParams p;
    p.density_power = 1.0;
    const CouplingSpec c2 = make_coupling(linear_gene_model(p), 0.9, 1.0);
    EXPECT_NEAR(q_branch_contraction(c2, make_point(0.3, 1), make_point(1.7, 1)), (2.0 / 3.0) * 0.5, 1e-9);
}

TEST(Coupling, DiagonalStartHitsImmediately) {
    // Equal states stay equal, land in F after one step and, with Γ = 1,
    // below the threshold, so ρ = 1 on every trajectory and E γ^{-ρ} = 1/γ.
    const CouplingSpec c = make_coupling(reference_instance(), 0.9, 1.0);
    const std::vector<std::pair<Point, Point>> pairs{{make_point(0.05, 1), make_point(0.05, 1)}};
    CouplingOptions opt;
    opt.horizon = 50;
    const CouplingDiagnostics d = estimate_B_constants(c, pairs, 200, RngStream(2), opt);
    ASSERT_EQ(d.pairs.size(), 1u);
    EXPECT_EQ(d.pairs[0].not_hit, 0u);
    EXPECT_DOUBLE_EQ(d.pairs[0].gamma_moment.value, 1.0 / 0.9);
    for (std::size_t rho : d.pairs[0].rho_samples) EXPECT_EQ(rho, 1u);
}

TEST(Coupling, ContractionEstimateMatchesQuadrature) {
    const CouplingSpec c = make_coupling(reference_instance(), 0.9, 1.0);
    const std::vector<std::pair<Point, Point>> pairs{{make_point(0.05, 1), make_point(0.15, 1)}};
    CouplingOptions opt;
    opt.horizon = 200;
    const CouplingDiagnostics d = estimate_B_constants(c, pairs, 2000, RngStream(8), opt);
    const PairDiagnostics& p = d.pairs[0];
    EXPECT_NEAR(p.delta_quadrature, 0.25, 1e-9);
    EXPECT_NEAR(p.contraction.value, p.delta_quadrature, 4.0 * p.contraction.stderr);
    EXPECT_TRUE(p.q_support_in_F);
}

TEST(Coupling, DecayOfCoupledDifference) {
    const CouplingSpec c = make_coupling(reference_instance(), 0.9, 1.0);
    const std::vector<std::size_t> grid{0, 2, 4, 6, 8, 10};
    const CoupledDecay cd = coupled_decay(c, functions::clamp(0.0, 1.0), {make_point(0.0, 1), make_point(4.0, 1)},
                                          grid, 500, RngStream(4));
    EXPECT_FALSE(cd.increase_detected);
    EXPECT_DOUBLE_EQ(cd.fit.points.front().value, 1.0);
    EXPECT_LT(cd.fit.points.back().value, 0.05);
}
