#include <gtest/gtest.h>

#include <cmath>

#include "lilkit/errors.hpp"
#include "lilkit/gene_model.hpp"

using namespace lilkit;

namespace {

// One post-jump step of the linear family from (y, i):
// y' = θ y e^{-a_i Δτ} + h, so E y' = E[θ] λ/(λ + a_i) y + E h.
double expected_next(double y, double a, double lambda, double k, double eps) {
    const double e_theta = (k + 1.0) / (k + 2.0);
    return e_theta * lambda / (lambda + a) * y + 0.5 * eps;
}

}  // namespace

TEST(ReferenceInstance, ClosedFormConstants) {
    const GeneModelSpec m = reference_instance();
    EXPECT_NO_THROW(m.validate());
    // L = 1, α = -1, λ = 1, L_w = 1/2, L_w* = 1/(3 + r) with r = 1.
    EXPECT_DOUBLE_EQ(m.declared.L_w, 0.5);
    EXPECT_DOUBLE_EQ(m.declared.L_w_star, 0.25);
    const ConditionEntry bal = balance_condition(m);
    EXPECT_DOUBLE_EQ(bal.value, 1.0 * 0.5 + (-1.0) / 1.0);
    EXPECT_DOUBLE_EQ(bal.value, -0.5);
    EXPECT_TRUE(bal.pass);
    const ConditionEntry lil = lil_condition(m);
    EXPECT_DOUBLE_EQ(lil.value, 0.25 + 3.0 * (-1.0));
    EXPECT_DOUBLE_EQ(lil.value, -2.75);
    EXPECT_TRUE(lil.pass);
    // a* = λ L_w* L^{2+r} / (λ - (2+r)α) = 0.25 / 4.
    EXPECT_DOUBLE_EQ(analytic_a_star(m), 0.0625);
}

TEST(ReferenceInstance, ValidateRejectsBadSpecs) {
    GeneModelSpec m = reference_instance();
    m.lambda = 0.0;
    EXPECT_THROW(m.validate(), InputError);
    m = reference_instance();
    m.epsilon = 0.5;  // above ε*
    EXPECT_THROW(m.validate(), InputError);
    m = reference_instance();
    m.r = 2.0;
    EXPECT_THROW(m.validate(), InputError);
    LinearGeneParams p;
    p.switching = {{0.7, 0.2}, {0.5, 0.5}};
    EXPECT_THROW(linear_gene_model(p), InputError);
}

TEST(GeneSampler, HoldingTimeMean) {
    LinearGeneParams p;
    p.lambda = 2.5;
    const GeneModelSpec m = linear_gene_model(p);
    RngStream r(1);
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sample_holding_time(m, r);
    EXPECT_NEAR(s / n, 1.0 / 2.5, 5.0 * (1.0 / 2.5) / std::sqrt(n));
}

TEST(GeneSampler, ThetaMomentsForPowerDensity) {
    LinearGeneParams p;
    p.density_power = 2.0;
    const GeneModelSpec m = linear_gene_model(p);
    RngStream r(2);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = sample_theta(m, StateVector{1.0}, r);
        ASSERT_GE(t, 0.0);
        ASSERT_LE(t, 1.0);
        s += t;
        s2 += t * t;
    }
    // E θ = 3/4, E θ² = 3/5 under 3θ².
    const double sd = std::sqrt(0.6 - 0.5625);
    EXPECT_NEAR(s / n, 0.75, 5.0 * sd / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 0.6, 5.0 * 0.5 / std::sqrt(n));
}

TEST(GeneSampler, PostJumpMeanPerMode) {
    const GeneModelSpec m = reference_instance();
    const Kernel k = gene_kernel(m);
    for (int mode : {1, 2}) {
        RngStream r(10 + mode);
        const double y0 = 2.0;
        const int n = 200000;
        double s = 0.0, s2 = 0.0;
        int to1 = 0;
        for (int i = 0; i < n; ++i) {
            const Point p = k.step(make_point(y0, mode), r);
            ASSERT_GE(p.y[0], 0.0);
            s += p.y[0];
            s2 += p.y[0] * p.y[0];
            to1 += p.mode == 1;
        }
        const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
        EXPECT_NEAR(mean, expected_next(y0, mode == 1 ? 1.0 : 2.0, 1.0, 0.0, 0.1), 5.0 * sd / std::sqrt(n));
        EXPECT_NEAR(to1 / double(n), 0.5, 5.0 * 0.5 / std::sqrt(n));
    }
}

TEST(GeneSampler, ZeroJumpLeavesOnlyNoise) {
    LinearGeneParams p;
    p.zero_jump = true;
    const Kernel k = gene_kernel(linear_gene_model(p));
    RngStream r(4);
    for (int i = 0; i < 1000; ++i) {
        const Point q = k.step(make_point(50.0, 1), r);
        EXPECT_GE(q.y[0], 0.0);
        EXPECT_LE(q.y[0], 0.1);
    }
}

TEST(GeneSampler, DeterministicStreams) {
    const Kernel k = gene_kernel(reference_instance());
    RngStream a(7), b(7);
    Point x = make_point(1.0), y = make_point(1.0);
    for (int i = 0; i < 100; ++i) {
        x = k.step(x, a);
        y = k.step(y, b);
        ASSERT_EQ(x, y);
    }
}

TEST(Conditions, ReferenceInstancePasses) {
    const GeneModelSpec m = reference_instance();
    ConditionOptions opt;
    opt.sample_budget = 400;
    for (ConditionName c : {ConditionName::A2, ConditionName::A3, ConditionName::A3_star, ConditionName::A4_pi,
                            ConditionName::A4_p, ConditionName::A5_pi, ConditionName::A5_p, ConditionName::A1_star}) {
        const ConditionEntry e = check_condition_A(m, c, opt, RngStream(3));
        EXPECT_TRUE(e.pass) << e.name << " value " << e.value << " declared " << e.declared;
        EXPECT_GT(e.margin, 0.0) << e.name;
    }
}

TEST(Conditions, UnderstatedConstantFails) {
    // Declaring L_w below the true Lipschitz constant 1/2 of the mean jump must fail.
    GeneModelSpec m = reference_instance();
    m.declared.L_w = 0.4;
    ConditionOptions opt;
    opt.sample_budget = 400;
    const ConditionEntry e = check_condition_A(m, ConditionName::A3, opt, RngStream(3));
    EXPECT_FALSE(e.pass);
    EXPECT_LT(e.margin, 0.0);
}

TEST(Conditions, ToStringNames) {
    EXPECT_EQ(to_string(ConditionName::A1_star), "A1*");
    EXPECT_EQ(to_string(ConditionName::A4_pi), "A4.pi");
    EXPECT_EQ(to_string(ConditionName::A5_p), "A5.p");
}

TEST(Drift, ReferenceSlopeAndIntercept) {
    // Mode 1 has the largest slope E θ · λ/(λ + 1) = 1/4; intercept E h = 0.05.
    const GeneModelSpec m = reference_instance();
    DriftOptions opt;
    opt.sample_budget = 60000;
    opt.grid_points = 12;
    const DriftConstants d = drift_constants(m, opt, RngStream(9));
    EXPECT_LE(d.a.value, 0.25 + 3.0 * d.a.stderr);
    EXPECT_GE(d.a.value, 0.25 - 3.0 * d.a.stderr);
    EXPECT_NEAR(d.b.value, 0.05, 3.0 * d.b.stderr + 1e-12);
    EXPECT_DOUBLE_EQ(d.a_star, 0.0625);
    EXPECT_TRUE(d.pass);
}
