#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lilkit/errors.hpp"
#include "lilkit/rng.hpp"
#include "lilkit/space.hpp"

using namespace lilkit;

TEST(Metric, CoupledDistance) {
    MetricSpec m;
    m.mode_weight = 2.0;
    EXPECT_DOUBLE_EQ(rho_c(make_point(1.0, 1), make_point(4.0, 1), m), 3.0);
    EXPECT_DOUBLE_EQ(rho_c(make_point(1.0, 1), make_point(4.0, 2), m), 5.0);
    EXPECT_DOUBLE_EQ(rho_c(make_point(1.0, 2), make_point(1.0, 2), m), 0.0);
}

TEST(Metric, MaxNormInTwoDimensions) {
    MetricSpec m;
    m.norm = VectorNorm::max;
    Point a{StateVector{0.0, 0.0}, 1}, b{StateVector{3.0, -4.0}, 1};
    EXPECT_DOUBLE_EQ(rho_c(a, b, m), 4.0);
    m.norm = VectorNorm::euclidean;
    EXPECT_DOUBLE_EQ(rho_c(a, b, m), 5.0);
}

TEST(Metric, AxiomsOnRandomTriples) {
    MetricSpec m;
    RngStream r(11);
    for (int i = 0; i < 200; ++i) {
        auto draw = [&] { return make_point(r.uniform(-5.0, 5.0), 1 + static_cast<int>(r.below(3))); };
        const Point a = draw(), b = draw(), c = draw();
        EXPECT_GE(rho_c(a, b, m), 0.0);
        EXPECT_DOUBLE_EQ(rho_c(a, b, m), rho_c(b, a, m));
        EXPECT_LE(rho_c(a, c, m), rho_c(a, b, m) + rho_c(b, c, m) + 1e-12);
    }
}

TEST(TestFunctions, DeclaredBoundsHold) {
    MetricSpec m;
    std::vector<Point> pts;
    for (int i = -20; i <= 20; ++i) pts.push_back(make_point(0.25 * i, 1 + (i & 1)));
    for (const TestFunction& f : {functions::clamp(-1.0, 1.0), functions::tanh_coordinate(),
                                  functions::mode_indicator(2, m), functions::constant(0.5)}) {
        const BoundCheck c = certify_bounds(f, m, pts);
        EXPECT_TRUE(c.ok) << f.label;
    }
}

TEST(TestFunctions, BoundedLipschitzNorm) {
    EXPECT_DOUBLE_EQ(bl_norm(functions::clamp(-2.0, 1.0)), 2.0);
    EXPECT_DOUBLE_EQ(bl_norm(functions::tanh_coordinate()), 1.0);
    EXPECT_TRUE(std::isinf(bl_norm(functions::coordinate())));
}

TEST(TestFunctions, ClampRejectsEmptyRange) { EXPECT_THROW(functions::clamp(1.0, 0.0), InputError); }

TEST(Lyapunov, DistanceToReference) {
    const LyapunovSpec V{make_point(0.5), VectorNorm::euclidean};
    EXPECT_DOUBLE_EQ(V(make_point(2.0, 2)), 1.5);
}
