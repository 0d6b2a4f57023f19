#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lilkit/errors.hpp"
#include "lilkit/taut_string.hpp"

using namespace lilkit;

TEST(TautString, WideTubeGivesStraightLine) {
    const std::vector<double> x{0.0, 0.25, 0.5, 1.0}, lo(4, -10.0), hi(4, 10.0);
    const TautString t = taut_string(x, lo, hi, 0.0, 3.0);
    EXPECT_NEAR(t.energy, 9.0, 1e-12);
    EXPECT_EQ(t.knot_x.size(), 2u);
}

TEST(TautString, BendsAroundAnObstacle) {
    // From (0, 0) to (2, 0) forced through y >= 1 at x = 1: two segments of
    // slope ±1, energy 1 + 1.
    const std::vector<double> x{0.0, 1.0, 2.0}, lo{-5.0, 1.0, -5.0}, hi{5.0, 5.0, 5.0};
    const TautString t = taut_string(x, lo, hi, 0.0, 0.0);
    EXPECT_NEAR(t.energy, 2.0, 1e-12);
    ASSERT_EQ(t.knot_y.size(), 3u);
    EXPECT_NEAR(t.knot_y[1], 1.0, 1e-12);
}

TEST(TautString, FreeEndChoosesFlatPath) {
    const std::vector<double> x{0.0, 0.5, 1.0}, lo{-1.0, -1.0, -1.0}, hi{1.0, 1.0, 1.0};
    EXPECT_NEAR(taut_string_energy_free_end(x, lo, hi, 0.0), 0.0, 1e-15);
}

TEST(TautString, FreeEndReachesRaisedFloor) {
    // Must reach y >= 1 at x = 1 from 0: the best is the line y = t, energy 1.
    const std::vector<double> x{0.0, 0.5, 1.0}, lo{-1.0, -1.0, 1.0}, hi{1.0, 1.0, 2.0};
    EXPECT_NEAR(taut_string_energy_free_end(x, lo, hi, 0.0), 1.0, 1e-12);
}

TEST(TautString, RejectsBadInput) {
    const std::vector<double> x{0.0, 0.0}, lo{0.0, 0.0}, hi{1.0, 1.0};
    EXPECT_THROW(taut_string(x, lo, hi, 0.0, 0.0), InputError);
    const std::vector<double> x2{0.0, 1.0}, lo2{0.0, 2.0}, hi2{1.0, 1.0};
    EXPECT_THROW(taut_string(x2, lo2, hi2, 0.0, 0.0), InputError);
}
