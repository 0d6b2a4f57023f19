#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "lilkit/rng.hpp"

using lilkit::RngStream;

// Known-answer vectors for Philox4x32-10.
TEST(Philox, KnownAnswerZero) {
    const auto r = lilkit::philox4x32_10({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(r[0], 0x6627e8d5u);
    EXPECT_EQ(r[1], 0xe169c58du);
    EXPECT_EQ(r[2], 0xbc57ac4cu);
    EXPECT_EQ(r[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes) {
    const auto r = lilkit::philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                         {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(r[0], 0x408f276du);
    EXPECT_EQ(r[1], 0x41c83b0eu);
    EXPECT_EQ(r[2], 0xa20bc7c6u);
    EXPECT_EQ(r[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
    const auto r = lilkit::philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                         {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(r[0], 0xd16cfe09u);
    EXPECT_EQ(r[1], 0x94fdccebu);
    EXPECT_EQ(r[2], 0x5001e420u);
    EXPECT_EQ(r[3], 0x24126ea1u);
}

TEST(RngStream, SameIdentitySameSequence) {
    RngStream a(42, 7), b(42, 7);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(RngStream, ChildIgnoresParentPosition) {
    RngStream a(5);
    const RngStream b(5);
    for (int i = 0; i < 37; ++i) a();
    RngStream ca = a.child(3), cb = b.child(3);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(ca(), cb());
}

TEST(RngStream, ChildrenDiffer) {
    const RngStream root(9);
    std::set<std::uint64_t> firsts;
    for (std::uint64_t j = 0; j < 200; ++j) {
        RngStream c = root.child(j);
        firsts.insert(c());
    }
    EXPECT_EQ(firsts.size(), 200u);
    RngStream c0 = root.child(0), g0 = root.child(0).child(0);
    EXPECT_NE(c0(), g0());
}

TEST(RngStream, UniformOpenInterval) {
    RngStream r(1);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    // Mean 1/2, sd of the mean sqrt(1/12/n).
    EXPECT_NEAR(sum / n, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(RngStream, ExponentialAndNormalMoments) {
    RngStream r(2);
    const int n = 200000;
    double se = 0.0, sn = 0.0, sn2 = 0.0;
    for (int i = 0; i < n; ++i) {
        se += r.exponential(2.0);
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
    }
    EXPECT_NEAR(se / n, 0.5, 5.0 * 0.5 / std::sqrt(n));
    EXPECT_NEAR(sn / n, 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(sn2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}

TEST(RngStream, BelowIsUniform) {
    RngStream r(3);
    int counts[5] = {};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const auto k = r.below(5);
        ASSERT_LT(k, 5u);
        ++counts[k];
    }
    for (int c : counts) EXPECT_NEAR(c, n / 5.0, 5.0 * std::sqrt(n * 0.2 * 0.8));
}
