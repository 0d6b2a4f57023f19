#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lilkit/ergodicity.hpp"
#include "lilkit/transport.hpp"

using namespace lilkit;

namespace {

EmpiricalMeasure random_measure(RngStream& r, std::size_t max_atoms) {
    const std::size_t n = 1 + r.below(max_atoms);
    std::vector<Point> atoms;
    std::vector<double> w;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        atoms.push_back(make_point(r.uniform(-2.0, 2.0), 1 + static_cast<int>(r.below(2))));
        w.push_back(r.uniform());
        total += w.back();
    }
    for (double& x : w) x /= total;
    // Renormalise the last weight so the sum is 1 to rounding.
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) s += w[i];
    w.back() = 1.0 - s;
    return EmpiricalMeasure(std::move(atoms), std::move(w));
}

}  // namespace

TEST(Transport, TwoByTwoByHand) {
    // Supplies (0.5, 0.5), demands (0.5, 0.5), costs [[0, 1], [1, 0]]: zero.
    const std::vector<double> s{0.5, 0.5}, d{0.5, 0.5}, c{0.0, 1.0, 1.0, 0.0};
    EXPECT_NEAR(solve_transport(s, d, c).cost, 0.0, 1e-15);
    // Crossed costs force one unit across at cost 1 for half the mass each way.
    const std::vector<double> d2{1.0, 0.0};
    EXPECT_NEAR(solve_transport(s, d2, c).cost, 0.5, 1e-15);
}

TEST(Transport, DualCertificate) {
    RngStream r(17);
    const std::size_t n = 30, m = 25;
    std::vector<double> s(n, 1.0 / n), d(m, 1.0 / m), c(n * m);
    for (double& x : c) x = r.uniform();
    const TransportResult t = solve_transport(s, d, c);
    double dual = 0.0;
    for (std::size_t i = 0; i < n; ++i) dual += s[i] * t.u[i];
    for (std::size_t j = 0; j < m; ++j) dual += d[j] * t.v[j];
    EXPECT_NEAR(dual, t.cost, 1e-12);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) EXPECT_LE(t.u[i] + t.v[j], c[i * m + j] + 1e-12);
}

TEST(FortetMourier, TwoDiracs) {
    MetricSpec metric;
    for (double d : {0.0, 0.3, 1.0, 1.999, 2.0, 3.5, 100.0}) {
        const FMProblem p{EmpiricalMeasure::dirac(make_point(0.0)), EmpiricalMeasure::dirac(make_point(d)), metric};
        EXPECT_DOUBLE_EQ(fm_distance(p), std::min(d, 2.0));
    }
    const FMProblem modes{EmpiricalMeasure::dirac(make_point(0.0, 1)), EmpiricalMeasure::dirac(make_point(0.5, 2)),
                          metric};
    EXPECT_DOUBLE_EQ(fm_distance(modes), 1.5);
}

TEST(FortetMourier, AgreesWithVertexEnumeration) {
    RngStream r(23);
    MetricSpec metric;
    for (int i = 0; i < 100; ++i) {
        FMProblem p{random_measure(r, 2), random_measure(r, 2), metric};
        EXPECT_NEAR(fm_distance(p), fm_distance_bruteforce(p), 1e-9) << "instance " << i;
    }
}

TEST(FortetMourier, MetricAxioms) {
    RngStream r(29);
    MetricSpec metric;
    for (int i = 0; i < 100; ++i) {
        const EmpiricalMeasure a = random_measure(r, 4), b = random_measure(r, 4), c = random_measure(r, 4);
        const double ab = fm_distance({a, b, metric}), ba = fm_distance({b, a, metric});
        const double ac = fm_distance({a, c, metric}), bc = fm_distance({b, c, metric});
        EXPECT_GE(ab, 0.0);
        EXPECT_NEAR(ab, ba, 1e-9);
        EXPECT_LE(ac, ab + bc + 1e-9);
        EXPECT_NEAR(fm_distance({a, a, metric}), 0.0, 1e-12);
    }
}

TEST(FortetMourier, LipschitzTransportDominates) {
    // Truncating the cost at 2 can only lower the transport value.
    RngStream r(31);
    MetricSpec metric;
    for (int i = 0; i < 20; ++i) {
        FMProblem p{random_measure(r, 4), random_measure(r, 4), metric};
        EXPECT_LE(fm_distance(p), lipschitz_transport(p) + 1e-12);
    }
}
