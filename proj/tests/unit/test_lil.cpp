#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lilkit/errors.hpp"
#include "lilkit/lil.hpp"
#include "support/projection_oracle.hpp"

using namespace lilkit;

namespace {

Kernel coin() { return iid_kernel(EmpiricalMeasure({make_point(-1.0), make_point(1.0)}, {0.5, 0.5})); }

LILPath path_from(const std::vector<double>& v) {
    LILPath p;
    for (std::size_t i = 0; i < v.size(); ++i) p.t.push_back(static_cast<double>(i) / static_cast<double>(v.size() - 1));
    p.values = v;
    return p;
}

}  // namespace

TEST(LilNorm, Values) {
    EXPECT_EQ(lil_norm(1.0, 2), 0.0);
    EXPECT_DOUBLE_EQ(lil_norm(2.0, 100), 2.0 * std::sqrt(200.0 * std::log(std::log(100.0))));
}

TEST(RPath, IndexConventions) {
    const std::vector<double> g{5.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    const std::size_t n = g.size() - 1;
    const double nrm = lil_norm(1.0, n);
    const LILPath r = r_path(g, 1.0);
    ASSERT_EQ(r.values.size(), n + 1);
    // r_n(1) sums ḡ(φ_0) .. ḡ(φ_{n-1}); r̂_n sums ḡ(φ_1) .. ḡ(φ_n).
    EXPECT_DOUBLE_EQ(r.values.back(), std::accumulate(g.begin(), g.end() - 1, 0.0) / nrm);
    EXPECT_DOUBLE_EQ(r_hat(g, n, 1.0), std::accumulate(g.begin() + 1, g.end(), 0.0) / nrm);
    EXPECT_DOUBLE_EQ(r.values.front(), 0.0);
    EXPECT_DOUBLE_EQ(r.at(0.05), 0.5 * 5.0 / nrm);
}

TEST(KDistance, ReferencePaths) {
    const std::vector<double> t{0.0, 0.25, 0.5, 0.75, 1.0};
    LILPath zero = path_from({0.0, 0.0, 0.0, 0.0, 0.0});
    EXPECT_EQ(k_distance(zero), 0.0);
    LILPath id = path_from(t);
    EXPECT_NEAR(k_distance(id), 0.0, 1e-7);
    std::vector<double> two;
    for (double s : t) two.push_back(2.0 * s);
    EXPECT_NEAR(k_distance(path_from(two)), 1.0, 1e-6);
    EXPECT_THROW(k_distance(id, 0.0), InputError);
}

TEST(KDistance, AgreesWithBruteForceProjection) {
    RngStream r(41);
    for (int i = 0; i < 20; ++i) {
        std::vector<double> v{0.0};
        for (int j = 1; j < 40; ++j) v.push_back(v.back() + 0.3 * r.normal());
        EXPECT_NEAR(k_distance(path_from(v)), lilkit::testing::projection_bruteforce(v), 1e-3) << "path " << i;
    }
}

TEST(Martingale, IidCoinIsExactPartialSum) {
    const Kernel k = coin();
    const TestFunction g = functions::coordinate();
    RngStream r(3);
    const auto traj = simulate(k, make_point(1.0), 500, r);
    const MartingaleSeries s = martingale_series(traj, g.eval, g);
    double sum = 0.0;
    for (std::size_t i = 1; i <= 500; ++i) {
        sum += traj[i].y[0];
        ASSERT_EQ(s.M[i], sum);
        ASSERT_EQ(std::abs(s.Z[i - 1]), 1.0);
    }
}

TEST(Centering, ExactForKnownInvariant) {
    const EmpiricalMeasure mu({make_point(0.0), make_point(3.0)}, {0.5, 0.5});
    const CenteredFunction c = center_g(functions::clamp(-10.0, 10.0), mu, true);
    EXPECT_DOUBLE_EQ(c.mean.value, 1.5);
    EXPECT_EQ(c.mean.stderr, 0.0);
    EXPECT_DOUBLE_EQ(c.gbar(make_point(3.0)), 1.5);
    EXPECT_DOUBLE_EQ(c.gbar.sup_bound, 11.5);
}

TEST(Truncation, GeometricTail) {
    // Bound at x̄ is c̃ s q^{N+1}/(1 - q) = 0.5^N for c̃ = s = 1, q = 1/2.
    const TestFunction g = functions::coordinate();
    EXPECT_EQ(choose_truncation(g, {1.0, 0.5}, 1e-3), 10u);
    EXPECT_EQ(choose_truncation(g, {0.0, 0.0}, 1e-3), 0u);
    EXPECT_THROW(choose_truncation(g, {1.0, 1.0}, 1e-3), TruncationError);
    EXPECT_THROW(choose_truncation(g, {1.0, 0.999999}, 1e-300, 10), TruncationError);
    ChiApprox chi{g, {}, 3, 10, {2.0, 0.5}, make_point(0.0), {}};
    EXPECT_DOUBLE_EQ(chi.tail_bound(make_point(-3.0)), 2.0 * std::pow(0.5, 4) / 0.5 * 4.0);
}

TEST(Chi, Ar1CorrectorIsTwoX) {
    // U^i x = κ^i x, so Σ_{i<=N} U^i x = x (1 - κ^{N+1})/(1 - κ).
    const Kernel k = ar1_kernel(0.5, {NoiseLaw::Kind::gaussian, 1.0});
    const std::size_t N = 20;
    const ChiApprox chi{functions::coordinate(), {}, N, 4000, {1.0, 0.5}, make_point(0.0), {}};
    for (double x : {-2.0, 0.3, 1.7}) {
        const ChiValue v = chi_eval(k, chi, make_point(x), RngStream(5));
        const double exact = x * (1.0 - std::pow(0.5, N + 1)) / 0.5;
        EXPECT_NEAR(v.value, exact, 5.0 * v.stderr);
        EXPECT_NEAR(v.value, 2.0 * x, 5.0 * v.stderr + v.tail_bound);
    }
}

TEST(Chi, TableMatchesDirectEvaluation) {
    const Kernel k = ar1_kernel(0.5, {NoiseLaw::Kind::gaussian, 1.0});
    const ChiApprox chi{functions::coordinate(), {}, 10, 200, {1.0, 0.5}, make_point(0.0), {}};
    const ChiTable table(k, chi, -3.0, 3.0, 61, 1, RngStream(6));
    // Shared inner streams make χ̂ affine in x for this chain, so the linear
    // interpolation is exact up to rounding.
    for (double x : {-2.95, -0.4, 0.0, 1.23, 2.999}) {
        EXPECT_NEAR(table(make_point(x)), chi_eval(k, chi, make_point(x), RngStream(6)).value, 1e-9);
    }
    EXPECT_NEAR(table(make_point(5.0)), chi_eval(k, chi, make_point(5.0), RngStream(6)).value, 1e-12);
}

TEST(Chi, ZeroTruncationIsExact) {
    const Kernel k = coin();
    const ChiApprox chi{functions::coordinate(), {}, 0, 10, {0.0, 0.0}, make_point(0.0), {}};
    const ChiValue v = chi_eval(k, chi, make_point(-1.0), RngStream(1));
    EXPECT_EQ(v.value, -1.0);
    EXPECT_EQ(v.stderr, 0.0);
    EXPECT_EQ(v.tail_bound, 0.0);
}

TEST(Paths, EtaTildeInterpolation) {
    MartingaleSeries s;
    s.M = {0.0, 1.0, 0.0, 1.0, 2.0, 3.0, 2.0, 3.0, 4.0};
    for (std::size_t i = 1; i < s.M.size(); ++i) s.Z.push_back(s.M[i] - s.M[i - 1]);
    s.gbar = s.Z;
    s.gbar.push_back(1.0);
    const std::size_t n = s.length();
    std::vector<double> hn2(n + 1);
    for (std::size_t i = 0; i <= n; ++i) hn2[i] = static_cast<double>(i);
    const double nrm = lil_norm(1.0, n);
    const PathSet ps = build_paths(s, 1.0, hn2);
    for (std::size_t k = 0; k < n; ++k) {
        EXPECT_DOUBLE_EQ(ps.eta_tilde.values[2 * k], s.M[k] / nrm);
        EXPECT_DOUBLE_EQ(ps.eta_tilde.values[2 * k + 1], 0.5 * (s.M[k] + s.M[k + 1]) / nrm);
        // With h_k² = k the time change is the identity.
        EXPECT_NEAR(ps.eta.values[2 * k + 1], ps.eta_tilde.values[2 * k + 1], 1e-15);
    }
    PathOptions minus;
    minus.eta_tilde_sign = -1;
    const PathSet pm = build_paths(s, 1.0, hn2, minus);
    EXPECT_DOUBLE_EQ(pm.eta_tilde.values[1], (s.M[0] - 0.5 * s.Z[0]) / nrm);
}

TEST(Paths, RejectsNonMonotoneCurve) {
    MartingaleSeries s;
    s.M = {0.0, 1.0, 0.0, 1.0, 0.0};
    s.Z = {1.0, -1.0, 1.0, -1.0};
    s.gbar = {1.0, -1.0, 1.0, -1.0, 1.0};
    const std::vector<double> flat{0.0, 1.0, 2.0, 2.0, 2.0};
    EXPECT_THROW(build_paths(s, 1.0, flat), PathError);
    EXPECT_THROW(build_paths(s, 0.0, std::vector<double>{0, 1, 2, 3, 4}), PathError);
}

TEST(Sigma2, CoinVarianceIsOne) {
    const Kernel k = coin();
    const TestFunction g = functions::coordinate();
    const Sigma2Result r = sigma2_formula(k, g.eval, *k.known_invariant(), 40000, RngStream(2));
    EXPECT_NEAR(r.estimate.value, 1.0, 5.0 * r.estimate.stderr);
    EXPECT_FALSE(r.degenerate);
}

TEST(Stream, CheckpointsMatchFullSeries) {
    const Kernel k = coin();
    const TestFunction g = functions::coordinate();
    StreamOptions opt;
    opt.checkpoints = {10, 100, 1000};
    opt.path_lengths = {1000};
    opt.path_nodes = 1000;
    opt.sigma = 1.0;
    opt.rhat_from = 10;
    opt.keep_series = 1000;
    opt.keep_trajectory = true;
    const StreamResult s = stream_trajectory(k, g.eval, g, make_point(1.0), 1000, opt, RngStream(4));
    const MartingaleSeries full = martingale_series(s.series.trajectory, g.eval, g);
    ASSERT_EQ(s.checkpoints.size(), 3u);
    double qv = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) qv += full.Z[i] * full.Z[i];
    EXPECT_EQ(s.checkpoints.back().M, full.M[1000]);
    EXPECT_EQ(s.checkpoints.back().qv, qv);
    EXPECT_EQ(s.series.M, full.M);
    const LILPath direct = r_path(full.gbar, 1.0);
    ASSERT_EQ(s.r_paths[0].values.size(), direct.values.size());
    for (std::size_t i = 0; i < direct.values.size(); ++i) EXPECT_DOUBLE_EQ(s.r_paths[0].values[i], direct.values[i]);
    double mx = -1e300, mn = 1e300;
    for (std::size_t m = 10; m <= 1000; ++m) {
        const double v = r_hat(full.gbar, m, 1.0);
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    EXPECT_DOUBLE_EQ(s.checkpoints.back().rhat_max, mx);
    EXPECT_DOUBLE_EQ(s.checkpoints.back().rhat_min, mn);
}

TEST(Stream, EnsembleIndependentOfWorkers) {
    const Kernel k = coin();
    const TestFunction g = functions::coordinate();
    StreamOptions opt;
    opt.checkpoints = {500};
    auto start = [](std::size_t) { return make_point(1.0); };
    const auto a = run_ensemble(k, g.eval, g, start, 500, 16, opt, RngStream(8), 1);
    const auto b = run_ensemble(k, g.eval, g, start, 500, 16, opt, RngStream(8), 4);
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(a[j].checkpoints[0].M, b[j].checkpoints[0].M);
}

TEST(Diagnostics, CoinSeriesClosedForms) {
    // h_n² = n exactly, so the lil1 summand is 1/l² for l >= 2 and 0 at l = 1.
    const Kernel k = coin();
    const TestFunction g = functions::coordinate();
    StreamOptions opt;
    opt.keep_series = 64;
    auto start = [](std::size_t) { return make_point(1.0); };
    const auto ens = run_ensemble(k, g.eval, g, start, 64, 20, opt, RngStream(9));
    std::vector<MartingaleSeries> series;
    for (const auto& e : ens) series.push_back(e.series);
    const Hn2Curve h = hn2_curve(series);
    for (std::size_t i = 0; i <= 64; ++i) EXPECT_EQ(h.qv[i], static_cast<double>(i));
    const std::vector<double> z1{1.0, -1.0, 1.0, -1.0};
    const DiagnosticsResult d = series_diagnostics(series, h, 1.0, z1);
    double expect4 = 0.0;
    for (int l = 2; l <= 4; ++l) expect4 += 1.0 / (l * l);
    ASSERT_GE(d.lil1.n.size(), 2u);
    EXPECT_EQ(d.lil1.n[1], 4u);
    EXPECT_NEAR(d.lil1.partial_sum[1], expect4, 1e-15);
    EXPECT_NEAR(d.hn2_limit, 1.0, 1e-15);
    EXPECT_NEAR(d.qv_ratio_mean, 1.0, 1e-15);
    for (std::size_t i = 0; i < d.m_grid.size(); ++i) {
        EXPECT_NEAR(d.cesaro[i], 1.0, 1e-15);
        EXPECT_NEAR(d.cesaro_stationary[i], 1.0, 1e-15);
    }
}

TEST(Identities, Ar1PoissonEquation) {
    const Kernel k = ar1_kernel(0.5, {NoiseLaw::Kind::gaussian, 1.0});
    const ChiApprox chi{functions::coordinate(), {}, 12, 300, {1.0, 0.5}, make_point(0.0), {}};
    const IdentityCheck c = corrector_identities(k, chi, make_point(1.2), 400, RngStream(1), RngStream(2), 0.0);
    EXPECT_TRUE(c.u_chi_pass) << c.u_chi_gap << " vs " << c.u_chi_tol;
    EXPECT_TRUE(c.var_pass) << c.var_gap << " vs " << c.var_tol;
    // Var χ(φ_1) = 4 Var(ξ) = 4 for χ = 2x.
    EXPECT_NEAR(c.var_chi.value, 4.0, 5.0 * c.var_chi.stderr + 0.01);
}

TEST(Regression, CoinIncrementsAreUncorrelated) {
    const Kernel k = coin();
    const TestFunction g = functions::coordinate();
    StreamOptions opt;
    opt.keep_series = 2000;
    opt.keep_trajectory = true;
    auto start = [](std::size_t) { return make_point(1.0); };
    const auto ens = run_ensemble(k, g.eval, g, start, 2000, 10, opt, RngStream(12));
    std::vector<MartingaleSeries> series;
    for (const auto& e : ens) series.push_back(e.series);
    const RegressionCheck r = martingale_regression(series, [](const Point& p) { return p.y[0]; });
    EXPECT_EQ(r.samples, 20000u);
    EXPECT_TRUE(r.pass);
}
