#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <utility>
#include <vector>

namespace lilkit {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
};

/// Adaptive Gauss–Kronrod (15-point) integral of f over [a, b].
template <class F>
QuadratureResult integrate(F&& f, double a, double b, double tol = 1e-11, unsigned max_depth = 12) {
    if (!(b > a)) return {};
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, a, b, max_depth, tol, &err);
    return {v, err};
}

/// Integral of f(t) against rate·exp(-rate t) dt on [0, horizon], mapped to
/// u = 1 - exp(-rate t) so the weight becomes du.
template <class F>
QuadratureResult integrate_exponential_time(F&& f, double rate, double horizon,
                                            double tol = 1e-11, unsigned max_depth = 12) {
    const double u_max = horizon == INFINITY ? 1.0 : -std::expm1(-rate * horizon);
    auto g = [&](double u) { return f(-std::log1p(-u) / rate); };
    return integrate(g, 0.0, u_max, tol, max_depth);
}

/// Sub-intervals of [a, b] where margin(θ) <= 0, found by a sign scan on a
/// uniform grid and bisection of every sign change.
template <class F>
std::vector<std::pair<double, double>> sublevel_intervals(F&& margin, double a, double b,
                                                          int scan_points = 256) {
    std::vector<std::pair<double, double>> out;
    auto inside = [&](double x) { return margin(x) <= 0.0; };
    auto refine = [&](double lo, double hi, bool lo_inside) {
        for (int it = 0; it < 100 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
            const double mid = 0.5 * (lo + hi);
            if (inside(mid) == lo_inside)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    };
    double prev_x = a;
    bool prev_in = inside(a);
    double start = a;
    for (int k = 1; k <= scan_points; ++k) {
        const double x = a + (b - a) * static_cast<double>(k) / scan_points;
        const bool in = inside(x);
        if (in != prev_in) {
            const double edge = refine(prev_x, x, prev_in);
            if (prev_in)
                out.emplace_back(start, edge);
            else
                start = edge;
        }
        prev_x = x;
        prev_in = in;
    }
    if (prev_in) out.emplace_back(start, b);
    return out;
}

}  // namespace lilkit
