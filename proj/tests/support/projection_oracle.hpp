#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace lilkit::testing {

/// Sup-norm distance from a path on a uniform grid of [0, 1] to the Strassen
/// ball, by projected Gauss–Seidel on the discrete energy and bisection on
/// the tube radius. Slow and independent of the taut-string code.
inline double projection_bruteforce(const std::vector<double>& p, int sweeps = 40000) {
    const std::size_t m = p.size();
    const double dt = 1.0 / static_cast<double>(m - 1);
    auto min_energy = [&](double d) {
        std::vector<double> f(m, 0.0);
        for (std::size_t i = 1; i < m; ++i) f[i] = std::clamp(0.0, p[i] - d, p[i] + d);
        for (int s = 0; s < sweeps; ++s) {
            for (std::size_t i = 1; i + 1 < m; ++i) f[i] = std::clamp(0.5 * (f[i - 1] + f[i + 1]), p[i] - d, p[i] + d);
            f[m - 1] = std::clamp(f[m - 2], p[m - 1] - d, p[m - 1] + d);
        }
        double e = 0.0;
        for (std::size_t i = 1; i < m; ++i) e += (f[i] - f[i - 1]) * (f[i] - f[i - 1]) / dt;
        return e;
    };
    double lo = std::abs(p[0]), hi = 0.0;
    for (double v : p) hi = std::max(hi, std::abs(v));
    if (min_energy(lo) <= 1.0) return lo;
    for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        (min_energy(mid) <= 1.0 ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace lilkit::testing
