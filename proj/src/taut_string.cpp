#include "lilkit/taut_string.hpp"

#include <limits>

#include "lilkit/errors.hpp"

namespace lilkit {

TautString taut_string(std::span<const double> x, std::span<const double> lo, std::span<const double> hi,
                       double start, double end) {
    const std::size_t n = x.size();
    if (n < 2 || lo.size() != n || hi.size() != n) throw InputError("taut string needs matching arrays of length >= 2");
    for (std::size_t i = 1; i < n; ++i)
        if (!(x[i] > x[i - 1])) throw InputError("taut string nodes must be strictly increasing");
    for (std::size_t i = 0; i < n; ++i)
        if (lo[i] > hi[i]) throw InputError("taut string tube is empty");

    auto upper = [&](std::size_t i) { return i == n - 1 ? end : hi[i]; };
    auto lower = [&](std::size_t i) { return i == n - 1 ? end : lo[i]; };

    TautString out;
    out.knot_x.push_back(x[0]);
    out.knot_y.push_back(start);
    std::size_t a = 0;
    double ay = start;
    constexpr double inf = std::numeric_limits<double>::infinity();
    // Funnel scan from the current anchor: the admissible slope window shrinks
    // until the next node leaves it, at which point the string bends at the
    // node that set the violated side. The scan restarts from that node.
    while (a < n - 1) {
        double smax = inf, smin = -inf;
        std::size_t imax = a, imin = a;
        std::size_t next = n - 1;
        double next_y = end;
        for (std::size_t j = a + 1; j < n; ++j) {
            const double dx = x[j] - x[a];
            const double su = (upper(j) - ay) / dx;
            const double sl = (lower(j) - ay) / dx;
            if (sl > smax) {
                next = imax;
                next_y = ay + smax * (x[imax] - x[a]);
                break;
            }
            if (su < smin) {
                next = imin;
                next_y = ay + smin * (x[imin] - x[a]);
                break;
            }
            if (su <= smax) {
                smax = su;
                imax = j;
            }
            if (sl >= smin) {
                smin = sl;
                imin = j;
            }
        }
        const double dx = x[next] - x[a];
        out.energy += (next_y - ay) * (next_y - ay) / dx;
        out.knot_x.push_back(x[next]);
        out.knot_y.push_back(next_y);
        a = next;
        ay = next_y;
    }
    return out;
}

double taut_string_energy_free_end(std::span<const double> x, std::span<const double> lo,
                                   std::span<const double> hi, double start) {
    const std::size_t n = x.size();
    if (n < 2 || lo.size() != n || hi.size() != n) throw InputError("taut string needs matching arrays of length >= 2");
    const std::size_t m = 2 * n - 1;
    std::vector<double> mx(m), mlo(m), mhi(m);
    const double xe = x[n - 1];
    for (std::size_t i = 0; i < n; ++i) {
        mx[i] = x[i];
        mlo[i] = lo[i];
        mhi[i] = hi[i];
        mx[m - 1 - i] = 2.0 * xe - x[i];
        mlo[m - 1 - i] = lo[i];
        mhi[m - 1 - i] = hi[i];
    }
    return 0.5 * taut_string(mx, mlo, mhi, start, start).energy;
}

}  // namespace lilkit
