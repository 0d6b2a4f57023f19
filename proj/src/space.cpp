#include "lilkit/space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "lilkit/errors.hpp"

namespace lilkit {

StateVector::StateVector(std::size_t dim, double fill) : dim_(dim) {
    if (dim == 0 || dim > kMaxDimension)
        throw InputError(fmt::format("state dimension {} outside [1, {}]", dim, kMaxDimension));
    std::fill(data_.begin(), data_.begin() + dim, fill);
}

StateVector::StateVector(std::initializer_list<double> values) : StateVector(values.size()) {
    std::copy(values.begin(), values.end(), data_.begin());
}

bool operator==(const StateVector& a, const StateVector& b) noexcept {
    return a.dim_ == b.dim_ && std::equal(a.begin(), a.end(), b.begin());
}

StateVector operator+(StateVector a, const StateVector& b) {
    if (a.size() != b.size()) throw InputError("dimension mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

StateVector operator-(StateVector a, const StateVector& b) {
    if (a.size() != b.size()) throw InputError("dimension mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    return a;
}

StateVector operator*(double s, StateVector a) {
    for (double& x : a) x *= s;
    return a;
}

Point make_point(double y, int mode) { return Point{StateVector{y}, mode}; }

double norm(const StateVector& v, VectorNorm kind) {
    if (v.size() == 1) return std::abs(v[0]);
    if (kind == VectorNorm::max) {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double vector_distance(const StateVector& a, const StateVector& b, VectorNorm kind) {
    if (a.size() != b.size()) throw InputError("dimension mismatch");
    return norm(a - b, kind);
}

void MetricSpec::validate() const {
    if (!(mode_weight >= 0.0) || !std::isfinite(mode_weight))
        throw InputError("mode_weight must be a finite nonnegative number");
}

double rho_c(const Point& p, const Point& q, const MetricSpec& m) {
    const double d = vector_distance(p.y, q.y, m.norm);
    return p.mode == q.mode ? d : d + m.mode_weight;
}

double LyapunovSpec::operator()(const Point& p) const {
    return vector_distance(p.y, reference.y, norm);
}

double bl_norm(const TestFunction& f) {
    if (f.lip_bound < 0.0 || f.sup_bound < 0.0) throw InputError("negative declared bound");
    return std::max(f.lip_bound, f.sup_bound);
}

BoundCheck certify_bounds(const TestFunction& f, const MetricSpec& m,
                          std::span<const Point> points, double rel_tol) {
    BoundCheck out;
    std::vector<double> values(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        values[i] = f(points[i]);
        out.worst_abs_value = std::max(out.worst_abs_value, std::abs(values[i]));
    }
    if (out.worst_abs_value > f.sup_bound * (1.0 + rel_tol)) out.ok = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            const double d = rho_c(points[i], points[j], m);
            const double diff = std::abs(values[i] - values[j]);
            ++out.pairs_checked;
            if (d > 0.0) {
                out.worst_lip_ratio = std::max(out.worst_lip_ratio, diff / d);
            } else if (diff > 0.0) {
                out.worst_lip_ratio = std::numeric_limits<double>::infinity();
            }
        }
    }
    if (out.worst_lip_ratio > f.lip_bound * (1.0 + rel_tol) + 1e-15) out.ok = false;
    return out;
}

namespace functions {

TestFunction zero() { return constant(0.0); }

TestFunction constant(double c) {
    return {fmt::format("constant({})", c), [c](const Point&) { return c; }, 0.0, std::abs(c)};
}

TestFunction coordinate() {
    return {"coordinate", [](const Point& p) { return p.y[0]; }, 1.0,
            std::numeric_limits<double>::infinity()};
}

TestFunction clamp(double lo, double hi) {
    if (!(lo <= hi)) throw InputError("clamp needs lo <= hi");
    return {fmt::format("clamp({}, {})", lo, hi),
            [lo, hi](const Point& p) { return std::min(std::max(p.y[0], lo), hi); }, 1.0,
            std::max(std::abs(lo), std::abs(hi))};
}

TestFunction tanh_coordinate() {
    return {"tanh", [](const Point& p) { return std::tanh(p.y[0]); }, 1.0, 1.0};
}

TestFunction mode_indicator(int mode, const MetricSpec& m) {
    const double lip = m.mode_weight > 0.0 ? 1.0 / m.mode_weight
                                           : std::numeric_limits<double>::infinity();
    return {fmt::format("mode_indicator({})", mode),
            [mode](const Point& p) { return p.mode == mode ? 1.0 : 0.0; }, lip, 1.0};
}

}  // namespace functions

}  // namespace lilkit
