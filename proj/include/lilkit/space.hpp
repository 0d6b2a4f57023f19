#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>

namespace lilkit {

inline constexpr std::size_t kMaxDimension = 4;

/// Fixed-capacity real vector for the continuous part of a state.
class StateVector {
  public:
    StateVector() = default;
    explicit StateVector(std::size_t dim, double fill = 0.0);
    StateVector(std::initializer_list<double> values);

    std::size_t size() const noexcept { return dim_; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    const double* begin() const noexcept { return data_.data(); }
    const double* end() const noexcept { return data_.data() + dim_; }
    double* begin() noexcept { return data_.data(); }
    double* end() noexcept { return data_.data() + dim_; }

    friend bool operator==(const StateVector& a, const StateVector& b) noexcept;

  private:
    std::array<double, kMaxDimension> data_{};
    std::size_t dim_ = 1;
};

StateVector operator+(StateVector a, const StateVector& b);
StateVector operator-(StateVector a, const StateVector& b);
StateVector operator*(double s, StateVector a);

/// A state (y, i): continuous part plus a 1-based discrete mode.
struct Point {
    StateVector y;
    int mode = 1;

    friend bool operator==(const Point& a, const Point& b) noexcept {
        return a.mode == b.mode && a.y == b.y;
    }
};

Point make_point(double y, int mode = 1);

enum class VectorNorm { euclidean, max };

double norm(const StateVector& v, VectorNorm kind);
double vector_distance(const StateVector& a, const StateVector& b, VectorNorm kind);

/// The coupled metric: ‖y1 - y2‖ + mode_weight·[i1 != i2].
struct MetricSpec {
    double mode_weight = 1.0;
    VectorNorm norm = VectorNorm::euclidean;

    void validate() const;
};

double rho_c(const Point& p, const Point& q, const MetricSpec& m);

/// V(p) = ‖p.y - ȳ‖ around a reference point.
struct LyapunovSpec {
    Point reference;
    VectorNorm norm = VectorNorm::euclidean;

    double operator()(const Point& p) const;
};

/// A real function on X with declared Lipschitz and sup bounds.
/// sup_bound may be +inf for unbounded oracle functions.
struct TestFunction {
    std::string label;
    std::function<double(const Point&)> eval;
    double lip_bound = 0.0;
    double sup_bound = 0.0;

    double operator()(const Point& p) const { return eval(p); }
};

/// max(lip_bound, sup_bound).
double bl_norm(const TestFunction& f);

struct BoundCheck {
    std::size_t pairs_checked = 0;
    double worst_lip_ratio = 0.0;
    double worst_abs_value = 0.0;
    bool ok = true;
};

/// Checks the declared bounds on every pair of the given points.
BoundCheck certify_bounds(const TestFunction& f, const MetricSpec& m,
                          std::span<const Point> points, double rel_tol = 1e-12);

namespace functions {
TestFunction zero();
TestFunction constant(double c);
/// g(y, i) = y[0]; Lipschitz 1, unbounded.
TestFunction coordinate();
/// g(y, i) = min(max(y[0], lo), hi).
TestFunction clamp(double lo, double hi);
/// g(y, i) = tanh(y[0]).
TestFunction tanh_coordinate();
/// g(y, i) = [i == mode]; Lipschitz constant 1/mode_weight.
TestFunction mode_indicator(int mode, const MetricSpec& m);
}  // namespace functions

}  // namespace lilkit
