#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace lilkit {

/// Neumaier compensated summation.
class CompensatedSum {
  public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double compensated_sum(std::span<const double> xs) noexcept;

/// Welford accumulator. The mean of identical values is exact.
class RunningStats {
  public:
    void add(double x) noexcept {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double stderr_of_mean() const noexcept {
        return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }

  private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
    bool overlaps(const Interval& o) const noexcept { return lo <= o.hi && o.lo <= hi; }
};

/// A point estimate with its standard error and a two-sided confidence interval.
struct Estimate {
    double value = 0.0;
    double stderr = 0.0;
    Interval ci{};
};

/// Standard normal quantile.
double normal_quantile(double p);
/// Student-t quantile with df degrees of freedom.
double student_t_quantile(double df, double p);
/// z such that a symmetric normal interval has the given coverage.
double two_sided_z(double confidence);

Estimate mean_estimate(std::span<const double> xs, double confidence = 0.95);
Estimate make_estimate(double value, double stderr, double confidence = 0.95);

struct LinearFit {
    Eigen::VectorXd coef;
    Eigen::MatrixXd cov;
    double r_squared = 0.0;
    double residual_variance = 0.0;
    int df = 0;
};

/// Weighted least squares. With known_variance the weights are inverse
/// variances and the covariance is (X'WX)^{-1}; otherwise it is scaled by the
/// residual variance.
LinearFit weighted_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w, bool known_variance);

/// Ordinary least squares with heteroscedasticity-robust (HC0) covariance.
LinearFit ols_robust(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

}  // namespace lilkit
