#include "lilkit/stats.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "lilkit/errors.hpp"

namespace lilkit {

double compensated_sum(std::span<const double> xs) noexcept {
    CompensatedSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

double student_t_quantile(double df, double p) {
    return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

double two_sided_z(double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0)) throw InputError("confidence must be in (0,1)");
    return normal_quantile(0.5 + 0.5 * confidence);
}

Estimate make_estimate(double value, double stderr, double confidence) {
    const double z = two_sided_z(confidence);
    return {value, stderr, {value - z * stderr, value + z * stderr}};
}

Estimate mean_estimate(std::span<const double> xs, double confidence) {
    RunningStats s;
    for (double x : xs) s.add(x);
    return make_estimate(s.mean(), s.stderr_of_mean(), confidence);
}

LinearFit weighted_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w, bool known_variance) {
    const auto n = x.rows();
    const auto p = x.cols();
    if (y.size() != n || w.size() != n) throw InputError("regression shape mismatch");
    if (n < p) throw InputError("regression needs at least as many rows as columns");
    const Eigen::MatrixXd xtw = x.transpose() * w.asDiagonal();
    const Eigen::MatrixXd xtwx = xtw * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
    LinearFit fit;
    fit.coef = ldlt.solve(xtw * y);
    const Eigen::VectorXd resid = y - x * fit.coef;
    fit.df = static_cast<int>(n - p);
    const double rss = (resid.array().square() * w.array()).sum();
    fit.residual_variance = fit.df > 0 ? rss / fit.df : 0.0;
    const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    fit.cov = known_variance ? inv : inv * fit.residual_variance;
    const double wsum = w.sum();
    const double ybar = (w.array() * y.array()).sum() / wsum;
    const double tss = (w.array() * (y.array() - ybar).square()).sum();
    fit.r_squared = tss > 0.0 ? 1.0 - rss / tss : 1.0;
    return fit;
}

LinearFit ols_robust(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const auto n = x.rows();
    const auto p = x.cols();
    if (y.size() != n) throw InputError("regression shape mismatch");
    if (n <= p) throw InputError("regression needs more rows than columns");
    const Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    LinearFit fit;
    fit.coef = ldlt.solve(x.transpose() * y);
    const Eigen::VectorXd resid = y - x * fit.coef;
    fit.df = static_cast<int>(n - p);
    fit.residual_variance = resid.squaredNorm() / fit.df;
    const Eigen::MatrixXd meat = x.transpose() * resid.array().square().matrix().asDiagonal() * x;
    const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    fit.cov = inv * meat * inv;
    const double ybar = y.mean();
    const double tss = (y.array() - ybar).square().sum();
    fit.r_squared = tss > 0.0 ? 1.0 - resid.squaredNorm() / tss : 1.0;
    return fit;
}

}  // namespace lilkit
