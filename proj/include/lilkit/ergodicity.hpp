#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lilkit/kernel.hpp"
#include "lilkit/space.hpp"
#include "lilkit/stats.hpp"

namespace lilkit {

struct FMProblem {
    EmpiricalMeasure mu1;
    EmpiricalMeasure mu2;
    MetricSpec metric;
};

inline constexpr std::size_t kDefaultLpBudget = 2000;

/// Exact Fortet–Mourier distance between two empirical measures.
///
/// The LP over f on the union support (|f| <= 1, |f(z) - f(z')| <= rho_c) is
/// solved through its transport dual with cost min(rho_c, 2).
double fm_distance(const FMProblem& p, std::size_t lp_budget = kDefaultLpBudget);

/// Vertex enumeration of the primal LP; at most four distinct atoms.
double fm_distance_bruteforce(const FMProblem& p);

/// Transport value with the untruncated cost rho_c (Lipschitz constraint only).
double lipschitz_transport(const FMProblem& p, std::size_t lp_budget = kDefaultLpBudget);

struct SubsampledDistance {
    double estimate = 0.0;
    Interval ci{};
    std::size_t subsample_size = 0;
    std::size_t replicates = 0;
};

/// For supports beyond the LP budget: stratified subsamples of each measure
/// to budget/2 atoms; percentile CI over bootstrap replicates.
SubsampledDistance fm_distance_subsampled(const FMProblem& p, std::size_t lp_budget,
                                          std::size_t replicates, const RngStream& rng,
                                          int workers = 1, double confidence = 0.95);

struct TwoSampleTest {
    double statistic = 0.0;   ///< mean block distance between the two samples
    double null_mean = 0.0;   ///< mean block distance after random relabelling
    double stderr = 0.0;      ///< stderr of the paired block difference
    std::size_t blocks = 0;
    bool pass = false;        ///< statistic - null_mean <= z·stderr
};

/// Paired block test of equality in law: each block of the two samples is
/// compared with d_FM, and against a random relabelling of the pooled block.
/// The relabelling null assumes exchangeable samples, so pass independent
/// draws (e.g. the time-t states of independent replicate chains), not
/// consecutive states of one chain.
TwoSampleTest fm_two_sample_test(std::span<const Point> a, std::span<const Point> b,
                                 const MetricSpec& metric, std::size_t block_size,
                                 const RngStream& rng, int workers = 1, double z = 3.0);

/// Empirical measure of a thinned trajectory after burn-in.
EmpiricalMeasure invariant_estimate(const Kernel& k, const Point& start, std::size_t burn_in,
                                    std::size_t n_keep, std::size_t thinning, RngStream rng);

struct ConvergenceCheck {
    double distance = 0.0;
    double noise_level = 0.0;  ///< from split halves of each run
    double tolerance = 0.0;    ///< 3 × noise level
    bool converged = false;
};

/// Two runs from distant starts compared in d_FM against their within-run noise.
ConvergenceCheck invariant_convergence(const Kernel& k, const Point& start_a, const Point& start_b,
                                       std::size_t burn_in, std::size_t n_keep, std::size_t thinning,
                                       const MetricSpec& metric, const RngStream& rng,
                                       std::size_t lp_budget = kDefaultLpBudget);

struct DecayPoint {
    std::size_t n = 0;
    double value = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool used_in_fit = false;
};

struct DecayFit {
    std::vector<DecayPoint> points;
    double log_intercept = 0.0;  ///< ln ĉ
    double log_intercept_stderr = 0.0;
    double rate = 0.0;           ///< q̂
    Interval rate_ci{};
    double r_squared = 0.0;
    std::size_t fit_points = 0;
    bool conclusive = false;
    bool pass = false;           ///< conclusive and the upper CI of q̂ below 1
};

struct DecayFitOptions {
    double floor = 1e-10;       ///< values at or below are not fitted
    double ceiling = 1.0;       ///< values above are treated as saturated
    double r_squared_floor = 0.9;
    double confidence = 0.95;
    std::size_t min_points = 3;
};

/// Least-squares fit of ln value = ln c + n ln q over the usable points.
DecayFit fit_exponential_decay(std::vector<DecayPoint> points, const DecayFitOptions& opt = {});

struct ErgodicDecayOptions {
    std::size_t bootstrap = 10;
    std::size_t lp_budget = kDefaultLpBudget;
    int workers = 1;
    DecayFitOptions fit{};
};

/// d_FM(P^n δ_x, P^n δ_y) on the grid. Trajectory j from x and from y uses the
/// same random stream, so the two empirical measures share their noise and the
/// estimate decays smoothly instead of stalling at the sampling floor.
DecayFit ergodic_decay(const Kernel& k, const Point& x, const Point& y,
                       std::span<const std::size_t> n_grid, std::size_t n_traj,
                       const MetricSpec& metric, const RngStream& rng,
                       const ErgodicDecayOptions& opt = {});

}  // namespace lilkit
