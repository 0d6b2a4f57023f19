#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "lilkit/ergodicity.hpp"
#include "lilkit/kernel.hpp"
#include "lilkit/rng.hpp"
#include "lilkit/space.hpp"
#include "lilkit/stats.hpp"

namespace lilkit {

/// ḡ = g - ⟨g, μ̂*⟩ together with the centering estimate.
struct CenteredFunction {
    TestFunction gbar;
    Estimate mean;  ///< ⟨g, μ̂*⟩; stderr from batch means over the atom order
};

/// Centers g against an empirical invariant measure. When `exact` is set the
/// measure is taken as the true invariant law and the stderr is zero.
CenteredFunction center_g(const TestFunction& g, const EmpiricalMeasure& mu_star, bool exact = false,
                          double confidence = 0.95);

/// Geometric tail |U^i ḡ(x)| <= c̃ s(ḡ) q^i (1 + ϱ(x, x̄)), with s = ‖ḡ‖_BL
/// when ḡ is bounded and |ḡ|_Lip otherwise.
struct TailParams {
    double c_tilde = 0.0;
    double q = 0.0;
};

/// Tail parameters from a decay fit started at (x, y): c̃ = ĉ_upper (1 + ⟨V, μ*⟩)
/// / (1 + V(x) + V(y)) and q = upper CI of q̂.
TailParams tail_from_decay(const DecayFit& fit, double v_sum_start, double mean_v_star, double confidence = 0.95);

struct ChiApprox {
    TestFunction gbar;
    Estimate mean_estimate;
    std::size_t truncation_N = 0;
    std::size_t inner_samples = 1000;
    TailParams tail{};
    Point x_bar;
    MetricSpec metric{};

    /// c̃ s(ḡ) q^{N+1} / (1 - q) · (1 + ϱ(x, x̄)).
    double tail_bound(const Point& x) const;
};

/// Smallest N whose tail bound at x̄ is below tol. Zero when c̃ = 0.
std::size_t choose_truncation(const TestFunction& gbar, const TailParams& tail, double tol,
                              std::size_t max_N = 1000);

struct ChiValue {
    double value = 0.0;
    double stderr = 0.0;
    double tail_bound = 0.0;
};

/// Σ_{i=0}^{N} Û^i ḡ(x): inner trajectory j from x uses rng.child(j), so the
/// same rng gives a smooth random approximation across x.
ChiValue chi_eval(const Kernel& k, const ChiApprox& chi, const Point& x, const RngStream& rng);

/// Interpolated χ on a per-mode grid over the first coordinate (d = 1), with
/// direct evaluation outside the grid or for d > 1.
class ChiTable {
  public:
    ChiTable(const Kernel& k, ChiApprox chi, double y_lo, double y_hi, std::size_t nodes, int n_modes,
             const RngStream& rng, int workers = 1);

    double operator()(const Point& x) const;
    double max_stderr() const noexcept { return max_se_; }
    const ChiApprox& approx() const noexcept { return chi_; }

  private:
    const Kernel* kernel_;
    ChiApprox chi_;
    RngStream rng_;
    double lo_, hi_;
    std::size_t nodes_;
    int n_modes_;
    std::vector<double> values_;  ///< mode-major
    double max_se_ = 0.0;
};

using ChiFunction = std::function<double(const Point&)>;

/// χ evaluated directly with a fixed rng.
ChiFunction direct_chi(const Kernel& k, const ChiApprox& chi, const RngStream& rng);

struct MartingaleSeries {
    std::vector<Point> trajectory;  ///< may be empty
    std::vector<double> M;          ///< M_0 .. M_n
    std::vector<double> Z;          ///< Z_1 .. Z_n, stored at 0 .. n-1
    std::vector<double> gbar;       ///< ḡ(φ_0) .. ḡ(φ_n)
    std::vector<double> tail;       ///< χ tail bound at φ_0 .. φ_n (empty when not tracked)

    std::size_t length() const noexcept { return Z.size(); }
};

/// M_k = χ(φ_k) - χ(φ_0) + Σ_{i<k} ḡ(φ_i) and Z_k = M_k - M_{k-1}.
MartingaleSeries martingale_series(std::span<const Point> traj, const ChiFunction& chi, const TestFunction& gbar,
                                   const std::function<double(const Point&)>& tail = {}, bool keep_trajectory = false);

enum class PathKind { r, eta, eta_tilde };

/// Piecewise-linear path on [0, 1].
struct LILPath {
    std::vector<double> t;
    std::vector<double> values;
    PathKind kind = PathKind::r;
    std::size_t n = 0;
    double sigma_used = 0.0;

    double at(double s) const;
};

/// σ√(2n ln ln n), or 0 when n <= e.
double lil_norm(double sigma, std::size_t n);

struct PathSet {
    LILPath r;
    LILPath eta;
    LILPath eta_tilde;
    std::size_t monotone_from = 0;  ///< first index of the strictly increasing tail of h_n²
};

struct PathOptions {
    /// Sign of the interpolation term in η̃. +1 interpolates M linearly; -1
    /// reproduces the printed form with a jump of 2Z_{k+1} at every node.
    int eta_tilde_sign = +1;
};

/// r_n, η_n, η̃_n on the shared grid of nodes k/n and midpoints (k+1/2)/n.
/// hn2 holds h_0² .. h_n².
PathSet build_paths(const MartingaleSeries& s, double sigma_hat, std::span<const double> hn2,
                    const PathOptions& opt = {});

/// r_n evaluated at t = k/n for k = 0 .. n only.
LILPath r_path(std::span<const double> gbar_values, double sigma_hat);

/// r̂_n = Σ_{i=1}^{n} ḡ(φ_i) / (σ√(2n ln ln n)).
double r_hat(std::span<const double> gbar_values, std::size_t n, double sigma_hat);

/// Sup-norm distance from the path to the Strassen set, by bisection on d
/// with a taut-string feasibility check; the result is within tol above the
/// true distance.
double k_distance(const LILPath& path, double tol = 1e-7);

struct Sigma2Result {
    Estimate estimate;
    bool degenerate = false;  ///< CI reaches 0 although ḡ is not constant
};

/// Formula route: E_{μ̂*}[Uχ²(x) - (Uχ(x))²], each state contributing the
/// unbiased two-draw variance (χ(a) - χ(b))² / 2.
Sigma2Result sigma2_formula(const Kernel& k, const ChiFunction& chi, const EmpiricalMeasure& mu_star,
                            std::size_t n_states, const RngStream& rng, int workers = 1, double confidence = 0.95,
                            bool g_constant = false);

/// Average route: per-trajectory (1/n) Σ Z_l², averaged over trajectories.
Sigma2Result sigma2_average(std::span<const double> per_trajectory_means, double confidence = 0.95,
                            bool g_constant = false);

/// Streaming simulation of one trajectory with the running martingale.
struct StreamOptions {
    std::vector<std::size_t> checkpoints;   ///< record M_n, Σ Z², Σ ḡ at these n
    std::vector<std::size_t> path_lengths;  ///< record r_n node values for these n
    std::size_t path_nodes = 65536;
    std::size_t rhat_from = 0;              ///< track running extremes of r̂_n for n >= this (0: off)
    double sigma = 0.0;
    std::size_t keep_series = 0;            ///< keep the full series up to this n
    bool keep_trajectory = false;
};

struct Checkpoint {
    std::size_t n = 0;
    double M = 0.0;
    double qv = 0.0;         ///< Σ_{l<=n} Z_l²
    double sum_before = 0.0; ///< Σ_{i<n} ḡ(φ_i)
    double sum_after = 0.0;  ///< Σ_{1<=i<=n} ḡ(φ_i)
    double rhat_max = 0.0;   ///< running extremes over [rhat_from, n]
    double rhat_min = 0.0;
};

struct StreamResult {
    std::vector<Checkpoint> checkpoints;
    std::vector<LILPath> r_paths;
    MartingaleSeries series;
};

StreamResult stream_trajectory(const Kernel& k, const ChiFunction& chi, const TestFunction& gbar, const Point& start,
                               std::size_t n, const StreamOptions& opt, RngStream rng);

/// Runs n_traj streamed trajectories; trajectory j uses rng.child(j) and
/// starts from `start(j)`.
std::vector<StreamResult> run_ensemble(const Kernel& k, const ChiFunction& chi, const TestFunction& gbar,
                                       const std::function<Point(std::size_t)>& start, std::size_t n,
                                       std::size_t n_traj, const StreamOptions& opt, const RngStream& rng,
                                       int workers = 1);

/// h_n² from an ensemble of full series: the primary estimate is the mean of
/// Σ_{l<=n} Z_l² (equal to E M_n² by orthogonality of increments), the raw
/// one is the mean of M_n².
struct Hn2Curve {
    std::vector<double> qv;   ///< index 0 .. n
    std::vector<double> raw;
    std::size_t monotone_from = 0;
};

Hn2Curve hn2_curve(std::span<const MartingaleSeries> ensemble);

struct RegressionCheck {
    double intercept = 0.0;
    double intercept_se = 0.0;
    double slope = 0.0;
    double slope_se = 0.0;
    std::size_t samples = 0;
    bool pass = false;  ///< both coefficients within z·se of 0
};

/// Regression of Z_{k+1} on (1, b(φ_k)) over every step of every series with a
/// stored trajectory; HC0 standard errors.
RegressionCheck martingale_regression(std::span<const MartingaleSeries> ensemble,
                                      const std::function<double(const Point&)>& b, double z = 3.0);

struct IdentityCheck {
    Point x;
    double chi_x = 0.0;
    double chi_x_se = 0.0;
    double gbar_x = 0.0;
    Estimate u_chi;        ///< Uχ(x)
    double u_chi_gap = 0.0;  ///< Uχ(x) - (χ(x) - ḡ(x))
    double u_chi_tol = 0.0;
    bool u_chi_pass = false;
    Estimate ez2;          ///< E_x Z_1² from one sample of next states
    Estimate var_chi;      ///< Uχ²(x) - (Uχ(x))² from an independent sample
    double var_gap = 0.0;
    double var_tol = 0.0;
    bool var_pass = false;
};

/// Checks Uχ = χ - ḡ and E_x Z_1² = Uχ² - (Uχ)² at x. The tolerances add the
/// z-scaled Monte-Carlo error, the tail bound and the centering half-width.
IdentityCheck corrector_identities(const Kernel& k, const ChiApprox& chi, const Point& x, std::size_t n_outer,
                                   const RngStream& chi_rng, const RngStream& rng, double centering_halfwidth,
                                   double z = 3.0, int workers = 1);

struct SeriesFlatness {
    std::vector<std::size_t> n;
    std::vector<double> partial_sum;
    std::vector<double> relative_increment;  ///< over the dyadic block ending at n
    std::size_t flat_at = 0;                 ///< first dyadic n below the threshold (0: never)
};

struct DiagnosticsResult {
    std::vector<std::size_t> n_grid;
    std::vector<double> hn2_over_n;
    double hn2_limit = 0.0;             ///< h_n²/n at the largest n
    double sigma2_reference = 0.0;
    std::vector<double> qv_ratio;       ///< per trajectory (1/h_n²) Σ Z_l² at the largest n
    double qv_ratio_mean = 0.0;
    SeriesFlatness lil1;
    SeriesFlatness lil2;
    std::vector<double> m_grid;
    std::vector<double> cesaro;         ///< mean over trajectories of (1/n) Σ (Z_l² ∧ m)
    std::vector<double> cesaro_stationary;  ///< E_{μ̂*}(Z_1² ∧ m)
};

struct DiagnosticsOptions {
    double upsilon = 1.0;
    double vartheta = 1.0;
    std::vector<double> m_grid{1.0, 4.0, 16.0};
    double flat_threshold = 0.01;
};

/// Martingale-increment diagnostics from an ensemble of full series. z1_stationary
/// holds samples of Z_1 with φ_0 drawn from μ̂*.
DiagnosticsResult series_diagnostics(std::span<const MartingaleSeries> ensemble, const Hn2Curve& hn2,
                                     double sigma2_reference, std::span<const double> z1_stationary,
                                     const DiagnosticsOptions& opt = {});

/// Samples of Z_1 = χ(φ_1) - χ(φ_0) + ḡ(φ_0) with φ_0 ~ μ̂*.
std::vector<double> stationary_increments(const Kernel& k, const ChiFunction& chi, const TestFunction& gbar,
                                          const EmpiricalMeasure& mu_star, std::size_t n, const RngStream& rng,
                                          int workers = 1);

}  // namespace lilkit
