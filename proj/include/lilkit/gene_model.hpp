#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lilkit/kernel.hpp"
#include "lilkit/rng.hpp"
#include "lilkit/space.hpp"
#include "lilkit/stats.hpp"

namespace lilkit {

/// Semiflows S_i(t, y) for modes 1..n_modes with declared (A2) constants:
/// ‖S_i1(t,y1) - S_i2(t,y2)‖ <= L e^{αt}‖y1 - y2‖ + t 𝓛(y2) [i1 != i2].
struct FlowFamily {
    int n_modes = 1;
    std::function<StateVector(int mode, double t, const StateVector& y)> flow;
    std::function<double(const StateVector& y)> bound_map;
    double L = 1.0;
    double alpha = 0.0;
};

/// Jump maps w_θ(y) over a one-dimensional parameter interval Θ = [lo, hi].
struct JumpFamily {
    std::function<StateVector(double theta, const StateVector& y)> map;
    double theta_lo = 0.0;
    double theta_hi = 1.0;
};

/// Density p(y, θ) of θ given the pre-jump state. When inverse_cdf is set it
/// is used for sampling; otherwise rejection against `envelope` >= sup p.
struct JumpDensity {
    std::function<double(const StateVector& y, double theta)> pdf;
    std::function<double(const StateVector& y, double u)> inverse_cdf;
    double envelope = 1.0;
};

/// Switching probabilities π_ij(y), modes 1-based.
struct SwitchingMatrix {
    int n_modes = 1;
    std::function<double(const StateVector& y, int i, int j)> prob;
};

/// ν^ε: independent coordinates h_k ~ U[lo_k ε, hi_k ε]. The box must fit in
/// the closed ball B(0, ε) of the model norm.
struct NoiseSpec {
    enum class Kind { none, uniform_box };
    Kind kind = Kind::none;
    std::vector<double> lo_fraction;
    std::vector<double> hi_fraction;
};

/// Constants the model declares for (A1*)–(A5); the checkers validate them.
struct DeclaredConstants {
    double L_w = 0.0;
    double L_w_star = 0.0;
    double L_pi = 0.0;
    double L_p = 0.0;
    double delta_pi = 0.0;
    double delta_p = 0.0;
    /// Upper bound declared for the (A1*) supremum.
    double a1_bound = 1.0;
};

struct GeneModelSpec {
    std::string label = "gene";
    std::size_t dim = 1;
    double lambda = 1.0;
    FlowFamily flows;
    JumpFamily jumps;
    JumpDensity density;
    SwitchingMatrix switching;
    NoiseSpec noise;
    double epsilon = 0.0;
    double epsilon_star = 0.0;
    double r = 1.0;
    StateVector y_bar{0.0};
    MetricSpec metric{};
    DeclaredConstants declared{};
    /// Membership in the closed state set Y.
    std::function<bool(const StateVector&)> in_domain;
    /// Test points are drawn with radii up to horizon_factor·ε around ȳ.
    double horizon_factor = 1e3;
    std::size_t max_rejections = 10000;

    void validate() const;
    double test_horizon() const;
};

/// Parameters of the linear-decay family used by the reference instance and
/// by configuration files: S_i(t,y) = y e^{-a_i t}, w_θ(y) = θy on Θ = [0,1]
/// with p(θ) = (k+1)θ^k, constant switching rows, uniform noise on [0, ε].
struct LinearGeneParams {
    double lambda = 1.0;
    std::vector<double> decay_rates{1.0, 2.0};
    /// Exponent k of the jump density (k + 1)θ^k; 0 gives the uniform density.
    double density_power = 0.0;
    /// Replace the jump maps by w_θ ≡ 0.
    bool zero_jump = false;
    /// Row-stochastic constant switching matrix; empty means uniform rows.
    std::vector<std::vector<double>> switching;
    double epsilon = 0.1;
    double epsilon_star = 0.2;
    double r = 1.0;
    double mode_weight = 1.0;
};

GeneModelSpec linear_gene_model(const LinearGeneParams& p);

/// λ = 1, a = (1, 2), uniform θ on [0,1], uniform switching, ε = 0.1,
/// ε* = 0.2, r = 1.
GeneModelSpec reference_instance();

struct JumpDraw {
    double dtau = 0.0;
    double theta = 0.0;
    StateVector h;
    int next_mode = 1;
    StateVector pre_jump;  ///< z = S_i(Δτ, y)
};

double sample_holding_time(const GeneModelSpec& m, RngStream& rng);
double sample_theta(const GeneModelSpec& m, const StateVector& z, RngStream& rng);
StateVector sample_noise(const GeneModelSpec& m, RngStream& rng);
int sample_mode(const GeneModelSpec& m, const StateVector& y, int mode, RngStream& rng);

/// One step of the post-jump chain; draws Δτ, θ, h, j in that order.
Point sample_post_jump(const GeneModelSpec& m, const Point& state, RngStream& rng);

Kernel gene_kernel(const GeneModelSpec& m);

enum class ConditionName { A1_star, A2, A3, A3_star, A4_pi, A4_p, A5_pi, A5_p };

std::string to_string(ConditionName c);

/// One row of a condition report. margin > 0 iff the condition passes; for
/// upper bounds margin = declared + tolerance - value, for lower bounds
/// margin = value - declared + tolerance.
struct ConditionEntry {
    std::string name;
    double value = 0.0;
    Interval ci{};
    double declared = 0.0;
    double margin = 0.0;
    bool pass = false;
    std::size_t samples = 0;
    std::string note;
};

struct ConditionOptions {
    std::size_t sample_budget = 2000;
    double tolerance = 1e-9;
    double confidence = 0.95;
};

ConditionEntry check_condition_A(const GeneModelSpec& m, ConditionName which,
                                 const ConditionOptions& opt, const RngStream& rng);

/// LL_w + α/λ and its margin against 1.
ConditionEntry balance_condition(const GeneModelSpec& m);
/// L^{2+r}L_w* + (2+r)α/λ and its margin against 1.
ConditionEntry lil_condition(const GeneModelSpec& m);

/// a* = λL_w*L^{2+r}/(λ - (2+r)α); NaN when the denominator is not positive.
double analytic_a_star(const GeneModelSpec& m);

struct ModeDrift {
    int mode = 1;
    Estimate slope;
    Estimate intercept;
    Estimate moment_slope;  ///< slope of the (2+r)-moment root regression
    Estimate moment_intercept;
    double r_squared = 0.0;
};

struct DriftConstants {
    Estimate a;        ///< largest per-mode slope of E[V(next) | state] on V(state)
    Estimate b;        ///< largest per-mode intercept
    Estimate a_star_mc;  ///< (2+r)-th power of the largest root-moment slope
    double a_star = 0.0;  ///< closed form
    double b_star = 0.0;  ///< (A1* supremum)^{1/(2+r)} + ε* + c̃
    std::vector<ModeDrift> per_mode;
    bool pass = false;  ///< upper CI of a below 1
};

struct DriftOptions {
    std::size_t sample_budget = 400000;
    std::size_t grid_points = 24;
    double confidence = 0.95;
    int workers = 1;
};

DriftConstants drift_constants(const GeneModelSpec& m, const DriftOptions& opt, const RngStream& rng);

struct ConditionReport {
    std::vector<ConditionEntry> entries;
    DriftConstants drift;
    double test_horizon = 0.0;
    bool all_pass = false;
};

ConditionReport certify_model(const GeneModelSpec& m, const ConditionOptions& copt,
                              const DriftOptions& dopt, const RngStream& rng);

}  // namespace lilkit
