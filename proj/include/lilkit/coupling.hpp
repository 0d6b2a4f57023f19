#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "lilkit/ergodicity.hpp"
#include "lilkit/gene_model.hpp"
#include "lilkit/rng.hpp"
#include "lilkit/space.hpp"
#include "lilkit/stats.hpp"

namespace lilkit {

/// Where the shared θ may be drawn from. `full` couples θ maximally over all
/// of Θ; `restricted` only over Θ(z1, z2) = {θ : ‖w_θ(z1) - w_θ(z2)‖ <= L_w‖z1 - z2‖}.
enum class OverlapSet { full, restricted };

struct CouplingSpec {
    GeneModelSpec model;
    /// Pairs on which the contractive part acts; defaults to equal modes.
    std::function<bool(const Point&, const Point&)> in_F;
    double gamma = 0.9;
    /// Threshold on V(x) + V(y) in the coupling time.
    double Gamma = 1.0;
    /// Declared δ; when 0 the quadrature value is used.
    double delta_target = 0.0;
    double beta = 1.0;
    double c_beta = 1.0;
    OverlapSet overlap = OverlapSet::full;

    void validate() const;
    bool F(const Point& x, const Point& y) const;
};

CouplingSpec make_coupling(GeneModelSpec model, double gamma, double Gamma);

/// 4b / (1 - a).
double default_threshold(double a, double b);

enum class Branch { none, Q, R };

struct CoupledState {
    Point first;
    Point second;
    Branch last_branch = Branch::none;
};

/// One step of the coupling. Each component is distributed exactly by the
/// post-jump kernel.
CoupledState coupled_step(const CouplingSpec& c, const CoupledState& s, RngStream& rng);

/// ∫ϱ(next) dQ / ϱ(x, y) by quadrature over (t, θ), for (x, y) in F with
/// state-independent switching.
double q_branch_contraction(const CouplingSpec& c, const Point& x, const Point& y);

/// Mass of the θ-overlap, ∫ λe^{-λt} ∫ m_t(θ) dθ dt.
double q_branch_mass(const CouplingSpec& c, const Point& x, const Point& y);

struct PairDiagnostics {
    Point x;
    Point y;
    bool in_F = false;
    bool in_start_set = false;  ///< V(x) + V(y) < Γ
    double delta_quadrature = 0.0;
    double delta_used = 0.0;
    Estimate contraction;       ///< E[ϱ(next)·1_Q] / ϱ(x, y) after one step
    Estimate u_hit_rate;        ///< P(Q-branch and ϱ(next) <= δϱ(x, y))
    Estimate r_frequency;       ///< P(R-branch)
    double r_bound = 0.0;       ///< c_β ϱ^β(x, y)
    bool q_support_in_F = true; ///< every Q-branch step landed in F
    std::vector<std::size_t> rho_samples;
    std::size_t not_hit = 0;
    Estimate gamma_moment;      ///< E[γ^{-ρ}] over trajectories that hit
    bool conclusive = false;
};

struct CouplingDiagnostics {
    std::vector<PairDiagnostics> pairs;
    double gamma = 0.0;
    double Gamma = 0.0;
    std::size_t horizon = 0;
    bool conclusive = false;
};

struct CouplingOptions {
    std::size_t horizon = 1000;
    double hit_floor = 1.0;  ///< required fraction of trajectories that reach ρ
    double confidence = 0.95;
    int workers = 1;
};

CouplingDiagnostics estimate_B_constants(const CouplingSpec& c,
                                         std::span<const std::pair<Point, Point>> start_pairs,
                                         std::size_t n_traj, const RngStream& rng,
                                         const CouplingOptions& opt = {});

struct CoupledDecay {
    DecayFit fit;
    bool increase_detected = false;  ///< a later point exceeds an earlier one beyond noise
};

/// E|g(φ¹_n) - g(φ²_n)| on the grid with a log-linear fit.
CoupledDecay coupled_decay(const CouplingSpec& c, const TestFunction& g, const std::pair<Point, Point>& start,
                           std::span<const std::size_t> n_grid, std::size_t n_traj, const RngStream& rng,
                           int workers = 1, const DecayFitOptions& fit = {});

}  // namespace lilkit
