#include "lilkit/coupling.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "lilkit/errors.hpp"
#include "lilkit/parallel.hpp"
#include "lilkit/quadrature.hpp"

namespace lilkit {

namespace {

constexpr double kRatioSlack = 1e-9;

double ynorm(const GeneModelSpec& m, const StateVector& v) { return norm(v, m.metric.norm); }

double lyapunov(const GeneModelSpec& m, const Point& p) { return ynorm(m, p.y - m.y_bar); }

/// m(θ) = min{p(z1,θ), p(z2,θ)}, restricted to Θ(z1, z2) when requested.
double overlap_density(const CouplingSpec& c, const StateVector& z1, const StateVector& z2, double th) {
    const GeneModelSpec& m = c.model;
    if (c.overlap == OverlapSet::restricted) {
        const double spread = ynorm(m, m.jumps.map(th, z1) - m.jumps.map(th, z2));
        if (spread > m.declared.L_w * ynorm(m, z1 - z2)) return 0.0;
    }
    return std::min(m.density.pdf(z1, th), m.density.pdf(z2, th));
}

double checked_ratio(double num, double den) {
    if (den <= 0.0) return 0.0;
    const double r = num / den;
    if (!(r >= 0.0 && r <= 1.0 + kRatioSlack))
        throw ConstructionError(fmt::format("coupling acceptance ratio {} outside [0, 1]", r));
    return r;
}

Estimate proportion(std::size_t hits, std::size_t n, double confidence) {
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    return make_estimate(p, std::sqrt(p * (1.0 - p) / static_cast<double>(n)), confidence);
}

}  // namespace

void CouplingSpec::validate() const {
    model.validate();
    if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("γ must lie in (0, 1)");
    if (!(Gamma > 0.0)) throw InputError("Γ must be positive");
    if (!(beta > 0.0 && beta <= 1.0)) throw InputError("β must lie in (0, 1]");
    if (!(c_beta > 0.0)) throw InputError("c_β must be positive");
    if (delta_target < 0.0 || delta_target >= 1.0) throw InputError("declared δ must lie in [0, 1)");
}

bool CouplingSpec::F(const Point& x, const Point& y) const { return in_F ? in_F(x, y) : x.mode == y.mode; }

CouplingSpec make_coupling(GeneModelSpec model, double gamma, double Gamma) {
    CouplingSpec c;
    c.model = std::move(model);
    c.gamma = gamma;
    c.Gamma = Gamma;
    c.validate();
    return c;
}

double default_threshold(double a, double b) {
    if (!(a < 1.0)) throw InputError("drift slope must be below 1");
    return 4.0 * b / (1.0 - a);
}

CoupledState coupled_step(const CouplingSpec& c, const CoupledState& s, RngStream& rng) {
    const GeneModelSpec& m = c.model;
    if (!c.F(s.first, s.second)) {
        CoupledState out;
        out.first = sample_post_jump(m, s.first, rng);
        out.second = sample_post_jump(m, s.second, rng);
        out.last_branch = Branch::R;
        return out;
    }
    const int mode1 = s.first.mode, mode2 = s.second.mode;
    const double dtau = sample_holding_time(m, rng);
    const StateVector h = sample_noise(m, rng);
    const StateVector z1 = m.flows.flow(mode1, dtau, s.first.y);
    const StateVector z2 = m.flows.flow(mode2, dtau, s.second.y);

    // θ: maximal coupling over the overlap density, residual by rejection.
    const double th1 = sample_theta(m, z1, rng);
    const double acc = checked_ratio(overlap_density(c, z1, z2, th1), m.density.pdf(z1, th1));
    double th2 = th1;
    bool theta_shared = rng.uniform() < acc;
    if (!theta_shared) {
        bool done = false;
        for (std::size_t attempt = 0; attempt < m.max_rejections; ++attempt) {
            const double cand = sample_theta(m, z2, rng);
            const double keep = 1.0 - checked_ratio(overlap_density(c, z1, z2, cand), m.density.pdf(z2, cand));
            if (rng.uniform() < keep) {
                th2 = cand;
                done = true;
                break;
            }
        }
        if (!done) throw SamplingError("residual θ sampler exhausted its attempts");
    }
    const StateVector y1 = m.jumps.map(th1, z1) + h;
    const StateVector y2 = m.jumps.map(th2, z2) + h;

    // j: maximal coupling of the two switching rows.
    const int n = m.switching.n_modes;
    const int j1 = sample_mode(m, y1, mode1, rng);
    const double p1 = m.switching.prob(y1, mode1, j1);
    const double jacc = checked_ratio(std::min(p1, m.switching.prob(y2, mode2, j1)), p1);
    int j2 = j1;
    bool j_shared = rng.uniform() < jacc;
    if (!j_shared) {
        std::vector<double> resid(static_cast<std::size_t>(n));
        double total = 0.0;
        for (int j = 1; j <= n; ++j) {
            const double q2 = m.switching.prob(y2, mode2, j);
            const double r = std::max(0.0, q2 - std::min(m.switching.prob(y1, mode1, j), q2));
            resid[static_cast<std::size_t>(j - 1)] = r;
            total += r;
        }
        if (!(total > 0.0)) throw ConstructionError("empty residual switching row");
        const double u = rng.uniform() * total;
        double cum = 0.0;
        j2 = n;
        for (int j = 1; j <= n; ++j) {
            cum += resid[static_cast<std::size_t>(j - 1)];
            if (u < cum) {
                j2 = j;
                break;
            }
        }
    }
    CoupledState out{{y1, j1}, {y2, j2}, theta_shared && j_shared ? Branch::Q : Branch::R};
    return out;
}

double q_branch_mass(const CouplingSpec& c, const Point& x, const Point& y) {
    const GeneModelSpec& m = c.model;
    auto inner = [&](double t) {
        const StateVector z1 = m.flows.flow(x.mode, t, x.y);
        const StateVector z2 = m.flows.flow(y.mode, t, y.y);
        auto f = [&](double th) { return overlap_density(c, z1, z2, th); };
        double s = 0.0;
        if (c.overlap == OverlapSet::restricted) {
            const double dz = ynorm(m, z1 - z2);
            auto margin = [&](double th) {
                return ynorm(m, m.jumps.map(th, z1) - m.jumps.map(th, z2)) - m.declared.L_w * dz;
            };
            for (auto [a, b] : sublevel_intervals(margin, m.jumps.theta_lo, m.jumps.theta_hi))
                s += integrate(f, a, b).value;
        } else {
            s = integrate(f, m.jumps.theta_lo, m.jumps.theta_hi).value;
        }
        return s;
    };
    const double mass = integrate_exponential_time(inner, m.lambda, INFINITY, 1e-10, 10).value;
    if (!(mass >= 0.0 && mass <= 1.0 + kRatioSlack))
        throw ConstructionError(fmt::format("overlap mass {} outside [0, 1]", mass));
    return mass;
}

double q_branch_contraction(const CouplingSpec& c, const Point& x, const Point& y) {
    const GeneModelSpec& m = c.model;
    const double d0 = rho_c(x, y, m.metric);
    if (d0 == 0.0) return 0.0;
    auto inner = [&](double t) {
        const StateVector z1 = m.flows.flow(x.mode, t, x.y);
        const StateVector z2 = m.flows.flow(y.mode, t, y.y);
        auto f = [&](double th) {
            return overlap_density(c, z1, z2, th) * ynorm(m, m.jumps.map(th, z1) - m.jumps.map(th, z2));
        };
        if (c.overlap == OverlapSet::restricted) {
            const double dz = ynorm(m, z1 - z2);
            auto margin = [&](double th) {
                return ynorm(m, m.jumps.map(th, z1) - m.jumps.map(th, z2)) - m.declared.L_w * dz;
            };
            double s = 0.0;
            for (auto [a, b] : sublevel_intervals(margin, m.jumps.theta_lo, m.jumps.theta_hi))
                s += integrate(f, a, b).value;
            return s;
        }
        return integrate(f, m.jumps.theta_lo, m.jumps.theta_hi).value;
    };
    return integrate_exponential_time(inner, m.lambda, INFINITY, 1e-10, 10).value / d0;
}

CouplingDiagnostics estimate_B_constants(const CouplingSpec& c, std::span<const std::pair<Point, Point>> start_pairs,
                                         std::size_t n_traj, const RngStream& rng, const CouplingOptions& opt) {
    c.validate();
    if (n_traj < 100) throw InputError("coupling diagnostics need at least 100 trajectories");
    if (opt.horizon < 1) throw InputError("horizon must be positive");
    const GeneModelSpec& m = c.model;
    CouplingDiagnostics out;
    out.gamma = c.gamma;
    out.Gamma = c.Gamma;
    out.horizon = opt.horizon;
    out.conclusive = true;

    for (std::size_t p = 0; p < start_pairs.size(); ++p) {
        const auto& [x, y] = start_pairs[p];
        PairDiagnostics d;
        d.x = x;
        d.y = y;
        d.in_F = c.F(x, y);
        d.in_start_set = lyapunov(m, x) + lyapunov(m, y) < c.Gamma;
        const double d0 = rho_c(x, y, m.metric);
        if (d.in_F && d0 > 0.0) d.delta_quadrature = q_branch_contraction(c, x, y);
        d.delta_used = c.delta_target > 0.0 ? c.delta_target : d.delta_quadrature;
        d.r_bound = c.c_beta * std::pow(d0, c.beta);

        struct Traj {
            double first_ratio = 0.0;
            bool first_q = false;
            bool first_in_u = false;
            bool q_in_F = true;
            std::size_t rho = 0;
        };
        std::vector<Traj> res(n_traj);
        const RngStream pair_rng = rng.child(p);
        parallel_for(n_traj, opt.workers, [&](std::size_t j) {
            RngStream s = pair_rng.child(j);
            CoupledState st{x, y, Branch::none};
            Traj& t = res[j];
            for (std::size_t n = 1; n <= opt.horizon; ++n) {
                st = coupled_step(c, st, s);
                if (st.last_branch == Branch::Q && !c.F(st.first, st.second)) t.q_in_F = false;
                if (n == 1 && d.in_F) {
                    t.first_q = st.last_branch == Branch::Q;
                    if (t.first_q && d0 > 0.0) {
                        const double r1 = rho_c(st.first, st.second, m.metric);
                        t.first_ratio = r1 / d0;
                        t.first_in_u = r1 <= d.delta_used * d0;
                    }
                }
                if (c.F(st.first, st.second) && lyapunov(m, st.first) + lyapunov(m, st.second) < c.Gamma) {
                    t.rho = n;
                    break;
                }
            }
        });

        RunningStats ratio, moment;
        std::size_t q_hits = 0, u_hits = 0;
        for (const Traj& t : res) {
            ratio.add(t.first_q ? t.first_ratio : 0.0);
            q_hits += t.first_q ? 1 : 0;
            u_hits += t.first_in_u ? 1 : 0;
            d.q_support_in_F = d.q_support_in_F && t.q_in_F;
            if (t.rho == 0) {
                ++d.not_hit;
            } else {
                d.rho_samples.push_back(t.rho);
                moment.add(std::pow(c.gamma, -static_cast<double>(t.rho)));
            }
        }
        d.contraction = make_estimate(ratio.mean(), ratio.stderr_of_mean(), opt.confidence);
        d.u_hit_rate = proportion(u_hits, n_traj, opt.confidence);
        d.r_frequency = d.in_F ? proportion(n_traj - q_hits, n_traj, opt.confidence) : Estimate{1.0, 0.0, {1.0, 1.0}};
        d.gamma_moment = make_estimate(moment.mean(), moment.stderr_of_mean(), opt.confidence);
        const double hit_rate = static_cast<double>(n_traj - d.not_hit) / static_cast<double>(n_traj);
        d.conclusive = hit_rate >= opt.hit_floor;
        out.conclusive = out.conclusive && d.conclusive;
        out.pairs.push_back(std::move(d));
    }
    return out;
}

CoupledDecay coupled_decay(const CouplingSpec& c, const TestFunction& g, const std::pair<Point, Point>& start,
                           std::span<const std::size_t> n_grid, std::size_t n_traj, const RngStream& rng,
                           int workers, const DecayFitOptions& fit) {
    c.validate();
    if (n_grid.empty()) throw InputError("empty n grid");
    for (std::size_t i = 1; i < n_grid.size(); ++i)
        if (n_grid[i] <= n_grid[i - 1]) throw InputError("n grid must be increasing");
    if (n_traj < 100) throw InputError("coupled decay needs at least 100 trajectories");
    const std::size_t G = n_grid.size();
    std::vector<double> diff(G * n_traj);
    parallel_for(n_traj, workers, [&](std::size_t j) {
        RngStream s = rng.child(j);
        CoupledState st{start.first, start.second, Branch::none};
        std::size_t step = 0;
        for (std::size_t gi = 0; gi < G; ++gi) {
            for (; step < n_grid[gi]; ++step) st = coupled_step(c, st, s);
            diff[gi * n_traj + j] = std::abs(g(st.first) - g(st.second));
        }
    });
    const double z = two_sided_z(fit.confidence);
    std::vector<DecayPoint> points(G);
    std::vector<double> se(G);
    for (std::size_t gi = 0; gi < G; ++gi) {
        RunningStats s;
        for (std::size_t j = 0; j < n_traj; ++j) s.add(diff[gi * n_traj + j]);
        se[gi] = s.stderr_of_mean();
        points[gi] = {n_grid[gi], s.mean(), std::max(0.0, s.mean() - z * se[gi]), s.mean() + z * se[gi], false};
    }
    CoupledDecay out;
    for (std::size_t a = 0; a < G; ++a)
        for (std::size_t b = a + 1; b < G; ++b)
            if (points[b].value - points[a].value > z * std::hypot(se[a], se[b])) out.increase_detected = true;
    out.fit = fit_exponential_decay(std::move(points), fit);
    return out;
}

}  // namespace lilkit
