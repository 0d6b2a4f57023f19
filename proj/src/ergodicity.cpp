#include "lilkit/ergodicity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "lilkit/errors.hpp"
#include "lilkit/parallel.hpp"
#include "lilkit/transport.hpp"

namespace lilkit {

namespace {

struct Support {
    std::vector<Point> atoms;
    std::vector<double> mass;
};

Support positive_part(const EmpiricalMeasure& mu) {
    Support s;
    for (std::size_t i = 0; i < mu.size(); ++i)
        if (mu.weight(i) > 0.0) {
            s.atoms.push_back(mu.atom(i));
            s.mass.push_back(mu.weight(i));
        }
    return s;
}

double transport_value(const FMProblem& p, std::size_t lp_budget, double cap) {
    p.metric.validate();
    if (p.mu1.atom(0).y.size() != p.mu2.atom(0).y.size()) throw InputError("measures differ in dimension");
    const Support a = positive_part(p.mu1);
    const Support b = positive_part(p.mu2);
    if (a.atoms.size() + b.atoms.size() > lp_budget)
        throw BudgetError(fmt::format("combined support {} exceeds the LP budget {}",
                                      a.atoms.size() + b.atoms.size(), lp_budget));
    std::vector<double> cost(a.atoms.size() * b.atoms.size());
    for (std::size_t i = 0; i < a.atoms.size(); ++i)
        for (std::size_t j = 0; j < b.atoms.size(); ++j)
            cost[i * b.atoms.size() + j] = std::min(rho_c(a.atoms[i], b.atoms[j], p.metric), cap);
    auto order = [](const std::vector<Point>& pts) {
        std::vector<std::size_t> idx(pts.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t u, std::size_t v) {
            if (pts[u].mode != pts[v].mode) return pts[u].mode < pts[v].mode;
            return pts[u].y[0] < pts[v].y[0];
        });
        return idx;
    };
    return std::max(0.0, solve_transport(a.mass, b.mass, cost, order(a.atoms), order(b.atoms)).cost);
}

}  // namespace

double fm_distance(const FMProblem& p, std::size_t lp_budget) {
    return std::min(2.0, transport_value(p, lp_budget, 2.0));
}

double lipschitz_transport(const FMProblem& p, std::size_t lp_budget) {
    return transport_value(p, lp_budget, std::numeric_limits<double>::infinity());
}

double fm_distance_bruteforce(const FMProblem& p) {
    p.metric.validate();
    std::vector<Point> support;
    std::vector<double> mass;
    auto add = [&](const EmpiricalMeasure& mu, double sign) {
        for (std::size_t i = 0; i < mu.size(); ++i) {
            auto it = std::find(support.begin(), support.end(), mu.atom(i));
            if (it == support.end()) {
                support.push_back(mu.atom(i));
                mass.push_back(sign * mu.weight(i));
            } else {
                mass[static_cast<std::size_t>(it - support.begin())] += sign * mu.weight(i);
            }
        }
    };
    add(p.mu1, 1.0);
    add(p.mu2, -1.0);
    const std::size_t k = support.size();
    if (k > 4) throw InputError("brute-force oracle accepts at most four distinct atoms");

    // Constraint rows a·f <= b.
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    for (std::size_t z = 0; z < k; ++z) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<long>(k));
        e[static_cast<long>(z)] = 1.0;
        rows.push_back(e);
        rhs.push_back(1.0);
        rows.push_back(-e);
        rhs.push_back(1.0);
    }
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) {
            if (a == b) continue;
            Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<long>(k));
            e[static_cast<long>(a)] = 1.0;
            e[static_cast<long>(b)] = -1.0;
            rows.push_back(e);
            rhs.push_back(rho_c(support[a], support[b], p.metric));
        }
    const Eigen::Map<const Eigen::VectorXd> objective(mass.data(), static_cast<long>(k));

    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> pick(k);
    auto feasible = [&](const Eigen::VectorXd& f) {
        for (std::size_t r = 0; r < rows.size(); ++r)
            if (rows[r].dot(f) > rhs[r] + 1e-10) return false;
        return true;
    };
    auto recurse = [&](auto&& self, std::size_t depth, std::size_t start) -> void {
        if (depth == k) {
            Eigen::MatrixXd a(static_cast<long>(k), static_cast<long>(k));
            Eigen::VectorXd b(static_cast<long>(k));
            for (std::size_t r = 0; r < k; ++r) {
                a.row(static_cast<long>(r)) = rows[pick[r]].transpose();
                b[static_cast<long>(r)] = rhs[pick[r]];
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
            if (lu.rank() < static_cast<long>(k)) return;
            const Eigen::VectorXd f = lu.solve(b);
            if (feasible(f)) best = std::max(best, objective.dot(f));
            return;
        }
        for (std::size_t r = start; r < rows.size(); ++r) {
            pick[depth] = r;
            self(self, depth + 1, r + 1);
        }
    };
    recurse(recurse, 0, 0);
    return std::max(0.0, best);
}

SubsampledDistance fm_distance_subsampled(const FMProblem& p, std::size_t lp_budget,
                                          std::size_t replicates, const RngStream& rng,
                                          int workers, double confidence) {
    if (replicates < 2) throw InputError("subsampled distance needs at least two replicates");
    const std::size_t m = std::max<std::size_t>(1, lp_budget / 2);
    std::vector<double> values(replicates);
    parallel_for(replicates, workers, [&](std::size_t r) {
        RngStream s = rng.child(r);
        FMProblem sub{stratified_resample(p.mu1, std::min(m, p.mu1.size()), s),
                      stratified_resample(p.mu2, std::min(m, p.mu2.size()), s), p.metric};
        values[r] = fm_distance(sub, lp_budget);
    });
    SubsampledDistance out;
    out.estimate = compensated_sum(values) / static_cast<double>(replicates);
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const double alpha = 0.5 * (1.0 - confidence);
    auto at = [&](double q) {
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    out.ci = {at(alpha), at(1.0 - alpha)};
    out.subsample_size = m;
    out.replicates = replicates;
    return out;
}

TwoSampleTest fm_two_sample_test(std::span<const Point> a, std::span<const Point> b,
                                 const MetricSpec& metric, std::size_t block_size,
                                 const RngStream& rng, int workers, double z) {
    if (block_size == 0) throw InputError("block size must be positive");
    const std::size_t blocks = std::min(a.size(), b.size()) / block_size;
    if (blocks < 2) throw InputError("two-sample test needs at least two blocks");
    std::vector<double> observed(blocks), relabelled(blocks);
    parallel_for(blocks, workers, [&](std::size_t k) {
        std::vector<Point> pa(a.begin() + static_cast<long>(k * block_size),
                              a.begin() + static_cast<long>((k + 1) * block_size));
        std::vector<Point> pb(b.begin() + static_cast<long>(k * block_size),
                              b.begin() + static_cast<long>((k + 1) * block_size));
        observed[k] = fm_distance({EmpiricalMeasure::uniform(pa), EmpiricalMeasure::uniform(pb), metric},
                                  2 * block_size);
        std::vector<Point> pool = pa;
        pool.insert(pool.end(), pb.begin(), pb.end());
        RngStream s = rng.child(k);
        for (std::size_t i = pool.size() - 1; i > 0; --i) std::swap(pool[i], pool[s.below(i + 1)]);
        std::vector<Point> qa(pool.begin(), pool.begin() + static_cast<long>(block_size));
        std::vector<Point> qb(pool.begin() + static_cast<long>(block_size), pool.end());
        relabelled[k] = fm_distance({EmpiricalMeasure::uniform(qa), EmpiricalMeasure::uniform(qb), metric},
                                    2 * block_size);
    });
    RunningStats diff;
    for (std::size_t k = 0; k < blocks; ++k) diff.add(observed[k] - relabelled[k]);
    TwoSampleTest out;
    out.statistic = compensated_sum(observed) / static_cast<double>(blocks);
    out.null_mean = compensated_sum(relabelled) / static_cast<double>(blocks);
    out.stderr = diff.stderr_of_mean();
    out.blocks = blocks;
    out.pass = diff.mean() <= z * out.stderr;
    return out;
}

EmpiricalMeasure invariant_estimate(const Kernel& k, const Point& start, std::size_t burn_in,
                                    std::size_t n_keep, std::size_t thinning, RngStream rng) {
    if (n_keep == 0 || thinning == 0) throw InputError("n_keep and thinning must be positive");
    Point x = start;
    for (std::size_t t = 0; t < burn_in; ++t) x = k.step(x, rng);
    std::vector<Point> kept;
    kept.reserve(n_keep);
    for (std::size_t i = 0; i < n_keep; ++i) {
        for (std::size_t t = 0; t < thinning; ++t) x = k.step(x, rng);
        kept.push_back(x);
    }
    return EmpiricalMeasure::uniform(std::move(kept));
}

ConvergenceCheck invariant_convergence(const Kernel& k, const Point& start_a, const Point& start_b,
                                       std::size_t burn_in, std::size_t n_keep, std::size_t thinning,
                                       const MetricSpec& metric, const RngStream& rng,
                                       std::size_t lp_budget) {
    if (n_keep < 4) throw InputError("convergence check needs at least four kept states");
    const EmpiricalMeasure a = invariant_estimate(k, start_a, burn_in, n_keep, thinning, rng.child(0));
    const EmpiricalMeasure b = invariant_estimate(k, start_b, burn_in, n_keep, thinning, rng.child(1));
    // Compare at most lp_budget/2 atoms per side, taken as evenly spaced states.
    auto thin = [&](std::span<const Point> atoms, std::size_t from, std::size_t count) {
        const std::size_t m = std::min(count, lp_budget / 2);
        std::vector<Point> out;
        for (std::size_t i = 0; i < m; ++i) out.push_back(atoms[from + i * count / m]);
        return EmpiricalMeasure::uniform(std::move(out));
    };
    const std::size_t half = n_keep / 2;
    ConvergenceCheck out;
    out.distance = fm_distance({thin(a.atoms(), 0, n_keep), thin(b.atoms(), 0, n_keep), metric}, lp_budget);
    const double split_a = fm_distance({thin(a.atoms(), 0, half), thin(a.atoms(), half, half), metric}, lp_budget);
    const double split_b = fm_distance({thin(b.atoms(), 0, half), thin(b.atoms(), half, half), metric}, lp_budget);
    // Halves carry half the states, so their distance overstates the full-run noise by about √2.
    const double full_size = static_cast<double>(std::min(n_keep, lp_budget / 2));
    const double half_size = static_cast<double>(std::min(half, lp_budget / 2));
    out.noise_level = 0.5 * (split_a + split_b) * std::sqrt(half_size / full_size);
    out.tolerance = 3.0 * out.noise_level;
    out.converged = out.distance <= out.tolerance;
    return out;
}

DecayFit fit_exponential_decay(std::vector<DecayPoint> points, const DecayFitOptions& opt) {
    DecayFit fit;
    std::vector<double> xs, ys;
    for (auto& pt : points) {
        pt.used_in_fit = pt.value > opt.floor && pt.value <= opt.ceiling;
        if (pt.used_in_fit) {
            xs.push_back(static_cast<double>(pt.n));
            ys.push_back(std::log(pt.value));
        }
    }
    fit.points = std::move(points);
    fit.fit_points = xs.size();
    if (xs.size() < std::max<std::size_t>(opt.min_points, 3)) return fit;
    Eigen::MatrixXd x(static_cast<long>(xs.size()), 2);
    Eigen::VectorXd y(static_cast<long>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        x(static_cast<long>(i), 0) = 1.0;
        x(static_cast<long>(i), 1) = xs[i];
        y[static_cast<long>(i)] = ys[i];
    }
    const LinearFit lf = weighted_least_squares(x, y, Eigen::VectorXd::Ones(y.size()), false);
    const double t = student_t_quantile(lf.df, 0.5 + 0.5 * opt.confidence);
    const double slope_se = std::sqrt(std::max(0.0, lf.cov(1, 1)));
    fit.log_intercept = lf.coef[0];
    fit.log_intercept_stderr = std::sqrt(std::max(0.0, lf.cov(0, 0)));
    fit.rate = std::exp(lf.coef[1]);
    fit.rate_ci = {std::exp(lf.coef[1] - t * slope_se), std::exp(lf.coef[1] + t * slope_se)};
    fit.r_squared = lf.r_squared;
    fit.conclusive = fit.r_squared >= opt.r_squared_floor;
    fit.pass = fit.conclusive && fit.rate_ci.hi < 1.0;
    return fit;
}

DecayFit ergodic_decay(const Kernel& k, const Point& x, const Point& y,
                       std::span<const std::size_t> n_grid, std::size_t n_traj,
                       const MetricSpec& metric, const RngStream& rng,
                       const ErgodicDecayOptions& opt) {
    if (n_grid.empty()) throw InputError("empty n grid");
    for (std::size_t i = 1; i < n_grid.size(); ++i)
        if (n_grid[i] <= n_grid[i - 1]) throw InputError("n grid must be increasing");
    if (n_traj < 2) throw InputError("ergodic_decay needs at least two trajectories");
    const std::size_t g = n_grid.size();
    std::vector<std::vector<Point>> xs(g, std::vector<Point>(n_traj)), ys(g, std::vector<Point>(n_traj));
    parallel_for(n_traj, opt.workers, [&](std::size_t j) {
        RngStream rx = rng.child(j);
        RngStream ry = rx;
        Point px = x, py = y;
        std::size_t step = 0;
        for (std::size_t gi = 0; gi < g; ++gi) {
            for (; step < n_grid[gi]; ++step) {
                px = k.step(px, rx);
                py = k.step(py, ry);
            }
            xs[gi][j] = px;
            ys[gi][j] = py;
        }
    });

    const std::size_t reps = opt.bootstrap;
    std::vector<double> value(g);
    std::vector<double> boot(g * reps);
    const RngStream boot_rng = rng.child(n_traj);
    parallel_for(g * (reps + 1), opt.workers, [&](std::size_t task) {
        const std::size_t gi = task / (reps + 1);
        const std::size_t r = task % (reps + 1);
        std::vector<double> w(n_traj, 1.0 / static_cast<double>(n_traj));
        if (r > 0) {
            std::fill(w.begin(), w.end(), 0.0);
            RngStream s = boot_rng.child(gi * reps + r);
            for (std::size_t i = 0; i < n_traj; ++i) w[s.below(n_traj)] += 1.0 / static_cast<double>(n_traj);
            const double total = compensated_sum(w);
            for (double& wi : w) wi /= total;
        }
        const double d = fm_distance({EmpiricalMeasure(xs[gi], w), EmpiricalMeasure(ys[gi], w), metric},
                                     opt.lp_budget);
        if (r == 0)
            value[gi] = d;
        else
            boot[gi * reps + r - 1] = d;
    });

    const double z = two_sided_z(opt.fit.confidence);
    std::vector<DecayPoint> points(g);
    for (std::size_t gi = 0; gi < g; ++gi) {
        RunningStats s;
        for (std::size_t r = 0; r < reps; ++r) s.add(boot[gi * reps + r]);
        const double se = reps > 1 ? std::sqrt(s.variance()) : 0.0;
        points[gi] = {n_grid[gi], value[gi], std::max(0.0, value[gi] - z * se), value[gi] + z * se, false};
    }
    return fit_exponential_decay(std::move(points), opt.fit);
}

}  // namespace lilkit
