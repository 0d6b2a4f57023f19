#include "lilkit/lil.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "lilkit/errors.hpp"
#include "lilkit/parallel.hpp"
#include "lilkit/taut_string.hpp"

namespace lilkit {

namespace {

double tail_scale(const TestFunction& g) {
    return std::isfinite(g.sup_bound) ? bl_norm(g) : g.lip_bound;
}

}  // namespace

CenteredFunction center_g(const TestFunction& g, const EmpiricalMeasure& mu_star, bool exact, double confidence) {
    const double mean = mu_star.expectation(g.eval);
    double se = 0.0;
    if (!exact) {
        const std::size_t n = mu_star.size();
        const std::size_t batches = n >= 100 ? 50 : (n >= 4 ? n / 2 : 0);
        if (batches >= 2) {
            RunningStats bm;
            for (std::size_t b = 0; b < batches; ++b) {
                const std::size_t lo = b * n / batches, hi = (b + 1) * n / batches;
                CompensatedSum ws, wg;
                for (std::size_t i = lo; i < hi; ++i) {
                    ws.add(mu_star.weight(i));
                    wg.add(mu_star.weight(i) * g(mu_star.atom(i)));
                }
                if (ws.value() > 0.0) bm.add(wg.value() / ws.value());
            }
            se = bm.stderr_of_mean();
        }
    }
    CenteredFunction out;
    out.mean = make_estimate(mean, se, confidence);
    out.gbar.label = g.label + " (centered)";
    out.gbar.eval = [f = g.eval, mean](const Point& x) { return f(x) - mean; };
    out.gbar.lip_bound = g.lip_bound;
    out.gbar.sup_bound = g.sup_bound + std::abs(mean);
    return out;
}

TailParams tail_from_decay(const DecayFit& fit, double v_sum_start, double mean_v_star, double confidence) {
    if (!fit.conclusive) throw TruncationError("tail parameters need a conclusive decay fit");
    const double z = two_sided_z(confidence);
    const double c_hat = std::exp(fit.log_intercept + z * fit.log_intercept_stderr);
    TailParams t;
    t.c_tilde = c_hat * (1.0 + mean_v_star) / (1.0 + v_sum_start);
    t.q = fit.rate_ci.hi;
    return t;
}

double ChiApprox::tail_bound(const Point& x) const {
    if (tail.c_tilde == 0.0) return 0.0;
    return tail.c_tilde * tail_scale(gbar) * std::pow(tail.q, static_cast<double>(truncation_N + 1)) /
           (1.0 - tail.q) * (1.0 + rho_c(x, x_bar, metric));
}

std::size_t choose_truncation(const TestFunction& gbar, const TailParams& tail, double tol, std::size_t max_N) {
    if (tail.c_tilde == 0.0) return 0;
    if (!(tail.q > 0.0 && tail.q < 1.0)) throw TruncationError(fmt::format("tail rate {} is not in (0, 1)", tail.q));
    if (!(tol > 0.0)) throw InputError("truncation tolerance must be positive");
    const double scale = tail.c_tilde * tail_scale(gbar) / (1.0 - tail.q);
    double qn = tail.q;
    for (std::size_t N = 0; N <= max_N; ++N) {
        if (scale * qn <= tol) return N;
        qn *= tail.q;
    }
    throw TruncationError(fmt::format("tail bound stays above {} up to N = {}", tol, max_N));
}

ChiValue chi_eval(const Kernel& k, const ChiApprox& chi, const Point& x, const RngStream& rng) {
    ChiValue out;
    out.tail_bound = chi.tail_bound(x);
    if (chi.truncation_N == 0) {
        out.value = chi.gbar(x);
        return out;
    }
    if (chi.inner_samples < 2) throw InputError("χ needs at least two inner samples");
    RunningStats s;
    for (std::size_t j = 0; j < chi.inner_samples; ++j) {
        RngStream r = rng.child(j);
        Point p = x;
        double sum = chi.gbar(p);
        for (std::size_t i = 1; i <= chi.truncation_N; ++i) {
            p = k.step(p, r);
            sum += chi.gbar(p);
        }
        s.add(sum);
    }
    out.value = s.mean();
    out.stderr = s.stderr_of_mean();
    return out;
}

ChiTable::ChiTable(const Kernel& k, ChiApprox chi, double y_lo, double y_hi, std::size_t nodes, int n_modes,
                   const RngStream& rng, int workers)
    : kernel_(&k), chi_(std::move(chi)), rng_(rng), lo_(y_lo), hi_(y_hi), nodes_(nodes), n_modes_(n_modes) {
    if (nodes_ < 2 || !(hi_ > lo_) || n_modes_ < 1) throw InputError("χ table needs a nonempty grid");
    values_.resize(nodes_ * static_cast<std::size_t>(n_modes_));
    std::vector<double> se(values_.size());
    parallel_for(values_.size(), workers, [&](std::size_t idx) {
        const int mode = 1 + static_cast<int>(idx / nodes_);
        const double y = lo_ + (hi_ - lo_) * static_cast<double>(idx % nodes_) / static_cast<double>(nodes_ - 1);
        const ChiValue v = chi_eval(*kernel_, chi_, make_point(y, mode), rng_);
        values_[idx] = v.value;
        se[idx] = v.stderr;
    });
    for (double s : se) max_se_ = std::max(max_se_, s);
}

double ChiTable::operator()(const Point& x) const {
    if (x.y.size() != 1 || x.mode < 1 || x.mode > n_modes_ || x.y[0] < lo_ || x.y[0] > hi_)
        return chi_eval(*kernel_, chi_, x, rng_).value;
    const double pos = (x.y[0] - lo_) / (hi_ - lo_) * static_cast<double>(nodes_ - 1);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(pos), nodes_ - 2);
    const double f = pos - static_cast<double>(i);
    const double* v = values_.data() + static_cast<std::size_t>(x.mode - 1) * nodes_;
    return v[i] + f * (v[i + 1] - v[i]);
}

ChiFunction direct_chi(const Kernel& k, const ChiApprox& chi, const RngStream& rng) {
    if (chi.truncation_N == 0) return chi.gbar.eval;
    return [k, chi, rng](const Point& x) { return chi_eval(k, chi, x, rng).value; };
}

MartingaleSeries martingale_series(std::span<const Point> traj, const ChiFunction& chi, const TestFunction& gbar,
                                   const std::function<double(const Point&)>& tail, bool keep_trajectory) {
    if (traj.empty()) throw InputError("martingale series needs a trajectory of length >= 1");
    const std::size_t n = traj.size() - 1;
    MartingaleSeries s;
    s.M.resize(n + 1);
    s.Z.resize(n);
    s.gbar.resize(n + 1);
    if (tail) s.tail.resize(n + 1);
    if (keep_trajectory) s.trajectory.assign(traj.begin(), traj.end());
    const double c0 = chi(traj[0]);
    CompensatedSum sum;
    s.M[0] = 0.0;
    s.gbar[0] = gbar(traj[0]);
    if (tail) s.tail[0] = tail(traj[0]);
    for (std::size_t k = 1; k <= n; ++k) {
        sum.add(s.gbar[k - 1]);
        s.gbar[k] = gbar(traj[k]);
        s.M[k] = (chi(traj[k]) - c0) + sum.value();
        s.Z[k - 1] = s.M[k] - s.M[k - 1];
        if (tail) s.tail[k] = tail(traj[k]);
    }
    return s;
}

double LILPath::at(double s) const {
    if (t.empty()) return 0.0;
    if (s <= t.front()) return values.front();
    if (s >= t.back()) return values.back();
    const auto it = std::upper_bound(t.begin(), t.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - t.begin());
    const double f = (s - t[i - 1]) / (t[i] - t[i - 1]);
    return values[i - 1] + f * (values[i] - values[i - 1]);
}

double lil_norm(double sigma, std::size_t n) {
    const double nd = static_cast<double>(n);
    if (!(nd > std::exp(1.0))) return 0.0;
    return sigma * std::sqrt(2.0 * nd * std::log(std::log(nd)));
}

PathSet build_paths(const MartingaleSeries& s, double sigma_hat, std::span<const double> hn2, const PathOptions& opt) {
    const std::size_t n = s.length();
    if (!(sigma_hat > 0.0)) throw PathError("paths need a positive σ");
    if (hn2.size() != n + 1) throw PathError("h_n² curve must cover 0..n");
    if (opt.eta_tilde_sign != 1 && opt.eta_tilde_sign != -1) throw InputError("η̃ sign must be ±1");
    PathSet out;
    std::size_t last_bad = 0;
    bool any_bad = false;
    for (std::size_t i = 0; i + 1 <= n; ++i)
        if (!(hn2[i + 1] > hn2[i])) {
            last_bad = i;
            any_bad = true;
        }
    out.monotone_from = any_bad ? last_bad + 1 : 0;
    if (n > 0 && out.monotone_from > n / 2) throw PathError("h_n² curve has no strictly increasing tail");

    const std::size_t m = 2 * n + 1;
    std::vector<double> t(m);
    for (std::size_t i = 0; i < m; ++i) t[i] = n == 0 ? 0.0 : 0.5 * static_cast<double>(i) / static_cast<double>(n);
    auto init = [&](LILPath& p, PathKind kind) {
        p.t = t;
        p.values.assign(m, 0.0);
        p.kind = kind;
        p.n = n;
        p.sigma_used = sigma_hat;
    };
    init(out.r, PathKind::r);
    init(out.eta, PathKind::eta);
    init(out.eta_tilde, PathKind::eta_tilde);
    const double nrm = lil_norm(sigma_hat, n);
    if (nrm == 0.0) return out;

    CompensatedSum sum;
    const double sign = opt.eta_tilde_sign;
    for (std::size_t k = 0; k < n; ++k) {
        const double sk = sum.value();
        out.r.values[2 * k] = sk / nrm;
        out.r.values[2 * k + 1] = (sk + 0.5 * s.gbar[k]) / nrm;
        out.eta_tilde.values[2 * k] = s.M[k] / nrm;
        out.eta_tilde.values[2 * k + 1] = (s.M[k] + sign * 0.5 * s.Z[k]) / nrm;
        sum.add(s.gbar[k]);
    }
    out.r.values[2 * n] = sum.value() / nrm;
    out.eta_tilde.values[2 * n] = s.M[n] / nrm;
    out.r.values[0] = 0.0;
    out.eta_tilde.values[0] = 0.0;

    // η on the h²-time scale, searched on the running maximum of the curve.
    std::vector<double> cm(hn2.begin(), hn2.end());
    for (std::size_t i = 1; i < cm.size(); ++i) cm[i] = std::max(cm[i], cm[i - 1]);
    const double hn = cm[n];
    for (std::size_t i = 1; i < m; ++i) {
        const double target = hn * t[i];
        auto it = std::upper_bound(cm.begin(), cm.end(), target);
        std::size_t k = it == cm.begin() ? 0 : static_cast<std::size_t>(it - cm.begin()) - 1;
        if (k >= n) k = n - 1;
        const double span = cm[k + 1] - cm[k];
        const double frac = span > 0.0 ? std::clamp((target - cm[k]) / span, 0.0, 1.0) : 0.0;
        out.eta.values[i] = (s.M[k] + frac * s.Z[k]) / nrm;
    }
    return out;
}

LILPath r_path(std::span<const double> gbar_values, double sigma_hat) {
    if (gbar_values.empty()) throw InputError("r path needs at least one value");
    const std::size_t n = gbar_values.size() - 1;
    LILPath p;
    p.kind = PathKind::r;
    p.n = n;
    p.sigma_used = sigma_hat;
    p.t.resize(n + 1);
    p.values.assign(n + 1, 0.0);
    const double nrm = lil_norm(sigma_hat, n);
    CompensatedSum sum;
    for (std::size_t k = 0; k <= n; ++k) {
        p.t[k] = n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n);
        if (nrm > 0.0) p.values[k] = sum.value() / nrm;
        if (k < n) sum.add(gbar_values[k]);
    }
    return p;
}

double r_hat(std::span<const double> gbar_values, std::size_t n, double sigma_hat) {
    if (gbar_values.size() < n + 1) throw InputError("r̂ needs ḡ(φ_1)..ḡ(φ_n)");
    const double nrm = lil_norm(sigma_hat, n);
    if (nrm == 0.0) return 0.0;
    return compensated_sum(gbar_values.subspan(1, n)) / nrm;
}

double k_distance(const LILPath& path, double tol) {
    if (!(tol > 0.0)) throw InputError("k_distance tolerance must be positive");
    const std::size_t m = path.t.size();
    if (m < 2 || path.values.size() != m) throw InputError("k_distance needs a path with at least two points");
    double lo = std::abs(path.values.front());
    double hi = lo;
    for (double v : path.values) hi = std::max(hi, std::abs(v));
    if (hi == 0.0) return 0.0;
    std::vector<double> tl(m), th(m);
    auto feasible = [&](double d) {
        for (std::size_t i = 0; i < m; ++i) {
            tl[i] = path.values[i] - d;
            th[i] = path.values[i] + d;
        }
        return taut_string_energy_free_end(path.t, tl, th, 0.0) <= 1.0 + 1e-12;
    };
    if (feasible(lo)) return lo;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (feasible(mid))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

Sigma2Result sigma2_formula(const Kernel& k, const ChiFunction& chi, const EmpiricalMeasure& mu_star,
                            std::size_t n_states, const RngStream& rng, int workers, double confidence,
                            bool g_constant) {
    if (n_states < 2) throw InputError("σ² formula route needs at least two states");
    std::vector<double> v(n_states);
    parallel_for(n_states, workers, [&](std::size_t i) {
        RngStream s = rng.child(i);
        const Point& x = mu_star.sample(s);
        const Point a = k.step(x, s);
        const Point b = k.step(x, s);
        const double d = chi(a) - chi(b);
        v[i] = 0.5 * d * d;
    });
    Sigma2Result out;
    out.estimate = mean_estimate(v, confidence);
    out.degenerate = !g_constant && out.estimate.ci.lo <= 0.0;
    return out;
}

Sigma2Result sigma2_average(std::span<const double> per_trajectory_means, double confidence, bool g_constant) {
    if (per_trajectory_means.size() < 2) throw InputError("σ² average route needs at least two trajectories");
    Sigma2Result out;
    out.estimate = mean_estimate(per_trajectory_means, confidence);
    out.degenerate = !g_constant && out.estimate.ci.lo <= 0.0;
    return out;
}

StreamResult stream_trajectory(const Kernel& k, const ChiFunction& chi, const TestFunction& gbar, const Point& start,
                               std::size_t n, const StreamOptions& opt, RngStream rng) {
    StreamResult out;
    std::vector<std::size_t> cps = opt.checkpoints;
    std::sort(cps.begin(), cps.end());
    cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
    while (!cps.empty() && cps.back() > n) cps.pop_back();

    // Path node requests: (index, path, slot).
    struct Node {
        std::size_t index, path, slot;
    };
    std::vector<Node> nodes;
    for (std::size_t p = 0; p < opt.path_lengths.size(); ++p) {
        const std::size_t L = opt.path_lengths[p];
        if (L > n || L < 1) throw InputError("path length outside the trajectory");
        if (!(opt.sigma > 0.0)) throw PathError("paths need a positive σ");
        const std::size_t G = std::min(L, opt.path_nodes);
        LILPath path;
        path.kind = PathKind::r;
        path.n = L;
        path.sigma_used = opt.sigma;
        path.t.resize(G + 1);
        path.values.assign(G + 1, 0.0);
        for (std::size_t j = 0; j <= G; ++j) {
            const std::size_t kj = static_cast<std::size_t>(
                std::llround(static_cast<double>(j) * static_cast<double>(L) / static_cast<double>(G)));
            path.t[j] = static_cast<double>(kj) / static_cast<double>(L);
            nodes.push_back({kj, p, j});
        }
        out.r_paths.push_back(std::move(path));
    }
    std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.index < b.index; });

    const std::size_t keep = std::min(opt.keep_series, n);
    if (opt.keep_series > 0) {
        out.series.M.assign(keep + 1, 0.0);
        out.series.Z.assign(keep, 0.0);
        out.series.gbar.assign(keep + 1, 0.0);
        if (opt.keep_trajectory) out.series.trajectory.reserve(keep + 1);
    }

    Point phi = start;
    const double c0 = chi(phi);
    double g_prev = gbar(phi);
    CompensatedSum sum_before, sum_after, qv;
    double m_prev = 0.0;
    double rmax = -std::numeric_limits<double>::infinity(), rmin = std::numeric_limits<double>::infinity();
    std::size_t ci = 0, ni = 0;
    auto record_nodes = [&](std::size_t idx, double s_before) {
        while (ni < nodes.size() && nodes[ni].index == idx) {
            const Node& nd = nodes[ni];
            const double nrm = lil_norm(opt.sigma, out.r_paths[nd.path].n);
            out.r_paths[nd.path].values[nd.slot] = nrm > 0.0 ? s_before / nrm : 0.0;
            ++ni;
        }
    };
    if (opt.keep_series > 0) {
        out.series.gbar[0] = g_prev;
        if (opt.keep_trajectory) out.series.trajectory.push_back(phi);
    }
    record_nodes(0, 0.0);
    while (ci < cps.size() && cps[ci] == 0) out.checkpoints.push_back({0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}), ++ci;

    for (std::size_t step = 1; step <= n; ++step) {
        sum_before.add(g_prev);
        phi = k.step(phi, rng);
        const double g = gbar(phi);
        const double m = (chi(phi) - c0) + sum_before.value();
        const double z = m - m_prev;
        qv.add(z * z);
        sum_after.add(g);
        if (opt.rhat_from > 0 && step >= opt.rhat_from) {
            const double nrm = lil_norm(opt.sigma, step);
            if (nrm > 0.0) {
                const double rh = sum_after.value() / nrm;
                rmax = std::max(rmax, rh);
                rmin = std::min(rmin, rh);
            }
        }
        if (step <= keep) {
            out.series.M[step] = m;
            out.series.Z[step - 1] = z;
            out.series.gbar[step] = g;
            if (opt.keep_trajectory) out.series.trajectory.push_back(phi);
        }
        record_nodes(step, sum_before.value());
        while (ci < cps.size() && cps[ci] == step) {
            out.checkpoints.push_back({step, m, qv.value(), sum_before.value(), sum_after.value(),
                                       std::isfinite(rmax) ? rmax : 0.0, std::isfinite(rmin) ? rmin : 0.0});
            ++ci;
        }
        m_prev = m;
        g_prev = g;
    }
    return out;
}

std::vector<StreamResult> run_ensemble(const Kernel& k, const ChiFunction& chi, const TestFunction& gbar,
                                       const std::function<Point(std::size_t)>& start, std::size_t n,
                                       std::size_t n_traj, const StreamOptions& opt, const RngStream& rng,
                                       int workers) {
    std::vector<StreamResult> out(n_traj);
    parallel_for(n_traj, workers, [&](std::size_t j) {
        out[j] = stream_trajectory(k, chi, gbar, start(j), n, opt, rng.child(j));
    });
    return out;
}

Hn2Curve hn2_curve(std::span<const MartingaleSeries> ensemble) {
    if (ensemble.empty()) throw InputError("h_n² needs a nonempty ensemble");
    const std::size_t n = ensemble.front().length();
    for (const auto& s : ensemble)
        if (s.length() != n) throw InputError("ensemble series differ in length");
    Hn2Curve c;
    std::vector<CompensatedSum> qv(n + 1), raw(n + 1);
    for (const auto& s : ensemble) {
        CompensatedSum run;
        for (std::size_t i = 0; i <= n; ++i) {
            if (i > 0) run.add(s.Z[i - 1] * s.Z[i - 1]);
            qv[i].add(run.value());
            raw[i].add(s.M[i] * s.M[i]);
        }
    }
    const double inv = 1.0 / static_cast<double>(ensemble.size());
    c.qv.resize(n + 1);
    c.raw.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        c.qv[i] = qv[i].value() * inv;
        c.raw[i] = raw[i].value() * inv;
    }
    c.monotone_from = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (!(c.qv[i + 1] > c.qv[i])) c.monotone_from = i + 1;
    return c;
}

RegressionCheck martingale_regression(std::span<const MartingaleSeries> ensemble,
                                      const std::function<double(const Point&)>& b, double z) {
    std::size_t rows = 0;
    for (const auto& s : ensemble)
        if (s.trajectory.size() == s.length() + 1) rows += s.length();
    if (rows < 3) throw InputError("martingale regression needs stored trajectories");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows), 2);
    Eigen::VectorXd Y(static_cast<Eigen::Index>(rows));
    Eigen::Index r = 0;
    for (const auto& s : ensemble) {
        if (s.trajectory.size() != s.length() + 1) continue;
        for (std::size_t k = 0; k < s.length(); ++k, ++r) {
            X(r, 0) = 1.0;
            X(r, 1) = b(s.trajectory[k]);
            Y(r) = s.Z[k];
        }
    }
    const LinearFit fit = ols_robust(X, Y);
    RegressionCheck out;
    out.samples = rows;
    out.intercept = fit.coef(0);
    out.slope = fit.coef(1);
    out.intercept_se = std::sqrt(std::max(0.0, fit.cov(0, 0)));
    out.slope_se = std::sqrt(std::max(0.0, fit.cov(1, 1)));
    out.pass = std::abs(out.intercept) <= z * out.intercept_se && std::abs(out.slope) <= z * out.slope_se;
    return out;
}

IdentityCheck corrector_identities(const Kernel& k, const ChiApprox& chi, const Point& x, std::size_t n_outer,
                                   const RngStream& chi_rng, const RngStream& rng, double centering_halfwidth,
                                   double z, int workers) {
    if (n_outer < 10) throw InputError("identity checks need at least ten outer samples");
    IdentityCheck out;
    out.x = x;
    const ChiValue cx = chi_eval(k, chi, x, chi_rng);
    out.chi_x = cx.value;
    out.chi_x_se = cx.stderr;
    out.gbar_x = chi.gbar(x);

    auto next_chi = [&](const RngStream& base) {
        std::vector<double> v(n_outer);
        parallel_for(n_outer, workers, [&](std::size_t i) {
            RngStream s = base.child(i);
            v[i] = chi_eval(k, chi, k.step(x, s), chi_rng).value;
        });
        return v;
    };
    const std::vector<double> a = next_chi(rng.child(0));
    const std::vector<double> b = next_chi(rng.child(1));

    out.u_chi = mean_estimate(a);
    out.u_chi_gap = out.u_chi.value - (out.chi_x - out.gbar_x);
    out.u_chi_tol = z * std::hypot(out.u_chi.stderr, out.chi_x_se) + cx.tail_bound + centering_halfwidth;
    out.u_chi_pass = std::abs(out.u_chi_gap) <= out.u_chi_tol;

    std::vector<double> z2(n_outer);
    for (std::size_t i = 0; i < n_outer; ++i) {
        const double zi = a[i] - out.chi_x + out.gbar_x;
        z2[i] = zi * zi;
    }
    out.ez2 = mean_estimate(z2);
    RunningStats sb;
    for (double v : b) sb.add(v);
    std::vector<double> dev(n_outer);
    const double nn = static_cast<double>(n_outer);
    for (std::size_t i = 0; i < n_outer; ++i) dev[i] = (b[i] - sb.mean()) * (b[i] - sb.mean()) * nn / (nn - 1.0);
    out.var_chi = mean_estimate(dev);
    out.var_gap = out.ez2.value - out.var_chi.value;
    const double bias = std::abs(out.u_chi_gap) + out.u_chi_tol;
    out.var_tol = z * std::hypot(out.ez2.stderr, out.var_chi.stderr) + bias * bias;
    out.var_pass = std::abs(out.var_gap) <= out.var_tol;
    return out;
}

namespace {

SeriesFlatness flatness(const std::vector<double>& summand, std::size_t from, double threshold) {
    SeriesFlatness f;
    const std::size_t n = summand.size() - 1;
    CompensatedSum run;
    std::vector<double> partial(n + 1, 0.0);
    for (std::size_t l = 1; l <= n; ++l) {
        if (l >= from) run.add(summand[l]);
        partial[l] = run.value();
    }
    for (std::size_t d = 2; d <= n; d *= 2) {
        const double s = partial[d];
        const double inc = s > 0.0 ? (s - partial[d / 2]) / s : 0.0;
        f.n.push_back(d);
        f.partial_sum.push_back(s);
        f.relative_increment.push_back(inc);
        if (f.flat_at == 0 && inc < threshold) f.flat_at = d;
    }
    return f;
}

}  // namespace

DiagnosticsResult series_diagnostics(std::span<const MartingaleSeries> ensemble, const Hn2Curve& hn2,
                                     double sigma2_reference, std::span<const double> z1_stationary,
                                     const DiagnosticsOptions& opt) {
    if (ensemble.empty()) throw InputError("diagnostics need a nonempty ensemble");
    const std::size_t n = ensemble.front().length();
    if (hn2.qv.size() != n + 1) throw InputError("h_n² curve does not match the ensemble");
    DiagnosticsResult d;
    d.sigma2_reference = sigma2_reference;
    for (std::size_t m = 1; m <= n; m *= 2) d.n_grid.push_back(m);
    if (d.n_grid.empty() || d.n_grid.back() != n) d.n_grid.push_back(n);
    for (std::size_t m : d.n_grid) d.hn2_over_n.push_back(hn2.qv[m] / static_cast<double>(m));
    d.hn2_limit = d.hn2_over_n.back();

    CompensatedSum ratio_sum;
    for (const auto& s : ensemble) {
        CompensatedSum q;
        for (double z : s.Z) q.add(z * z);
        const double r = hn2.qv[n] > 0.0 ? q.value() / hn2.qv[n] : 0.0;
        d.qv_ratio.push_back(r);
        ratio_sum.add(r);
    }
    d.qv_ratio_mean = ratio_sum.value() / static_cast<double>(ensemble.size());

    std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
    const double inv = 1.0 / static_cast<double>(ensemble.size());
    for (std::size_t l = 1; l <= n; ++l) {
        const double h2 = hn2.qv[l];
        if (!(h2 > 0.0)) continue;
        const double h = std::sqrt(h2);
        CompensatedSum a, b;
        for (const auto& s : ensemble) {
            const double z = s.Z[l - 1];
            if (std::abs(z) < opt.upsilon * h) a.add(z * z * z * z);
            if (std::abs(z) >= opt.vartheta * h) b.add(std::abs(z));
        }
        s1[l] = a.value() * inv / (h2 * h2);
        s2[l] = b.value() * inv / h;
    }
    const std::size_t from = std::max<std::size_t>(1, hn2.monotone_from);
    d.lil1 = flatness(s1, from, opt.flat_threshold);
    d.lil2 = flatness(s2, from, opt.flat_threshold);

    d.m_grid = opt.m_grid;
    for (double m : opt.m_grid) {
        CompensatedSum c;
        for (const auto& s : ensemble) {
            CompensatedSum t;
            for (double z : s.Z) t.add(std::min(z * z, m));
            c.add(t.value() / static_cast<double>(n));
        }
        d.cesaro.push_back(c.value() * inv);
        CompensatedSum st;
        for (double z : z1_stationary) st.add(std::min(z * z, m));
        d.cesaro_stationary.push_back(z1_stationary.empty() ? 0.0
                                                            : st.value() / static_cast<double>(z1_stationary.size()));
    }
    return d;
}

std::vector<double> stationary_increments(const Kernel& k, const ChiFunction& chi, const TestFunction& gbar,
                                          const EmpiricalMeasure& mu_star, std::size_t n, const RngStream& rng,
                                          int workers) {
    std::vector<double> z(n);
    parallel_for(n, workers, [&](std::size_t i) {
        RngStream s = rng.child(i);
        const Point& x = mu_star.sample(s);
        const Point y = k.step(x, s);
        z[i] = chi(y) - chi(x) + gbar(x);
    });
    return z;
}

}  // namespace lilkit
