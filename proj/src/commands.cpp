#include "lilkit/commands.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <fmt/format.h>

#include "lilkit/coupling.hpp"
#include "lilkit/ergodicity.hpp"
#include "lilkit/errors.hpp"
#include "lilkit/gene_model.hpp"
#include "lilkit/kernel.hpp"
#include "lilkit/lil.hpp"
#include "lilkit/parallel.hpp"

namespace lilkit {

using nlohmann::json;

namespace {

json estimate_json(const Estimate& e) {
    return {{"value", e.value}, {"stderr", e.stderr}, {"ci_lo", e.ci.lo}, {"ci_hi", e.ci.hi}};
}

json point_json(const Point& p) {
    json y = json::array();
    for (double v : p.y) y.push_back(v);
    return {{"y", y}, {"mode", p.mode}};
}

/// Finite numbers only; JSON has no nan or inf.
json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

RunStatus worst(RunStatus a, RunStatus b) {
    auto rank = [](RunStatus s) { return s == RunStatus::pass ? 0 : s == RunStatus::inconclusive ? 1 : 2; };
    return rank(a) >= rank(b) ? a : b;
}

Point reference_point(const ExperimentConfig& c) {
    if (c.model.kind == ModelKind::gene) {
        const GeneModelSpec m = build_gene_model(c.model);
        return Point{m.y_bar, 1};
    }
    return make_point(0.0);
}

MetricSpec model_metric(const ExperimentConfig& c) {
    if (c.model.kind == ModelKind::gene) return build_gene_model(c.model).metric;
    return MetricSpec{};
}

TestFunction select_g(const std::string& name) {
    if (name == "coordinate") return functions::coordinate();
    if (name == "clamp") return functions::clamp(-1.0, 1.0);
    if (name == "tanh") return functions::tanh_coordinate();
    if (name == "min1") return functions::clamp(0.0, 1.0);
    throw ConfigError(fmt::format("unknown test function {}", name));
}

std::vector<std::size_t> dyadic_up_to(std::size_t n, std::size_t from) {
    std::vector<std::size_t> out;
    for (std::size_t m = std::max<std::size_t>(from, 1); m < n; m *= 2) out.push_back(m);
    out.push_back(n);
    return out;
}

std::vector<std::size_t> decades_up_to(std::size_t n) {
    std::vector<std::size_t> out;
    for (std::size_t m = 1000; m <= n; m *= 10) out.push_back(m);
    return out;
}

}  // namespace

MedianEstimate median_estimate(std::vector<double> xs, double confidence) {
    if (xs.empty()) throw InputError("median of an empty sample");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    MedianEstimate m;
    m.median = n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
    const double z = two_sided_z(confidence);
    const double half = 0.5 * z * std::sqrt(static_cast<double>(n));
    const auto lo = static_cast<long>(std::floor(0.5 * static_cast<double>(n) - half));
    const auto hi = static_cast<long>(std::ceil(0.5 * static_cast<double>(n) + half));
    m.ci_lo = xs[static_cast<std::size_t>(std::clamp<long>(lo, 0, static_cast<long>(n) - 1))];
    m.ci_hi = xs[static_cast<std::size_t>(std::clamp<long>(hi - 1, 0, static_cast<long>(n) - 1))];
    return m;
}

std::string CommandOutput::digest() const {
    std::string all;
    for (const auto& [name, t] : csv) all += name + "\n" + t.render();
    for (const auto& [name, j] : json) all += name + "\n" + j.dump(2) + "\n";
    all += summary.dump(2);
    return sha256_hex(all);
}

CommandOutput cmd_check_conditions(const ExperimentConfig& c) {
    const GeneModelSpec m = build_gene_model(c.model);
    const RngStream rng(c.run.seed);
    ConditionOptions copt;
    copt.sample_budget = c.check_conditions.sample_budget;
    copt.tolerance = c.check_conditions.tolerance;
    copt.confidence = c.run.confidence;
    DriftOptions dopt;
    dopt.sample_budget = c.check_conditions.drift_budget;
    dopt.grid_points = c.check_conditions.grid_points;
    dopt.confidence = c.run.confidence;
    dopt.workers = c.run.workers;

    CommandOutput out;
    CsvTable table;
    table.columns = {"condition", "value", "ci_lo", "ci_hi", "declared", "margin", "pass", "samples"};
    json conditions = json::array();
    auto add_entry = [&](const ConditionEntry& e) {
        table.add_row({e.name, format_double(e.value), format_double(e.ci.lo), format_double(e.ci.hi),
                       format_double(e.declared), format_double(e.margin), e.pass ? "1" : "0",
                       std::to_string(e.samples)});
        conditions.push_back({{"name", e.name}, {"value", number(e.value)}, {"ci_lo", number(e.ci.lo)},
                              {"ci_hi", number(e.ci.hi)}, {"declared", number(e.declared)},
                              {"margin", number(e.margin)}, {"pass", e.pass}, {"samples", e.samples},
                              {"note", e.note}});
    };
    try {
        const ConditionReport rep = certify_model(m, copt, dopt, rng);
        for (const auto& e : rep.entries) add_entry(e);
        json modes = json::array();
        for (const auto& md : rep.drift.per_mode)
            modes.push_back({{"mode", md.mode}, {"slope", estimate_json(md.slope)},
                             {"intercept", estimate_json(md.intercept)},
                             {"moment_slope", estimate_json(md.moment_slope)},
                             {"moment_intercept", estimate_json(md.moment_intercept)},
                             {"r_squared", md.r_squared}});
        out.summary = {{"model", m.label},
                       {"conditions", conditions},
                       {"drift",
                        {{"a", estimate_json(rep.drift.a)},
                         {"b", estimate_json(rep.drift.b)},
                         {"a_star", number(rep.drift.a_star)},
                         {"a_star_mc", estimate_json(rep.drift.a_star_mc)},
                         {"b_star", number(rep.drift.b_star)},
                         {"per_mode", modes},
                         {"pass", rep.drift.pass}}},
                       {"test_horizon", rep.test_horizon},
                       {"all_pass", rep.all_pass}};
        out.status = rep.all_pass ? RunStatus::pass : RunStatus::fail;
    } catch (const CertificationError& e) {
        out.summary = {{"model", m.label}, {"conditions", conditions}, {"error", e.what()}, {"all_pass", false}};
        out.status = RunStatus::fail;
    }
    out.csv.emplace_back("conditions.csv", std::move(table));
    out.json.emplace_back("conditions.json", out.summary);
    return out;
}

CommandOutput cmd_coupling(const ExperimentConfig& c) {
    const auto& t = c.coupling;
    const GeneModelSpec m = build_gene_model(c.model);
    const RngStream rng(c.run.seed);
    CommandOutput out;
    json summary;

    double Gamma = t.Gamma;
    if (Gamma == 0.0) {
        DriftOptions dopt;
        dopt.sample_budget = t.drift_budget;
        dopt.confidence = c.run.confidence;
        dopt.workers = c.run.workers;
        const DriftConstants d = drift_constants(m, dopt, rng.child(0));
        if (!(d.a.ci.hi < 1.0)) {
            out.status = RunStatus::inconclusive;
            out.summary = {{"error", "drift slope is not certified below 1; no threshold derived"}};
            out.json.emplace_back("coupling.json", out.summary);
            return out;
        }
        Gamma = default_threshold(d.a.ci.hi, d.b.ci.hi);
        summary["drift"] = {{"a", estimate_json(d.a)}, {"b", estimate_json(d.b)}};
    }
    CouplingSpec cs = make_coupling(m, t.gamma, Gamma);
    cs.overlap = t.restricted_overlap ? OverlapSet::restricted : OverlapSet::full;

    std::vector<std::pair<Point, Point>> pairs;
    for (const auto& [a, b] : t.pairs) pairs.emplace_back(a.point(), b.point());
    CouplingOptions opt;
    opt.horizon = t.horizon;
    opt.hit_floor = t.hit_floor;
    opt.confidence = c.run.confidence;
    opt.workers = c.run.workers;
    const CouplingDiagnostics diag = estimate_B_constants(cs, pairs, c.run.trajectories, rng.child(1), opt);

    RunStatus status = diag.conclusive ? RunStatus::pass : RunStatus::inconclusive;
    CsvTable ptable;
    ptable.columns = {"pair", "in_F", "in_start_set", "delta_quadrature", "contraction", "contraction_ci_lo",
                      "contraction_ci_hi", "r_frequency", "r_bound", "gamma_moment", "gamma_moment_ci_lo",
                      "gamma_moment_ci_hi", "not_hit"};
    json pj = json::array();
    for (std::size_t i = 0; i < diag.pairs.size(); ++i) {
        const PairDiagnostics& p = diag.pairs[i];
        const bool contraction_ok = !p.in_F || p.contraction.ci.lo <= p.delta_used;
        const bool r_ok = p.r_frequency.ci.lo <= p.r_bound;
        if (!(contraction_ok && r_ok && p.q_support_in_F)) status = worst(status, RunStatus::fail);
        ptable.add_row({std::to_string(i), p.in_F ? "1" : "0", p.in_start_set ? "1" : "0",
                        format_double(p.delta_quadrature), format_double(p.contraction.value),
                        format_double(p.contraction.ci.lo), format_double(p.contraction.ci.hi),
                        format_double(p.r_frequency.value), format_double(p.r_bound),
                        format_double(p.gamma_moment.value), format_double(p.gamma_moment.ci.lo),
                        format_double(p.gamma_moment.ci.hi), std::to_string(p.not_hit)});
        pj.push_back({{"x", point_json(p.x)},
                      {"y", point_json(p.y)},
                      {"in_F", p.in_F},
                      {"in_start_set", p.in_start_set},
                      {"delta_quadrature", number(p.delta_quadrature)},
                      {"delta_used", number(p.delta_used)},
                      {"contraction", estimate_json(p.contraction)},
                      {"contraction_pass", contraction_ok},
                      {"u_hit_rate", estimate_json(p.u_hit_rate)},
                      {"r_frequency", estimate_json(p.r_frequency)},
                      {"r_bound", number(p.r_bound)},
                      {"r_pass", r_ok},
                      {"q_support_in_F", p.q_support_in_F},
                      {"gamma_moment", estimate_json(p.gamma_moment)},
                      {"not_hit", p.not_hit},
                      {"conclusive", p.conclusive}});
    }
    summary["gamma"] = diag.gamma;
    summary["Gamma"] = diag.Gamma;
    summary["horizon"] = diag.horizon;
    summary["pairs"] = pj;

    // Marginal preservation: time-t states of independent coupled replicates
    // against independent runs of the kernel from the same starts, at several t.
    if (t.marginal_steps > 0) {
        const Kernel k = gene_kernel(m);
        const Point x = pairs.front().first, y = pairs.front().second;
        const std::size_t T = t.marginal_horizon;
        const std::size_t reps = t.marginal_steps / T;
        std::vector<std::size_t> times{1, std::max<std::size_t>(1, T / 2), T};
        times.erase(std::unique(times.begin(), times.end()), times.end());
        const std::size_t G = times.size();
        std::vector<Point> cf(G * reps), cs2(G * reps), mf(G * reps), ms(G * reps);
        const RngStream rc = rng.child(2), r1 = rng.child(3), r2 = rng.child(4);
        parallel_for(reps, c.run.workers, [&](std::size_t j) {
            RngStream a = rc.child(j), b = r1.child(j), d = r2.child(j);
            CoupledState s{x, y, Branch::none};
            Point px = x, py = y;
            std::size_t gi = 0;
            for (std::size_t step = 1; step <= T; ++step) {
                s = coupled_step(cs, s, a);
                px = k.step(px, b);
                py = k.step(py, d);
                if (step == times[gi]) {
                    cf[gi * reps + j] = s.first;
                    cs2[gi * reps + j] = s.second;
                    mf[gi * reps + j] = px;
                    ms[gi * reps + j] = py;
                    ++gi;
                }
            }
        });
        json tests = json::array();
        bool all_pass = true;
        auto tj = [](const TwoSampleTest& r) {
            return json{{"statistic", r.statistic}, {"null_mean", r.null_mean}, {"stderr", r.stderr},
                        {"blocks", r.blocks}, {"pass", r.pass}};
        };
        for (std::size_t gi = 0; gi < G; ++gi) {
            const std::span<const Point> a(cf.data() + gi * reps, reps), b(mf.data() + gi * reps, reps);
            const std::span<const Point> a2(cs2.data() + gi * reps, reps), b2(ms.data() + gi * reps, reps);
            const TwoSampleTest tx = fm_two_sample_test(a, b, m.metric, t.block_size, rng.child(5).child(gi),
                                                        c.run.workers);
            const TwoSampleTest ty = fm_two_sample_test(a2, b2, m.metric, t.block_size, rng.child(6).child(gi),
                                                        c.run.workers);
            all_pass = all_pass && tx.pass && ty.pass;
            tests.push_back({{"t", times[gi]}, {"first", tj(tx)}, {"second", tj(ty)}});
        }
        summary["marginal_test"] = {{"steps", reps * T}, {"replicates", reps}, {"tests", tests}, {"pass", all_pass}};
        if (!all_pass) status = worst(status, RunStatus::fail);
    }

    CsvTable curves = curve_table();
    if (!t.decay_grid.empty()) {
        const std::pair<Point, Point> start{t.decay_start.first.point(), t.decay_start.second.point()};
        DecayFitOptions fo;
        fo.confidence = c.run.confidence;
        const CoupledDecay cd = coupled_decay(cs, functions::clamp(0.0, 1.0), start, t.decay_grid,
                                              std::max<std::size_t>(c.run.trajectories, 100), rng.child(7),
                                              c.run.workers, fo);
        json pts = json::array();
        for (const auto& p : cd.fit.points) {
            curves.add_row(curve_row("coupled_decay", p.n, p.value, p.ci_lo, p.ci_hi));
            pts.push_back({{"n", p.n}, {"value", p.value}, {"ci_lo", p.ci_lo}, {"ci_hi", p.ci_hi},
                           {"used_in_fit", p.used_in_fit}});
        }
        summary["coupled_decay"] = {{"start", {point_json(start.first), point_json(start.second)}},
                                    {"points", pts},
                                    {"rate", number(cd.fit.rate)},
                                    {"rate_ci_lo", number(cd.fit.rate_ci.lo)},
                                    {"rate_ci_hi", number(cd.fit.rate_ci.hi)},
                                    {"log_intercept", number(cd.fit.log_intercept)},
                                    {"r_squared", number(cd.fit.r_squared)},
                                    {"conclusive", cd.fit.conclusive},
                                    {"increase_detected", cd.increase_detected}};
        if (cd.increase_detected) status = worst(status, RunStatus::fail);
        if (!cd.fit.conclusive) status = worst(status, RunStatus::inconclusive);
    }
    for (std::size_t i = 0; i < diag.pairs.size(); ++i)
        curves.add_row(curve_row(fmt::format("gamma_moment_pair{}", i), diag.horizon,
                                 diag.pairs[i].gamma_moment.value, diag.pairs[i].gamma_moment.ci.lo,
                                 diag.pairs[i].gamma_moment.ci.hi));
    summary["conclusive"] = diag.conclusive;
    summary["status"] = to_string(status);
    out.status = status;
    out.summary = summary;
    out.csv.emplace_back("coupling_pairs.csv", std::move(ptable));
    out.csv.emplace_back("coupling_curves.csv", std::move(curves));
    out.json.emplace_back("coupling.json", out.summary);
    return out;
}

CommandOutput cmd_ergodicity(const ExperimentConfig& c) {
    const auto& t = c.ergodicity;
    const Kernel k = build_kernel(c.model);
    ErgodicDecayOptions opt;
    opt.bootstrap = t.bootstrap;
    opt.lp_budget = t.lp_budget;
    opt.workers = c.run.workers;
    opt.fit.confidence = c.run.confidence;
    const DecayFit fit =
        ergodic_decay(k, t.x.point(), t.y.point(), t.grid, c.run.trajectories, model_metric(c), RngStream(c.run.seed), opt);
    CommandOutput out;
    CsvTable curves = curve_table();
    json pts = json::array();
    for (const auto& p : fit.points) {
        curves.add_row(curve_row("d_fm", p.n, p.value, p.ci_lo, p.ci_hi));
        pts.push_back({{"n", p.n}, {"value", p.value}, {"ci_lo", p.ci_lo}, {"ci_hi", p.ci_hi},
                       {"used_in_fit", p.used_in_fit}});
    }
    out.status = !fit.conclusive ? RunStatus::inconclusive : fit.pass ? RunStatus::pass : RunStatus::fail;
    out.summary = {{"kernel", k.label()},
                   {"x", point_json(t.x.point())},
                   {"y", point_json(t.y.point())},
                   {"trajectories", c.run.trajectories},
                   {"points", pts},
                   {"rate", number(fit.rate)},
                   {"rate_ci_lo", number(fit.rate_ci.lo)},
                   {"rate_ci_hi", number(fit.rate_ci.hi)},
                   {"log_intercept", number(fit.log_intercept)},
                   {"log_intercept_stderr", number(fit.log_intercept_stderr)},
                   {"r_squared", number(fit.r_squared)},
                   {"fit_points", fit.fit_points},
                   {"conclusive", fit.conclusive},
                   {"pass", fit.pass},
                   {"status", to_string(out.status)}};
    out.csv.emplace_back("ergodicity_curves.csv", std::move(curves));
    out.json.emplace_back("ergodicity.json", out.summary);
    return out;
}

namespace {

/// The corrector setup shared by the lil command stages.
struct LilSetup {
    std::shared_ptr<const Kernel> kernel;
    std::shared_ptr<const EmpiricalMeasure> mu_star;
    CenteredFunction centered;
    bool exact_centering = false;
    ChiApprox chi;
    ChiFunction chi_fn;
    double chi_table_se = 0.0;
    json tail_info;
};

LilSetup lil_setup(const ExperimentConfig& c, const RngStream& rng) {
    const auto& t = c.lil;
    LilSetup s;
    s.kernel = std::make_shared<const Kernel>(build_kernel(c.model));
    const Kernel& k = *s.kernel;
    const Point x_bar = reference_point(c);
    const MetricSpec metric = model_metric(c);

    if (k.known_invariant()) {
        s.mu_star = std::make_shared<const EmpiricalMeasure>(*k.known_invariant());
        s.exact_centering = true;
    } else {
        s.mu_star = std::make_shared<const EmpiricalMeasure>(
            invariant_estimate(k, x_bar, c.run.burn_in, t.invariant_atoms, c.run.thinning, rng.child(0)));
    }
    const TestFunction g = select_g(t.g);
    if (std::isfinite(t.g_mean)) {
        s.centered.mean = make_estimate(t.g_mean, 0.0, c.run.confidence);
        s.centered.gbar.label = g.label + " (centered)";
        s.centered.gbar.eval = [f = g.eval, mu = t.g_mean](const Point& x) { return f(x) - mu; };
        s.centered.gbar.lip_bound = g.lip_bound;
        s.centered.gbar.sup_bound = g.sup_bound + std::abs(t.g_mean);
        s.exact_centering = true;
    } else {
        s.centered = center_g(g, *s.mu_star, s.exact_centering, c.run.confidence);
    }

    TailParams tail;
    if (t.tail_c >= 0.0) {
        tail = {t.tail_c, t.tail_q};
        s.tail_info = {{"source", "config"}};
    } else if (c.model.kind == ModelKind::iid) {
        // One step reaches the invariant law, so U^i ḡ = 0 for i >= 1.
        tail = {0.0, 0.0};
        s.tail_info = {{"source", "iid"}};
    } else {
        Point far = x_bar;
        far.y[0] += 4.0;
        ErgodicDecayOptions eo;
        eo.workers = c.run.workers;
        eo.fit.confidence = c.run.confidence;
        const DecayFit fit = ergodic_decay(k, x_bar, far, t.tail_grid, t.tail_trajectories, metric, rng.child(1), eo);
        const LyapunovSpec V{x_bar, metric.norm};
        const double mean_v = s.mu_star->expectation([&](const Point& p) { return V(p); });
        tail = tail_from_decay(fit, V(x_bar) + V(far), mean_v, c.run.confidence);
        s.tail_info = {{"source", "decay"}, {"rate", fit.rate}, {"rate_ci_hi", fit.rate_ci.hi},
                       {"log_intercept", fit.log_intercept}};
    }
    s.tail_info["c_tilde"] = tail.c_tilde;
    s.tail_info["q"] = tail.q;

    std::size_t N = 0;
    if (t.truncation >= 0) {
        N = static_cast<std::size_t>(t.truncation);
    } else {
        const double sd = std::sqrt(s.mu_star->expectation([&](const Point& p) {
            const double v = s.centered.gbar(p);
            return v * v;
        }));
        N = choose_truncation(s.centered.gbar, tail, t.truncation_tol * std::max(sd, 1e-300));
    }
    s.chi = ChiApprox{s.centered.gbar, s.centered.mean, N, t.inner_samples, tail, x_bar, metric};

    const RngStream chi_rng = rng.child(2);
    if (N == 0) {
        s.chi_fn = direct_chi(k, s.chi, chi_rng);
    } else if (x_bar.y.size() == 1) {
        double lo = HUGE_VAL, hi = -HUGE_VAL;
        int modes = 1;
        for (const Point& p : s.mu_star->atoms()) {
            lo = std::min(lo, p.y[0]);
            hi = std::max(hi, p.y[0]);
            modes = std::max(modes, p.mode);
        }
        const double pad = 0.25 * (hi - lo) + 1e-9;
        auto table = std::make_shared<const ChiTable>(k, s.chi, lo - pad, hi + pad, t.chi_nodes, modes, chi_rng,
                                                      c.run.workers);
        s.chi_table_se = table->max_stderr();
        s.chi_fn = [table, keep = s.kernel](const Point& x) { return (*table)(x); };
    } else {
        s.chi_fn = direct_chi(k, s.chi, chi_rng);
    }
    return s;
}

}  // namespace

CommandOutput cmd_lil(const ExperimentConfig& c) {
    const auto& t = c.lil;
    const RngStream rng(c.run.seed);
    CommandOutput out;
    json summary;
    RunStatus status = RunStatus::pass;
    try {
        const LilSetup s = lil_setup(c, rng);
        const Kernel& k = *s.kernel;
        const TestFunction& gbar = s.centered.gbar;
        const std::size_t n = c.run.n;
        const double conf = c.run.confidence;
        const double z3 = 3.0;

        const Sigma2Result s2f =
            sigma2_formula(k, s.chi_fn, *s.mu_star, t.sigma2_states, rng.child(3), c.run.workers, conf);
        if (!(s2f.estimate.value > 0.0)) throw PathError("σ² formula estimate is not positive");
        const double sigma = std::sqrt(s2f.estimate.value);

        // Main streamed ensemble from draws of μ̂*.
        StreamOptions so;
        so.checkpoints = t.checkpoints.empty() ? dyadic_up_to(n, 1) : t.checkpoints;
        if (std::find(so.checkpoints.begin(), so.checkpoints.end(), n) == so.checkpoints.end())
            so.checkpoints.push_back(n);
        so.path_lengths = t.path_lengths.empty() ? decades_up_to(n) : t.path_lengths;
        so.path_nodes = t.path_nodes;
        so.rhat_from = t.rhat_from;
        so.sigma = sigma;
        const RngStream start_rng = rng.child(4);
        auto start = [&](std::size_t j) {
            RngStream r = start_rng.child(j);
            return s.mu_star->sample(r);
        };
        const auto ens = run_ensemble(k, s.chi_fn, gbar, start, n, c.run.trajectories, so, rng.child(5), c.run.workers);

        // σ² by the average route at n.
        std::vector<double> per_traj;
        for (const auto& r : ens) per_traj.push_back(r.checkpoints.back().qv / static_cast<double>(n));
        const Sigma2Result s2a = sigma2_average(per_traj, conf);
        const bool overlap = s2f.estimate.ci.overlaps(s2a.estimate.ci);
        if (s2f.degenerate || s2a.degenerate) status = worst(status, RunStatus::inconclusive);
        if (!overlap) status = worst(status, RunStatus::fail);

        CsvTable curves = curve_table();
        CsvTable traj;
        traj.columns = {"trajectory", "n", "M", "qv", "sum_before", "sum_after", "rhat_max", "rhat_min"};
        for (std::size_t j = 0; j < ens.size(); ++j)
            for (const auto& cp : ens[j].checkpoints)
                traj.add_row({std::to_string(j), std::to_string(cp.n), format_double(cp.M), format_double(cp.qv),
                              format_double(cp.sum_before), format_double(cp.sum_after),
                              format_double(cp.rhat_max), format_double(cp.rhat_min)});

        const std::size_t n_cp = ens.front().checkpoints.size();
        for (std::size_t i = 0; i < n_cp; ++i) {
            const std::size_t m = ens.front().checkpoints[i].n;
            if (m == 0) continue;
            std::vector<double> a, mx, mn;
            for (const auto& r : ens) {
                a.push_back(r.checkpoints[i].qv / static_cast<double>(m));
                mx.push_back(r.checkpoints[i].rhat_max);
                mn.push_back(r.checkpoints[i].rhat_min);
            }
            if (a.size() >= 2) {
                const Estimate e = mean_estimate(a, conf);
                curves.add_row(curve_row("qv_over_n", m, e.value, e.ci.lo, e.ci.hi));
            }
            if (t.rhat_from > 0 && m >= t.rhat_from && mx.size() >= 2) {
                const Estimate emx = mean_estimate(mx, conf), emn = mean_estimate(mn, conf);
                curves.add_row(curve_row("rhat_running_max", m, emx.value, emx.ci.lo, emx.ci.hi));
                curves.add_row(curve_row("rhat_running_min", m, emn.value, emn.ci.lo, emn.ci.hi));
            }
        }

        // r̂ running extremes at n.
        json rhat;
        if (t.rhat_from > 0 && n >= t.rhat_from) {
            std::size_t in_band_max = 0, in_band_min = 0, in_band_both = 0;
            std::vector<double> mx, mn;
            for (const auto& r : ens) {
                const auto& cp = r.checkpoints.back();
                const bool a = cp.rhat_max >= 0.5 && cp.rhat_max <= 1.2;
                const bool b = cp.rhat_min >= -1.2 && cp.rhat_min <= -0.5;
                in_band_max += a;
                in_band_min += b;
                in_band_both += a && b;
                mx.push_back(cp.rhat_max);
                mn.push_back(cp.rhat_min);
            }
            const double nt = static_cast<double>(ens.size());
            rhat = {{"from", t.rhat_from},
                    {"running_max", mx},
                    {"running_min", mn},
                    {"fraction_max_in_band", in_band_max / nt},
                    {"fraction_min_in_band", in_band_min / nt},
                    {"fraction_both_in_band", in_band_both / nt}};
        }

        // Distance of r_n to the Strassen set per path length.
        json kd = json::array();
        for (std::size_t p = 0; p < so.path_lengths.size(); ++p) {
            std::vector<double> d;
            for (const auto& r : ens) d.push_back(k_distance(r.r_paths[p]));
            const MedianEstimate me = median_estimate(d, conf);
            curves.add_row(curve_row("k_distance_median", so.path_lengths[p], me.median, me.ci_lo, me.ci_hi));
            kd.push_back({{"n", so.path_lengths[p]}, {"median", me.median}, {"ci_lo", me.ci_lo},
                          {"ci_hi", me.ci_hi}, {"values", d}});
        }

        // Full series for h_n² and the increment diagnostics.
        const std::size_t sl = t.series_length ? std::min(t.series_length, n) : std::min<std::size_t>(n, 10000);
        const std::size_t st = t.series_trajectories ? t.series_trajectories
                                                     : std::min<std::size_t>(c.run.trajectories, 200);
        json diag_json;
        if (st >= 2 && sl >= 4) {
            StreamOptions fo;
            fo.keep_series = sl;
            const auto full = run_ensemble(k, s.chi_fn, gbar, start, sl, st, fo, rng.child(6), c.run.workers);
            std::vector<MartingaleSeries> series;
            series.reserve(full.size());
            for (const auto& r : full) series.push_back(r.series);
            const Hn2Curve hn2 = hn2_curve(series);
            const auto z1 = stationary_increments(k, s.chi_fn, gbar, *s.mu_star, t.sigma2_states, rng.child(7),
                                                  c.run.workers);
            const DiagnosticsResult d = series_diagnostics(series, hn2, s2f.estimate.value, z1);
            for (std::size_t i = 0; i < d.n_grid.size(); ++i)
                curves.add_row(curve_row("hn2_over_n", d.n_grid[i], d.hn2_over_n[i], d.hn2_over_n[i],
                                         d.hn2_over_n[i]));
            for (std::size_t i = 0; i < d.lil1.n.size(); ++i)
                curves.add_row(curve_row("lil1_partial_sum", d.lil1.n[i], d.lil1.partial_sum[i],
                                         d.lil1.partial_sum[i], d.lil1.partial_sum[i]));
            for (std::size_t i = 0; i < d.lil2.n.size(); ++i)
                curves.add_row(curve_row("lil2_partial_sum", d.lil2.n[i], d.lil2.partial_sum[i],
                                         d.lil2.partial_sum[i], d.lil2.partial_sum[i]));
            const MedianEstimate qr = median_estimate(d.qv_ratio, conf);
            json ces = json::array();
            for (std::size_t i = 0; i < d.m_grid.size(); ++i)
                ces.push_back({{"m", d.m_grid[i]}, {"average", d.cesaro[i]}, {"stationary", d.cesaro_stationary[i]}});
            diag_json = {{"series_length", sl},
                         {"series_trajectories", st},
                         {"hn2_monotone_from", hn2.monotone_from},
                         {"hn2_over_n_limit", d.hn2_limit},
                         {"hn2_raw_over_n", hn2.raw.back() / static_cast<double>(sl)},
                         {"sigma2_reference", d.sigma2_reference},
                         {"qv_ratio_mean", d.qv_ratio_mean},
                         {"qv_ratio_median", qr.median},
                         {"lil1_flat_at", d.lil1.flat_at},
                         {"lil2_flat_at", d.lil2.flat_at},
                         {"lil1_relative_increment", d.lil1.relative_increment},
                         {"lil2_relative_increment", d.lil2.relative_increment},
                         {"cesaro", ces}};

            // Path families of the first series, on the h²-time grid.
            PathOptions po;
            po.eta_tilde_sign = t.eta_tilde_sign;
            try {
                const PathSet ps = build_paths(series.front(), sigma, hn2.qv, po);
                diag_json["paths"] = {{"k_distance_r", k_distance(ps.r)},
                                      {"k_distance_eta", k_distance(ps.eta)},
                                      {"k_distance_eta_tilde", k_distance(ps.eta_tilde)},
                                      {"monotone_from", ps.monotone_from}};
            } catch (const PathError& e) {
                diag_json["paths"] = {{"error", e.what()}};
            }
        }

        // Martingale regression on stored trajectories.
        json reg_json;
        if (t.regression_trajectories >= 1 && t.regression_length >= 2) {
            StreamOptions ro;
            ro.keep_series = std::min(t.regression_length, n);
            ro.keep_trajectory = true;
            const auto rr = run_ensemble(k, s.chi_fn, gbar, start, ro.keep_series, t.regression_trajectories, ro,
                                         rng.child(8), c.run.workers);
            std::vector<MartingaleSeries> series;
            for (const auto& r : rr) series.push_back(r.series);
            const RegressionCheck reg =
                martingale_regression(series, [](const Point& p) { return std::tanh(p.y[0]); }, z3);
            reg_json = {{"regressor", "tanh(y)"},    {"intercept", reg.intercept}, {"intercept_se", reg.intercept_se},
                        {"slope", reg.slope},          {"slope_se", reg.slope_se},   {"samples", reg.samples},
                        {"pass", reg.pass}};
            if (!reg.pass) status = worst(status, RunStatus::fail);
        }

        // Corrector identities at states drawn from μ̂*.
        json id_json = json::array();
        CsvTable idt;
        idt.columns = {"state", "y", "mode", "chi", "u_chi", "u_chi_gap", "u_chi_tol", "ez2", "var_chi",
                       "var_gap", "var_tol", "pass"};
        if (t.identity_states > 0) {
            const RngStream pick = rng.child(9);
            const double halfwidth = 0.5 * (s.centered.mean.ci.hi - s.centered.mean.ci.lo);
            for (std::size_t i = 0; i < t.identity_states; ++i) {
                RngStream r = pick.child(i);
                const Point x = s.mu_star->sample(r);
                const IdentityCheck ic = corrector_identities(k, s.chi, x, t.identity_outer, rng.child(2),
                                                              rng.child(10).child(i), halfwidth, z3, c.run.workers);
                const bool ok = ic.u_chi_pass && ic.var_pass;
                if (!ok) status = worst(status, RunStatus::fail);
                idt.add_row({std::to_string(i), format_double(x.y[0]), std::to_string(x.mode),
                             format_double(ic.chi_x), format_double(ic.u_chi.value), format_double(ic.u_chi_gap),
                             format_double(ic.u_chi_tol), format_double(ic.ez2.value),
                             format_double(ic.var_chi.value), format_double(ic.var_gap), format_double(ic.var_tol),
                             ok ? "1" : "0"});
                id_json.push_back({{"x", point_json(x)}, {"u_chi_pass", ic.u_chi_pass}, {"var_pass", ic.var_pass},
                                   {"u_chi_gap", ic.u_chi_gap}, {"u_chi_tol", ic.u_chi_tol},
                                   {"var_gap", ic.var_gap}, {"var_tol", ic.var_tol}});
            }
        }

        summary = {{"kernel", k.label()},
                   {"g", gbar.label},
                   {"n", n},
                   {"trajectories", c.run.trajectories},
                   {"centering", {{"mean", estimate_json(s.centered.mean)}, {"exact", s.exact_centering}}},
                   {"tail", s.tail_info},
                   {"truncation_N", s.chi.truncation_N},
                   {"chi_table_max_stderr", s.chi_table_se},
                   {"sigma2_by_formula", estimate_json(s2f.estimate)},
                   {"sigma2_by_average", estimate_json(s2a.estimate)},
                   {"sigma2_overlap", overlap},
                   {"sigma2_degenerate", s2f.degenerate || s2a.degenerate},
                   {"rhat", rhat},
                   {"k_distance", kd},
                   {"diagnostics", diag_json},
                   {"regression", reg_json},
                   {"identities", id_json}};
        out.csv.emplace_back("lil_curves.csv", std::move(curves));
        out.csv.emplace_back("lil_trajectories.csv", std::move(traj));
        if (!idt.rows.empty()) out.csv.emplace_back("lil_identities.csv", std::move(idt));
    } catch (const TruncationError& e) {
        status = RunStatus::inconclusive;
        summary = {{"error", e.what()}};
    } catch (const PathError& e) {
        status = RunStatus::inconclusive;
        summary = {{"error", e.what()}};
    }
    summary["status"] = to_string(status);
    out.status = status;
    out.summary = summary;
    out.json.emplace_back("lil.json", out.summary);
    return out;
}

CommandOutput cmd_simulate(const ExperimentConfig& c) {
    const Kernel k = build_kernel(c.model);
    const RngStream rng(c.run.seed);
    const Point start = c.simulate.start.point();
    const std::size_t n = c.run.n, nt = c.run.trajectories;
    std::vector<std::vector<Point>> paths(nt);
    parallel_for(nt, c.run.workers, [&](std::size_t j) {
        RngStream r = rng.child(j);
        paths[j] = simulate(k, start, n, r);
    });
    CsvTable t;
    t.columns = {"trajectory", "n", "y", "mode"};
    std::vector<double> finals;
    for (std::size_t j = 0; j < nt; ++j) {
        for (std::size_t i = 0; i <= n; ++i)
            t.add_row({std::to_string(j), std::to_string(i), format_double(paths[j][i].y[0]),
                       std::to_string(paths[j][i].mode)});
        finals.push_back(paths[j].back().y[0]);
    }
    CommandOutput out;
    out.summary = {{"kernel", k.label()}, {"n", n}, {"trajectories", nt}, {"start", point_json(start)}};
    if (finals.size() >= 2) out.summary["final_mean"] = estimate_json(mean_estimate(finals, c.run.confidence));
    out.summary["status"] = "pass";
    out.csv.emplace_back("trajectories.csv", std::move(t));
    out.json.emplace_back("simulate.json", out.summary);
    return out;
}

CommandOutput run_command(const ExperimentConfig& c) {
    if (c.command == "check-conditions") return cmd_check_conditions(c);
    if (c.command == "coupling") return cmd_coupling(c);
    if (c.command == "ergodicity") return cmd_ergodicity(c);
    if (c.command == "lil") return cmd_lil(c);
    if (c.command == "simulate") return cmd_simulate(c);
    throw ConfigError(fmt::format("unknown command {}", c.command));
}

int execute(const ExperimentConfig& c) {
    const CommandOutput out = run_command(c);
    ArtifactWriter w(c.output.directory);
    if (c.output.formats != OutputFormat::json)
        for (const auto& [name, table] : out.csv) w.write_csv(name, table);
    if (c.output.formats != OutputFormat::csv)
        for (const auto& [name, doc] : out.json) w.write_json(name, doc);
    json resolved = c.resolved;
    resolved["run"]["seed"] = c.run.seed;
    resolved["run"]["workers"] = c.run.workers;
    w.write_manifest(c.command, resolved, c.run.seed, out.status, out.summary);
    return exit_code(out.status);
}

}  // namespace lilkit
