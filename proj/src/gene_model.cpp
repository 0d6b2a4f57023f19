#include "lilkit/gene_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "lilkit/errors.hpp"
#include "lilkit/parallel.hpp"
#include "lilkit/quadrature.hpp"

namespace lilkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double ynorm(const GeneModelSpec& m, const StateVector& v) { return norm(v, m.metric.norm); }

/// Test state: radius log-uniform in [1e-6·H, H] around ȳ, uniform mode.
Point draw_test_state(const GeneModelSpec& m, RngStream& rng) {
    const double horizon = m.test_horizon();
    for (std::size_t attempt = 0; attempt < m.max_rejections; ++attempt) {
        const double radius = horizon * std::exp(std::log(1e-6) * rng.uniform());
        StateVector dir(m.dim);
        if (m.dim == 1) {
            dir[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        } else {
            for (std::size_t k = 0; k < m.dim; ++k) dir[k] = rng.normal();
            const double n = ynorm(m, dir);
            dir = (1.0 / n) * dir;
        }
        StateVector y = m.y_bar + radius * dir;
        if (m.in_domain(y)) {
            const int mode = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(m.flows.n_modes)));
            return {y, mode};
        }
    }
    throw SamplingError("no test state inside the domain after the rejection budget");
}

/// A pair of test states; every other pair is a local perturbation of the first.
std::pair<Point, Point> draw_test_pair(const GeneModelSpec& m, std::size_t index, RngStream& rng) {
    Point a = draw_test_state(m, rng);
    if (index % 2 == 0) return {a, draw_test_state(m, rng)};
    const double scale = 1e-3 * (1.0 + ynorm(m, a.y - m.y_bar));
    for (std::size_t attempt = 0; attempt < m.max_rejections; ++attempt) {
        StateVector b = a.y;
        for (std::size_t k = 0; k < m.dim; ++k) b[k] += scale * (2.0 * rng.uniform() - 1.0);
        if (m.in_domain(b)) {
            const int mode = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(m.flows.n_modes)));
            return {a, {b, mode}};
        }
    }
    return {a, draw_test_state(m, rng)};
}

QuadratureResult theta_integral(const std::function<double(double)>& f, double lo, double hi) {
    const auto q = integrate(f, lo, hi, 1e-12, 15);
    if (!std::isfinite(q.value) || q.error > 1e-6 * (1.0 + std::abs(q.value)))
        throw CertificationError(fmt::format("θ-integral over [{}, {}] did not converge (error {})", lo, hi,
                                             q.error));
    return q;
}

ConditionEntry upper_entry(std::string name, double worst, double declared, double tol, std::size_t n) {
    ConditionEntry e;
    e.name = std::move(name);
    e.value = worst;
    e.ci = {worst, worst};
    e.declared = declared;
    e.margin = declared + tol - worst;
    e.pass = e.margin > 0.0;
    e.samples = n;
    return e;
}

ConditionEntry lower_entry(std::string name, double worst, double declared, double tol, std::size_t n) {
    ConditionEntry e;
    e.name = std::move(name);
    e.value = worst;
    e.ci = {worst, worst};
    e.declared = declared;
    e.margin = worst - declared + tol;
    e.pass = e.margin > 0.0;
    e.samples = n;
    return e;
}

/// Inner part of (A1*) at a start state y and mode i:
/// ∫_0^∞ e^{-λt} ∫ ‖w_θ(S_i(t,ȳ)) - ȳ‖^{2+r} p(S_i(t,y), θ) dθ dt,
/// evaluated over doubling horizons until it settles.
double a1_star_integral(const GeneModelSpec& m, const StateVector& y, int mode) {
    const double q = 2.0 + m.r;
    auto inner = [&](double t) {
        const StateVector sbar = m.flows.flow(mode, t, m.y_bar);
        const StateVector sy = m.flows.flow(mode, t, y);
        auto f = [&](double th) {
            return std::pow(ynorm(m, m.jumps.map(th, sbar) - m.y_bar), q) * m.density.pdf(sy, th);
        };
        return theta_integral(f, m.jumps.theta_lo, m.jumps.theta_hi).value;
    };
    double horizon = 10.0 / m.lambda;
    double prev = integrate_exponential_time(inner, m.lambda, horizon, 1e-10, 10).value / m.lambda;
    for (int k = 0; k < 12; ++k) {
        horizon *= 2.0;
        const double cur = integrate_exponential_time(inner, m.lambda, horizon, 1e-10, 10).value / m.lambda;
        if (!std::isfinite(cur))
            throw CertificationError("(A1*) integral is not finite");
        if (std::abs(cur - prev) <= 1e-8 * (1.0 + std::abs(cur))) return cur;
        prev = cur;
    }
    throw CertificationError("(A1*) integral keeps growing under horizon doubling");
}

double a1_star_sup(const GeneModelSpec& m, std::size_t n_points, const RngStream& rng) {
    RngStream s = rng;
    double worst = 0.0;
    for (int mode = 1; mode <= m.flows.n_modes; ++mode) worst = std::max(worst, a1_star_integral(m, m.y_bar, mode));
    for (std::size_t k = 0; k < n_points; ++k) {
        const Point p = draw_test_state(m, s);
        worst = std::max(worst, a1_star_integral(m, p.y, p.mode));
    }
    return worst;
}

}  // namespace

void GeneModelSpec::validate() const {
    if (!(lambda > 0.0)) throw InputError("λ must be positive");
    if (dim < 1 || dim > kMaxDimension) throw InputError(fmt::format("dimension must be in [1, {}]", kMaxDimension));
    if (y_bar.size() != dim) throw InputError("ȳ has the wrong dimension");
    if (!flows.flow || !flows.bound_map) throw InputError("flow family incomplete");
    if (!jumps.map || !(jumps.theta_hi > jumps.theta_lo)) throw InputError("jump family incomplete");
    if (!density.pdf) throw InputError("jump density missing");
    if (!density.inverse_cdf && !(density.envelope > 0.0)) throw InputError("rejection envelope must be positive");
    if (!switching.prob || switching.n_modes != flows.n_modes || flows.n_modes < 1)
        throw InputError("switching matrix does not match the flow modes");
    if (!(epsilon >= 0.0 && epsilon <= epsilon_star)) throw InputError("ε must lie in [0, ε*]");
    if (!(r > 0.0 && r < 2.0)) throw InputError("moment order r must lie in (0, 2)");
    if (!in_domain || !in_domain(y_bar)) throw InputError("ȳ must lie in Y");
    metric.validate();
    if (noise.kind == NoiseSpec::Kind::uniform_box) {
        if (noise.lo_fraction.size() != dim || noise.hi_fraction.size() != dim)
            throw InputError("noise box has the wrong dimension");
        StateVector corner(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            if (noise.lo_fraction[k] > noise.hi_fraction[k]) throw InputError("noise box is empty");
            corner[k] = std::max(std::abs(noise.lo_fraction[k]), std::abs(noise.hi_fraction[k]));
        }
        if (norm(corner, metric.norm) > 1.0 + 1e-12) throw InputError("noise box leaves the ball B(0, ε)");
    }
    // Switching rows must sum to one.
    for (int i = 1; i <= switching.n_modes; ++i) {
        double s = 0.0;
        for (int j = 1; j <= switching.n_modes; ++j) s += switching.prob(y_bar, i, j);
        if (std::abs(s - 1.0) > 1e-12) throw InputError(fmt::format("switching row {} sums to {}", i, s));
    }
}

double GeneModelSpec::test_horizon() const {
    const double scale = epsilon > 0.0 ? epsilon : (epsilon_star > 0.0 ? epsilon_star : 1.0);
    return horizon_factor * scale;
}

GeneModelSpec linear_gene_model(const LinearGeneParams& p) {
    const int n_modes = static_cast<int>(p.decay_rates.size());
    if (n_modes < 1) throw InputError("at least one decay rate is required");
    for (double a : p.decay_rates)
        if (!(a >= 0.0)) throw InputError("decay rates must be nonnegative");
    if (!(p.density_power >= 0.0)) throw InputError("density power must be nonnegative");
    std::vector<std::vector<double>> rows = p.switching;
    if (rows.empty()) rows.assign(n_modes, std::vector<double>(n_modes, 1.0 / n_modes));
    if (static_cast<int>(rows.size()) != n_modes) throw InputError("switching matrix has the wrong size");
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != n_modes) throw InputError("switching matrix has the wrong size");
        double s = 0.0;
        for (double v : row) {
            if (!(v >= 0.0)) throw InputError("switching probabilities must be nonnegative");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-12) throw InputError("switching rows must sum to 1");
    }

    GeneModelSpec m;
    m.label = p.zero_jump ? "gene-linear-zero-jump" : "gene-linear";
    m.dim = 1;
    m.lambda = p.lambda;
    const auto rates = p.decay_rates;
    const double a_min = *std::min_element(rates.begin(), rates.end());
    const double a_max = *std::max_element(rates.begin(), rates.end());
    m.flows.n_modes = n_modes;
    m.flows.flow = [rates](int mode, double t, const StateVector& y) {
        return std::exp(-rates[static_cast<std::size_t>(mode - 1)] * t) * y;
    };
    // |e^{-at} - e^{-bt}| <= t|a - b|.
    m.flows.bound_map = [spread = a_max - a_min](const StateVector& y) { return spread * std::abs(y[0]); };
    m.flows.L = 1.0;
    m.flows.alpha = -a_min;

    const bool zero = p.zero_jump;
    m.jumps.theta_lo = 0.0;
    m.jumps.theta_hi = 1.0;
    m.jumps.map = [zero](double th, const StateVector& y) { return zero ? StateVector(1, 0.0) : th * y; };

    const double k = p.density_power;
    m.density.pdf = [k](const StateVector&, double th) {
        if (th < 0.0 || th > 1.0) return 0.0;
        return k == 0.0 ? 1.0 : (k + 1.0) * std::pow(th, k);
    };
    m.density.inverse_cdf = [k](const StateVector&, double u) { return k == 0.0 ? u : std::pow(u, 1.0 / (k + 1.0)); };
    m.density.envelope = k + 1.0;

    m.switching.n_modes = n_modes;
    m.switching.prob = [rows](const StateVector&, int i, int j) {
        return rows[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
    };

    if (p.epsilon > 0.0) {
        m.noise.kind = NoiseSpec::Kind::uniform_box;
        m.noise.lo_fraction = {0.0};
        m.noise.hi_fraction = {1.0};
    }
    m.epsilon = p.epsilon;
    m.epsilon_star = p.epsilon_star;
    m.r = p.r;
    m.y_bar = StateVector{0.0};
    m.metric.mode_weight = p.mode_weight;
    m.in_domain = [](const StateVector& y) { return y[0] >= 0.0; };

    // Moments of θ under (k+1)θ^k: E θ^s = (k+1)/(k+1+s).
    double delta_pi = 1.0;
    for (int i1 = 0; i1 < n_modes; ++i1)
        for (int i2 = 0; i2 < n_modes; ++i2) {
            double s = 0.0;
            for (int j = 0; j < n_modes; ++j) s += std::min(rows[i1][j], rows[i2][j]);
            delta_pi = std::min(delta_pi, s);
        }
    DeclaredConstants& d = m.declared;
    d.L_w = zero ? 0.0 : (k + 1.0) / (k + 2.0);
    d.L_w_star = zero ? 0.0 : (k + 1.0) / (k + 3.0 + p.r);
    d.L_pi = 0.0;
    d.L_p = 0.0;
    d.delta_pi = delta_pi;
    // Θ(y1,y2) = [0, L_w] for θy; all of Θ when w ≡ 0.
    d.delta_p = zero ? 1.0 : std::pow(d.L_w, k + 1.0);
    d.a1_bound = 1.0;
    m.validate();
    return m;
}

GeneModelSpec reference_instance() {
    GeneModelSpec m = linear_gene_model(LinearGeneParams{});
    m.label = "gene-reference";
    return m;
}

double sample_holding_time(const GeneModelSpec& m, RngStream& rng) { return rng.exponential(m.lambda); }

double sample_theta(const GeneModelSpec& m, const StateVector& z, RngStream& rng) {
    const double lo = m.jumps.theta_lo, hi = m.jumps.theta_hi;
    if (m.density.inverse_cdf) return m.density.inverse_cdf(z, rng.uniform());
    for (std::size_t attempt = 0; attempt < m.max_rejections; ++attempt) {
        const double th = rng.uniform(lo, hi);
        const double p = m.density.pdf(z, th);
        if (rng.uniform() * m.density.envelope <= p) return th;
    }
    throw SamplingError("θ rejection sampler exhausted its attempts");
}

StateVector sample_noise(const GeneModelSpec& m, RngStream& rng) {
    StateVector h(m.dim, 0.0);
    if (m.noise.kind == NoiseSpec::Kind::none || m.epsilon == 0.0) return h;
    for (std::size_t k = 0; k < m.dim; ++k)
        h[k] = m.epsilon * rng.uniform(m.noise.lo_fraction[k], m.noise.hi_fraction[k]);
    return h;
}

int sample_mode(const GeneModelSpec& m, const StateVector& y, int mode, RngStream& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    const int n = m.switching.n_modes;
    for (int j = 1; j < n; ++j) {
        cum += m.switching.prob(y, mode, j);
        if (u < cum) return j;
    }
    return n;
}

Point sample_post_jump(const GeneModelSpec& m, const Point& state, RngStream& rng) {
    const double dtau = sample_holding_time(m, rng);
    const StateVector z = m.flows.flow(state.mode, dtau, state.y);
    const double theta = sample_theta(m, z, rng);
    const StateVector h = sample_noise(m, rng);
    const StateVector y = m.jumps.map(theta, z) + h;
    const int j = sample_mode(m, y, state.mode, rng);
    return {y, j};
}

Kernel gene_kernel(const GeneModelSpec& m) {
    m.validate();
    std::map<std::string, double> params{{"lambda", m.lambda}, {"epsilon", m.epsilon},
                                         {"epsilon_star", m.epsilon_star}, {"r", m.r},
                                         {"mode_weight", m.metric.mode_weight}};
    return Kernel(m.label, std::move(params),
                  [m](const Point& x, RngStream& rng) { return sample_post_jump(m, x, rng); });
}

std::string to_string(ConditionName c) {
    switch (c) {
        case ConditionName::A1_star: return "A1*";
        case ConditionName::A2: return "A2";
        case ConditionName::A3: return "A3";
        case ConditionName::A3_star: return "A3*";
        case ConditionName::A4_pi: return "A4.pi";
        case ConditionName::A4_p: return "A4.p";
        case ConditionName::A5_pi: return "A5.pi";
        case ConditionName::A5_p: return "A5.p";
    }
    return "?";
}

ConditionEntry check_condition_A(const GeneModelSpec& m, ConditionName which, const ConditionOptions& opt,
                                 const RngStream& rng) {
    m.validate();
    if (opt.sample_budget < 100) throw InputError("condition checks need a sample budget of at least 100");
    RngStream s = rng;
    const std::size_t n = opt.sample_budget;
    const double q = 2.0 + m.r;
    const std::string name = to_string(which);
    const double th_lo = m.jumps.theta_lo, th_hi = m.jumps.theta_hi;

    switch (which) {
        case ConditionName::A1_star: {
            // Each point costs a nested quadrature, so the budget is thinned.
            const std::size_t points = std::max<std::size_t>(16, n / 20);
            const double sup = a1_star_sup(m, points, s);
            auto e = upper_entry(name, sup, m.declared.a1_bound, opt.tolerance, points);
            e.note = "supremum over sampled start states of the (A1*) time integral";
            return e;
        }
        case ConditionName::A2: {
            double worst = 0.0;
            std::size_t used = 0;
            for (std::size_t k = 0; k < n; ++k) {
                auto [p1, p2] = draw_test_pair(m, k, s);
                const double t = std::exp(std::log(1e-4) + std::log(1e6) * s.uniform()) / m.lambda;
                const double lhs = ynorm(m, m.flows.flow(p1.mode, t, p1.y) - m.flows.flow(p2.mode, t, p2.y));
                const double rhs = m.flows.L * std::exp(m.flows.alpha * t) * ynorm(m, p1.y - p2.y) +
                                   t * m.flows.bound_map(p2.y) * (p1.mode != p2.mode ? 1.0 : 0.0);
                if (rhs <= 0.0) {
                    if (lhs > 0.0) worst = kInf;
                    continue;
                }
                worst = std::max(worst, lhs / rhs);
                ++used;
            }
            auto e = upper_entry(name, worst, 1.0, opt.tolerance, used);
            e.note = "largest ratio of the flow distance to the declared (A2) bound";
            return e;
        }
        case ConditionName::A3:
        case ConditionName::A3_star: {
            const bool star = which == ConditionName::A3_star;
            double worst = 0.0;
            std::size_t used = 0;
            for (std::size_t k = 0; k < n; ++k) {
                auto [p1, p2] = draw_test_pair(m, k, s);
                const double dy = ynorm(m, p1.y - p2.y);
                if (dy <= 1e-9 * (1.0 + ynorm(m, p1.y))) continue;
                auto f = [&](double th) {
                    const double dw = ynorm(m, m.jumps.map(th, p1.y) - m.jumps.map(th, p2.y));
                    return (star ? std::pow(dw, q) : dw) * m.density.pdf(p1.y, th);
                };
                const double v = theta_integral(f, th_lo, th_hi).value;
                worst = std::max(worst, v / (star ? std::pow(dy, q) : dy));
                ++used;
            }
            auto e = upper_entry(name, worst, star ? m.declared.L_w_star : m.declared.L_w, opt.tolerance, used);
            e.note = star ? "largest ratio of the (2+r)-moment jump spread to ‖y1-y2‖^{2+r}"
                          : "largest ratio of the mean jump spread to ‖y1-y2‖";
            return e;
        }
        case ConditionName::A4_pi: {
            double worst = 0.0;
            std::size_t used = 0;
            for (std::size_t k = 0; k < n; ++k) {
                auto [p1, p2] = draw_test_pair(m, k, s);
                const double dy = ynorm(m, p1.y - p2.y);
                if (dy <= 1e-9 * (1.0 + ynorm(m, p1.y))) continue;
                for (int i = 1; i <= m.switching.n_modes; ++i) {
                    double sum = 0.0;
                    for (int j = 1; j <= m.switching.n_modes; ++j)
                        sum += std::abs(m.switching.prob(p1.y, i, j) - m.switching.prob(p2.y, i, j));
                    worst = std::max(worst, sum / dy);
                }
                ++used;
            }
            return upper_entry(name, worst, m.declared.L_pi, opt.tolerance, used);
        }
        case ConditionName::A4_p: {
            double worst = 0.0;
            std::size_t used = 0;
            for (std::size_t k = 0; k < n; ++k) {
                auto [p1, p2] = draw_test_pair(m, k, s);
                const double dy = ynorm(m, p1.y - p2.y);
                if (dy <= 1e-9 * (1.0 + ynorm(m, p1.y))) continue;
                auto f = [&](double th) { return std::abs(m.density.pdf(p1.y, th) - m.density.pdf(p2.y, th)); };
                worst = std::max(worst, theta_integral(f, th_lo, th_hi).value / dy);
                ++used;
            }
            return upper_entry(name, worst, m.declared.L_p, opt.tolerance, used);
        }
        case ConditionName::A5_pi: {
            double worst = kInf;
            for (std::size_t k = 0; k < n; ++k) {
                auto [p1, p2] = draw_test_pair(m, k, s);
                for (int i1 = 1; i1 <= m.switching.n_modes; ++i1)
                    for (int i2 = 1; i2 <= m.switching.n_modes; ++i2) {
                        double sum = 0.0;
                        for (int j = 1; j <= m.switching.n_modes; ++j)
                            sum += std::min(m.switching.prob(p1.y, i1, j), m.switching.prob(p2.y, i2, j));
                        worst = std::min(worst, sum);
                    }
            }
            return lower_entry(name, worst, m.declared.delta_pi, opt.tolerance, n);
        }
        case ConditionName::A5_p: {
            double worst = kInf;
            std::size_t used = 0;
            const double Lw = m.declared.L_w;
            for (std::size_t k = 0; k < n; ++k) {
                auto [p1, p2] = draw_test_pair(m, k, s);
                const double dy = ynorm(m, p1.y - p2.y);
                auto margin = [&](double th) {
                    return ynorm(m, m.jumps.map(th, p1.y) - m.jumps.map(th, p2.y)) - Lw * dy;
                };
                auto overlap = [&](double th) { return std::min(m.density.pdf(p1.y, th), m.density.pdf(p2.y, th)); };
                double mass = 0.0;
                for (auto [a, b] : sublevel_intervals(margin, th_lo, th_hi)) mass += theta_integral(overlap, a, b).value;
                worst = std::min(worst, mass);
                ++used;
            }
            auto e = lower_entry(name, worst, m.declared.delta_p, opt.tolerance, used);
            e.note = "smallest overlap mass of p over Θ(y1,y2)";
            return e;
        }
    }
    throw InputError("unknown condition");
}

ConditionEntry balance_condition(const GeneModelSpec& m) {
    ConditionEntry e;
    e.name = "balance";
    e.value = m.flows.L * m.declared.L_w + m.flows.alpha / m.lambda;
    e.ci = {e.value, e.value};
    e.declared = 1.0;
    e.margin = 1.0 - e.value;
    e.pass = e.margin > 0.0;
    e.note = "L·L_w + α/λ < 1";
    return e;
}

ConditionEntry lil_condition(const GeneModelSpec& m) {
    ConditionEntry e;
    e.name = "lil_condition";
    const double q = 2.0 + m.r;
    e.value = std::pow(m.flows.L, q) * m.declared.L_w_star + q * m.flows.alpha / m.lambda;
    e.ci = {e.value, e.value};
    e.declared = 1.0;
    e.margin = 1.0 - e.value;
    e.pass = e.margin > 0.0;
    e.note = "L^{2+r}·L_w* + (2+r)α/λ < 1";
    return e;
}

double analytic_a_star(const GeneModelSpec& m) {
    const double q = 2.0 + m.r;
    const double denom = m.lambda - q * m.flows.alpha;
    if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return m.lambda * m.declared.L_w_star * std::pow(m.flows.L, q) / denom;
}

DriftConstants drift_constants(const GeneModelSpec& m, const DriftOptions& opt, const RngStream& rng) {
    m.validate();
    if (opt.sample_budget < 1000) throw InputError("drift estimation needs a sample budget of at least 1000");
    if (opt.grid_points < 3) throw InputError("drift grid needs at least three points");
    const double q = 2.0 + m.r;
    const double horizon = m.test_horizon();
    const int modes = m.flows.n_modes;
    const std::size_t g = opt.grid_points;
    const std::size_t n_states = g * static_cast<std::size_t>(modes);
    const std::size_t inner = std::max<std::size_t>(2, opt.sample_budget / n_states);

    // Radii: ȳ itself, then geometric up to the test horizon along the first
    // direction that stays in Y.
    StateVector dir(m.dim, 0.0);
    dir[0] = 1.0;
    if (!m.in_domain(m.y_bar + horizon * dir)) dir[0] = -1.0;
    std::vector<double> radii(g);
    radii[0] = 0.0;
    for (std::size_t k = 1; k < g; ++k)
        radii[k] = horizon * std::pow(1e-4, static_cast<double>(g - 1 - k) / static_cast<double>(g - 2));

    struct Cell {
        RunningStats v, vq;
    };
    std::vector<Cell> cells(n_states);
    parallel_for(n_states, opt.workers, [&](std::size_t idx) {
        const int mode = 1 + static_cast<int>(idx / g);
        const Point x{m.y_bar + radii[idx % g] * dir, mode};
        RngStream s = rng.child(idx);
        for (std::size_t k = 0; k < inner; ++k) {
            const Point nx = sample_post_jump(m, x, s);
            const double v = ynorm(m, nx.y - m.y_bar);
            cells[idx].v.add(v);
            cells[idx].vq.add(std::pow(v, q));
        }
    });

    auto fit_line = [&](const std::vector<double>& xs, const std::vector<double>& ys,
                        const std::vector<double>& vars) {
        Eigen::MatrixXd X(xs.size(), 2);
        Eigen::VectorXd Y(xs.size()), W(xs.size());
        double max_var = 0.0;
        for (double v : vars) max_var = std::max(max_var, v);
        const double floor = max_var > 0.0 ? max_var * 1e-20 : 1.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            X(k, 0) = 1.0;
            X(k, 1) = xs[k];
            Y(k) = ys[k];
            W(k) = 1.0 / std::max(vars[k], floor);
        }
        return weighted_least_squares(X, Y, W, max_var > 0.0);
    };

    DriftConstants out;
    for (int mode = 1; mode <= modes; ++mode) {
        std::vector<double> xs, mean_v, var_v, root, var_root;
        for (std::size_t k = 0; k < g; ++k) {
            const Cell& c = cells[static_cast<std::size_t>(mode - 1) * g + k];
            xs.push_back(radii[k]);
            mean_v.push_back(c.v.mean());
            var_v.push_back(c.v.variance() / static_cast<double>(inner));
            const double mq = c.vq.mean();
            const double rt = std::pow(mq, 1.0 / q);
            root.push_back(rt);
            const double se_mq = c.vq.stderr_of_mean();
            const double d = mq > 0.0 ? se_mq / (q * std::pow(mq, (q - 1.0) / q)) : 0.0;
            var_root.push_back(d * d);
        }
        const LinearFit f1 = fit_line(xs, mean_v, var_v);
        const LinearFit f2 = fit_line(xs, root, var_root);
        ModeDrift md;
        md.mode = mode;
        md.intercept = make_estimate(f1.coef(0), std::sqrt(std::max(0.0, f1.cov(0, 0))), opt.confidence);
        md.slope = make_estimate(f1.coef(1), std::sqrt(std::max(0.0, f1.cov(1, 1))), opt.confidence);
        md.moment_intercept = make_estimate(f2.coef(0), std::sqrt(std::max(0.0, f2.cov(0, 0))), opt.confidence);
        md.moment_slope = make_estimate(f2.coef(1), std::sqrt(std::max(0.0, f2.cov(1, 1))), opt.confidence);
        md.r_squared = f1.r_squared;
        out.per_mode.push_back(md);
    }
    const ModeDrift* worst_a = &out.per_mode.front();
    const ModeDrift* worst_b = &out.per_mode.front();
    const ModeDrift* worst_m = &out.per_mode.front();
    for (const auto& md : out.per_mode) {
        if (md.slope.value > worst_a->slope.value) worst_a = &md;
        if (md.intercept.value > worst_b->intercept.value) worst_b = &md;
        if (md.moment_slope.value > worst_m->moment_slope.value) worst_m = &md;
    }
    out.a = worst_a->slope;
    out.b = worst_b->intercept;
    const Estimate& ms = worst_m->moment_slope;
    auto pw = [q](double v) { return std::pow(std::max(0.0, v), q); };
    out.a_star_mc = {pw(ms.value), q * std::pow(std::max(0.0, ms.value), q - 1.0) * ms.stderr,
                     {pw(ms.ci.lo), pw(ms.ci.hi)}};
    out.a_star = analytic_a_star(m);
    const double a1 = a1_star_sup(m, 16, rng.child(n_states));
    out.b_star = std::pow(a1, 1.0 / q) + m.epsilon_star + m.metric.mode_weight;
    out.pass = out.a.ci.hi < 1.0;
    return out;
}

ConditionReport certify_model(const GeneModelSpec& m, const ConditionOptions& copt, const DriftOptions& dopt,
                              const RngStream& rng) {
    ConditionReport rep;
    rep.test_horizon = m.test_horizon();
    const ConditionName all[] = {ConditionName::A1_star, ConditionName::A2,    ConditionName::A3,
                                 ConditionName::A3_star, ConditionName::A4_pi, ConditionName::A4_p,
                                 ConditionName::A5_pi,   ConditionName::A5_p};
    std::uint64_t idx = 0;
    for (ConditionName c : all) rep.entries.push_back(check_condition_A(m, c, copt, rng.child(idx++)));
    rep.entries.push_back(balance_condition(m));
    rep.entries.push_back(lil_condition(m));
    rep.drift = drift_constants(m, dopt, rng.child(idx++));
    rep.all_pass = rep.drift.pass;
    for (const auto& e : rep.entries) rep.all_pass = rep.all_pass && e.pass;
    return rep;
}

}  // namespace lilkit
