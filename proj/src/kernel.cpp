#include "lilkit/kernel.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "lilkit/errors.hpp"
#include "lilkit/parallel.hpp"

namespace lilkit {

EmpiricalMeasure::EmpiricalMeasure(std::vector<Point> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (atoms_.empty()) throw InputError("empirical measure needs at least one atom");
    if (atoms_.size() != weights_.size()) throw InputError("atoms and weights differ in length");
    const std::size_t dim = atoms_.front().y.size();
    CompensatedSum total;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        if (!(weights_[i] >= 0.0)) throw InputError("negative weight");
        if (atoms_[i].y.size() != dim) throw InputError("atoms differ in dimension");
        total.add(weights_[i]);
    }
    if (std::abs(total.value() - 1.0) > 1e-12)
        throw InputError(fmt::format("weights sum to {} instead of 1", total.value()));
    cumulative_.resize(weights_.size());
    CompensatedSum run;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        run.add(weights_[i]);
        cumulative_[i] = run.value();
    }
}

EmpiricalMeasure EmpiricalMeasure::uniform(std::vector<Point> atoms) {
    std::vector<double> w(atoms.size(), atoms.empty() ? 0.0 : 1.0 / static_cast<double>(atoms.size()));
    return EmpiricalMeasure(std::move(atoms), std::move(w));
}

EmpiricalMeasure EmpiricalMeasure::dirac(const Point& p) { return EmpiricalMeasure({p}, {1.0}); }

double EmpiricalMeasure::expectation(const std::function<double(const Point&)>& f) const {
    CompensatedSum s;
    for (std::size_t i = 0; i < atoms_.size(); ++i) s.add(weights_[i] * f(atoms_[i]));
    return s.value();
}

std::size_t EmpiricalMeasure::sample_index(RngStream& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), atoms_.size() - 1);
}

EmpiricalMeasure stratified_resample(const EmpiricalMeasure& mu, std::size_t count, RngStream& rng) {
    if (count == 0) throw InputError("resample count must be positive");
    std::vector<Point> out;
    out.reserve(count);
    const double u0 = rng.uniform();
    std::size_t j = 0;
    double cum = mu.weight(0);
    for (std::size_t k = 0; k < count; ++k) {
        const double target = (static_cast<double>(k) + u0) / static_cast<double>(count);
        while (cum < target && j + 1 < mu.size()) cum += mu.weight(++j);
        out.push_back(mu.atom(j));
    }
    return EmpiricalMeasure::uniform(std::move(out));
}

Kernel::Kernel(std::string label, std::map<std::string, double> params, Sampler sampler,
               std::optional<EmpiricalMeasure> known_invariant)
    : label_(std::move(label)),
      params_(std::move(params)),
      sampler_(std::move(sampler)),
      invariant_(std::move(known_invariant)) {
    if (!sampler_) throw InputError("kernel needs a sampler");
}

std::vector<Point> simulate(const Kernel& k, const Point& start, std::size_t n, RngStream& rng) {
    std::vector<Point> traj;
    traj.reserve(n + 1);
    traj.push_back(start);
    for (std::size_t t = 0; t < n; ++t) traj.push_back(k.step(traj.back(), rng));
    return traj;
}

EmpiricalMeasure n_step_push(const Kernel& k, const EmpiricalMeasure& mu, std::size_t n,
                             std::size_t fanout, const RngStream& rng, const PushOptions& opt) {
    if (fanout == 0) throw InputError("fanout must be at least 1");
    if (n == 0) return mu;
    std::vector<Point> atoms(mu.atoms().begin(), mu.atoms().end());
    std::vector<double> weights(mu.weights().begin(), mu.weights().end());
    for (std::size_t step = 0; step < n; ++step) {
        const std::size_t children = step == 0 ? fanout : 1;
        std::vector<Point> next(atoms.size() * children);
        std::vector<double> next_w(next.size());
        const RngStream step_rng = rng.child(step);
        parallel_for(atoms.size(), opt.workers, [&](std::size_t a) {
            RngStream r = step_rng.child(a);
            for (std::size_t c = 0; c < children; ++c) {
                next[a * children + c] = k.step(atoms[a], r);
                next_w[a * children + c] = weights[a] / static_cast<double>(children);
            }
        });
        atoms = std::move(next);
        weights = std::move(next_w);
        if (atoms.size() > opt.atom_budget) {
            RngStream r = rng.child(n + step + 1);
            EmpiricalMeasure res = stratified_resample(EmpiricalMeasure(atoms, weights), opt.atom_budget, r);
            atoms.assign(res.atoms().begin(), res.atoms().end());
            weights.assign(res.weights().begin(), res.weights().end());
        }
    }
    return EmpiricalMeasure(std::move(atoms), std::move(weights));
}

Estimate dual_apply(const Kernel& k, const TestFunction& f, const Point& x, std::size_t power,
                    std::size_t n_samples, const RngStream& rng, int workers) {
    if (power == 0) return {f(x), 0.0, {f(x), f(x)}};
    if (n_samples < 2) throw InputError("dual_apply needs at least two samples");
    std::vector<double> values(n_samples);
    parallel_for(n_samples, workers, [&](std::size_t j) {
        RngStream r = rng.child(j);
        Point p = x;
        for (std::size_t i = 0; i < power; ++i) p = k.step(p, r);
        values[j] = f(p);
    });
    return mean_estimate(values);
}

Kernel iid_kernel(EmpiricalMeasure nu) {
    auto shared = std::make_shared<const EmpiricalMeasure>(nu);
    return Kernel("iid", {{"atoms", static_cast<double>(nu.size())}},
                  [shared](const Point&, RngStream& rng) { return shared->sample(rng); },
                  std::move(nu));
}

double NoiseLaw::variance() const {
    return kind == Kind::gaussian ? scale * scale : scale * scale / 3.0;
}

Kernel ar1_kernel(double kappa, NoiseLaw noise) {
    if (!(std::abs(kappa) < 1.0)) throw InputError("ar1 needs |kappa| < 1");
    if (!(noise.scale > 0.0) || !std::isfinite(noise.scale)) throw InputError("ar1 noise scale must be positive");
    Kernel::Sampler s;
    if (noise.kind == NoiseLaw::Kind::gaussian) {
        s = [kappa, sd = noise.scale](const Point& x, RngStream& rng) {
            return Point{StateVector{kappa * x.y[0] + sd * rng.normal()}, x.mode};
        };
    } else {
        s = [kappa, h = noise.scale](const Point& x, RngStream& rng) {
            return Point{StateVector{kappa * x.y[0] + rng.uniform(-h, h)}, x.mode};
        };
    }
    const double kind = noise.kind == NoiseLaw::Kind::gaussian ? 0.0 : 1.0;
    return Kernel("ar1", {{"kappa", kappa}, {"noise_scale", noise.scale}, {"noise_uniform", kind}},
                  std::move(s));
}

}  // namespace lilkit
