#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lilkit/rng.hpp"
#include "lilkit/space.hpp"
#include "lilkit/stats.hpp"

namespace lilkit {

/// Weighted atoms approximating a probability measure on X.
class EmpiricalMeasure {
  public:
    EmpiricalMeasure(std::vector<Point> atoms, std::vector<double> weights);

    static EmpiricalMeasure uniform(std::vector<Point> atoms);
    static EmpiricalMeasure dirac(const Point& p);

    std::size_t size() const noexcept { return atoms_.size(); }
    std::span<const Point> atoms() const noexcept { return atoms_; }
    std::span<const double> weights() const noexcept { return weights_; }
    const Point& atom(std::size_t i) const { return atoms_[i]; }
    double weight(std::size_t i) const { return weights_[i]; }

    /// Σ w_i f(atom_i) with compensated summation.
    double expectation(const std::function<double(const Point&)>& f) const;
    std::size_t sample_index(RngStream& rng) const;
    const Point& sample(RngStream& rng) const { return atoms_[sample_index(rng)]; }

  private:
    std::vector<Point> atoms_;
    std::vector<double> weights_;
    std::vector<double> cumulative_;
};

/// Systematic (stratified) resampling to `count` equally weighted atoms.
EmpiricalMeasure stratified_resample(const EmpiricalMeasure& mu, std::size_t count, RngStream& rng);

/// A Markov transition kernel given by an exact sampler.
class Kernel {
  public:
    using Sampler = std::function<Point(const Point&, RngStream&)>;

    Kernel(std::string label, std::map<std::string, double> params, Sampler sampler,
           std::optional<EmpiricalMeasure> known_invariant = std::nullopt);

    Point step(const Point& x, RngStream& rng) const { return sampler_(x, rng); }

    const std::string& label() const noexcept { return label_; }
    const std::map<std::string, double>& params() const noexcept { return params_; }
    /// The invariant measure, when it is known in closed form.
    const std::optional<EmpiricalMeasure>& known_invariant() const noexcept { return invariant_; }

  private:
    std::string label_;
    std::map<std::string, double> params_;
    Sampler sampler_;
    std::optional<EmpiricalMeasure> invariant_;
};

/// n + 1 points; element 0 is the start.
std::vector<Point> simulate(const Kernel& k, const Point& start, std::size_t n, RngStream& rng);

struct PushOptions {
    std::size_t atom_budget = 100000;
    int workers = 1;
};

/// Empirical approximation of P^n mu. Every atom spawns `fanout` children on
/// the first step and one child on each later step; when the atom count would
/// exceed the budget the measure is stratified-resampled down to it.
EmpiricalMeasure n_step_push(const Kernel& k, const EmpiricalMeasure& mu, std::size_t n,
                             std::size_t fanout, const RngStream& rng, const PushOptions& opt = {});

/// Monte-Carlo estimate of U^i f(x) from n_samples independent paths.
Estimate dual_apply(const Kernel& k, const TestFunction& f, const Point& x, std::size_t power,
                    std::size_t n_samples, const RngStream& rng, int workers = 1);

Kernel iid_kernel(EmpiricalMeasure nu);

struct NoiseLaw {
    enum class Kind { gaussian, uniform };
    Kind kind = Kind::gaussian;
    /// Standard deviation for gaussian, half-width for uniform.
    double scale = 1.0;

    double variance() const;
};

/// x' = κx + noise on d = 1 with the mode held fixed.
Kernel ar1_kernel(double kappa, NoiseLaw noise);

}  // namespace lilkit
