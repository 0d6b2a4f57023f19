#pragma once

#include <span>
#include <vector>

namespace lilkit {

/// The shortest (equivalently, minimal Dirichlet energy) path through a
/// piecewise-linear tube lo(x) <= f(x) <= hi(x) with both ends pinned.
struct TautString {
    std::vector<double> knot_x;
    std::vector<double> knot_y;
    double energy = 0.0;  ///< ∫ f'(x)^2 dx
};

/// Nodes x must be strictly increasing and lo <= hi. The pinned values at the
/// first and last node override the tube there.
TautString taut_string(std::span<const double> x, std::span<const double> lo, std::span<const double> hi,
                       double start, double end);

/// Minimal energy with the left end pinned at `start` and the right end free.
/// The tube is mirrored about the last node, which pins the far end at
/// `start` by symmetry; the free-end energy is half of the mirrored one.
double taut_string_energy_free_end(std::span<const double> x, std::span<const double> lo,
                                   std::span<const double> hi, double start);

}  // namespace lilkit
