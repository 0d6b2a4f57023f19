#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lilkit {

struct TransportFlow {
    std::size_t from = 0;
    std::size_t to = 0;
    double mass = 0.0;
};

struct TransportResult {
    double cost = 0.0;
    std::vector<TransportFlow> plan;
    /// Dual potentials: u[i] + v[j] <= cost(i, j) with equality on the plan.
    std::vector<double> u;
    std::vector<double> v;
    std::size_t pivots = 0;
};

/// Minimum-cost transport between supply and demand vectors (each summing to
/// one) with a dense row-major cost matrix of nonnegative entries.
///
/// Transportation simplex on a spanning-tree basis. The initial basis is the
/// north-west-corner plan along the optional orders (for example atoms sorted
/// by position), and the method stops only when every reduced cost is
/// nonnegative, so the returned value is exact for the full matrix.
TransportResult solve_transport(std::span<const double> supply, std::span<const double> demand,
                                std::span<const double> cost,
                                std::span<const std::size_t> supply_order = {},
                                std::span<const std::size_t> demand_order = {});

}  // namespace lilkit
