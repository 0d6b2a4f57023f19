#include "lilkit/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lilkit/errors.hpp"
#include "lilkit/stats.hpp"

namespace lilkit {

namespace {

constexpr double kReducedCostTol = 1e-13;

struct BasicEdge {
    std::size_t i;
    std::size_t j;
    double flow;
};

/// Spanning-tree basis over n1 source nodes [0, n1) and n2 sink nodes [n1, n1 + n2).
class TreeBasis {
  public:
    TreeBasis(std::size_t n1, std::size_t n2, std::span<const double> cost)
        : n1_(n1), n2_(n2), cost_(cost), adj_(n1 + n2), parent_edge_(n1 + n2), depth_(n1 + n2),
          u_(n1), v_(n2) {}

    void add(std::size_t i, std::size_t j, double flow) {
        edges_.push_back({i, j, flow});
        adj_[i].push_back(edges_.size() - 1);
        adj_[n1_ + j].push_back(edges_.size() - 1);
    }

    double c(std::size_t i, std::size_t j) const { return cost_[i * n2_ + j]; }

    /// Potentials with u[0] = 0, plus parent pointers and depths for cycle search.
    void refresh() {
        std::fill(depth_.begin(), depth_.end(), -1);
        std::vector<std::size_t> queue{0};
        depth_[0] = 0;
        u_[0] = 0.0;
        parent_edge_[0] = edges_.size();
        for (std::size_t h = 0; h < queue.size(); ++h) {
            const std::size_t node = queue[h];
            for (std::size_t e : adj_[node]) {
                const BasicEdge& be = edges_[e];
                const std::size_t other = node < n1_ ? n1_ + be.j : be.i;
                if (depth_[other] >= 0) continue;
                depth_[other] = depth_[node] + 1;
                parent_edge_[other] = e;
                if (other < n1_)
                    u_[other] = c(be.i, be.j) - v_[be.j];
                else
                    v_[other - n1_] = c(be.i, be.j) - u_[be.i];
                queue.push_back(other);
            }
        }
        if (queue.size() != n1_ + n2_) throw Error("transport basis is not a spanning tree");
    }

    double reduced(std::size_t i, std::size_t j) const { return c(i, j) - u_[i] - v_[j]; }

    /// Brings (i, j) into the basis and removes the blocking edge of the cycle.
    void pivot(std::size_t i, std::size_t j) {
        // Tree path between source i and sink j, split at their common ancestor.
        std::vector<std::size_t> from_i, from_j;
        std::size_t a = i, b = n1_ + j;
        while (depth_[a] > depth_[b]) a = climb(a, from_i);
        while (depth_[b] > depth_[a]) b = climb(b, from_j);
        while (a != b) {
            a = climb(a, from_i);
            b = climb(b, from_j);
        }
        // Cycle orientation: entering edge i->j gains flow, then the path from
        // j back to i alternates -, +, -, ...
        std::vector<std::size_t> cycle(from_j.begin(), from_j.end());
        cycle.insert(cycle.end(), from_i.rbegin(), from_i.rend());
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave = 0;
        for (std::size_t k = 0; k < cycle.size(); k += 2) {
            const double f = edges_[cycle[k]].flow;
            if (f < theta) {
                theta = f;
                leave = k;
            }
        }
        theta = std::max(theta, 0.0);
        for (std::size_t k = 0; k < cycle.size(); ++k) {
            double& f = edges_[cycle[k]].flow;
            f += (k % 2 == 0) ? -theta : theta;
            if (f < 0.0) f = 0.0;
        }
        const std::size_t slot = cycle[leave];
        const bool source_side = leave >= from_j.size();
        const double rc = reduced(i, j);
        detach(slot);
        edges_[slot] = {i, j, theta};
        adj_[i].push_back(slot);
        adj_[n1_ + j].push_back(slot);

        // The subtree cut off by the leaving edge hangs from the entering edge
        // now; shift its potentials and re-root it there.
        const std::size_t root = source_side ? i : n1_ + j;
        const std::size_t anchor = source_side ? n1_ + j : i;
        const double shift = source_side ? rc : -rc;
        parent_edge_[root] = slot;
        depth_[root] = depth_[anchor] + 1;
        std::vector<std::size_t> queue{root};
        for (std::size_t h = 0; h < queue.size(); ++h) {
            const std::size_t node = queue[h];
            if (node < n1_)
                u_[node] += shift;
            else
                v_[node - n1_] -= shift;
            for (std::size_t e : adj_[node]) {
                if (e == parent_edge_[node]) continue;
                const BasicEdge& be = edges_[e];
                const std::size_t other = node < n1_ ? n1_ + be.j : be.i;
                parent_edge_[other] = e;
                depth_[other] = depth_[node] + 1;
                queue.push_back(other);
            }
        }
    }

    const std::vector<BasicEdge>& edges() const { return edges_; }
    const std::vector<double>& u() const { return u_; }
    const std::vector<double>& v() const { return v_; }

  private:
    std::size_t climb(std::size_t node, std::vector<std::size_t>& path) const {
        const std::size_t e = parent_edge_[node];
        path.push_back(e);
        const BasicEdge& be = edges_[e];
        return node < n1_ ? n1_ + be.j : be.i;
    }

    void detach(std::size_t e) {
        auto drop = [e](std::vector<std::size_t>& list) {
            list.erase(std::find(list.begin(), list.end(), e));
        };
        drop(adj_[edges_[e].i]);
        drop(adj_[n1_ + edges_[e].j]);
    }

    std::size_t n1_, n2_;
    std::span<const double> cost_;
    std::vector<BasicEdge> edges_;
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<std::size_t> parent_edge_;
    std::vector<long> depth_;
    std::vector<double> u_, v_;
};

std::vector<std::size_t> resolve_order(std::span<const std::size_t> o, std::size_t n) {
    std::vector<std::size_t> v(n);
    if (o.size() == n) {
        v.assign(o.begin(), o.end());
        std::vector<char> seen(n, 0);
        for (std::size_t x : v) {
            if (x >= n || seen[x]) throw InputError("transport order is not a permutation");
            seen[x] = 1;
        }
    } else if (o.empty()) {
        std::iota(v.begin(), v.end(), 0);
    } else {
        throw InputError("transport order has the wrong length");
    }
    return v;
}

}  // namespace

TransportResult solve_transport(std::span<const double> supply, std::span<const double> demand,
                                std::span<const double> cost, std::span<const std::size_t> supply_order,
                                std::span<const std::size_t> demand_order) {
    const std::size_t n1 = supply.size();
    const std::size_t n2 = demand.size();
    if (n1 == 0 || n2 == 0) throw InputError("transport needs nonempty supply and demand");
    if (cost.size() != n1 * n2) throw InputError("cost matrix has the wrong size");
    for (double c : cost)
        if (!(c >= 0.0) || !std::isfinite(c)) throw InputError("transport costs must be finite and nonnegative");
    for (double s : supply)
        if (!(s >= 0.0)) throw InputError("negative supply");
    for (double d : demand)
        if (!(d >= 0.0)) throw InputError("negative demand");

    // North-west-corner basis: every step advances exactly one index, so the
    // plan has n1 + n2 - 1 (possibly degenerate) edges and spans all nodes.
    TreeBasis basis(n1, n2, cost);
    {
        const std::vector<std::size_t> ro = resolve_order(supply_order, n1);
        const std::vector<std::size_t> co = resolve_order(demand_order, n2);
        std::size_t a = 0, b = 0;
        double sa = supply[ro[0]], sb = demand[co[0]];
        for (;;) {
            const bool last_row = a + 1 == n1;
            const bool last_col = b + 1 == n2;
            if (last_row && last_col) {
                basis.add(ro[a], co[b], std::max(0.0, std::min(sa, sb)));
                break;
            }
            if ((sa <= sb && !last_row) || last_col) {
                basis.add(ro[a], co[b], sa);
                sb = std::max(0.0, sb - sa);
                sa = supply[ro[++a]];
            } else {
                basis.add(ro[a], co[b], sb);
                sa = std::max(0.0, sa - sb);
                sb = demand[co[++b]];
            }
        }
    }

    // Block pricing: scan a block of candidates, pivot on the most negative.
    const std::size_t total = n1 * n2;
    const std::size_t block = std::max<std::size_t>(
        64, static_cast<std::size_t>(std::sqrt(static_cast<double>(total))));
    const std::size_t max_pivots = 50 * (n1 + n2) * (n1 + n2) + 1000;
    std::size_t cursor = 0;
    std::size_t pivots = 0;
    basis.refresh();
    bool fresh = true;
    for (;;) {
        std::size_t scanned = 0;
        double best = -kReducedCostTol;
        std::size_t best_idx = total;
        while (scanned < total) {
            const std::size_t end = std::min(scanned + block, total);
            for (; scanned < end; ++scanned) {
                const std::size_t idx = (cursor + scanned) % total;
                const double rc = basis.reduced(idx / n2, idx % n2);
                if (rc < best) {
                    best = rc;
                    best_idx = idx;
                }
            }
            if (best_idx != total) break;
        }
        if (best_idx == total) {
            // Incremental potentials may drift; certify with recomputed ones.
            if (fresh) break;
            basis.refresh();
            fresh = true;
            continue;
        }
        fresh = false;
        cursor = (cursor + scanned) % total;
        basis.pivot(best_idx / n2, best_idx % n2);
        if (++pivots % 512 == 0) {
            basis.refresh();
            fresh = true;
        }
        if (pivots > max_pivots) throw Error("transport simplex exceeded its pivot limit");
    }

    TransportResult out;
    CompensatedSum value;
    for (const BasicEdge& e : basis.edges())
        if (e.flow > 0.0) {
            value.add(e.flow * basis.c(e.i, e.j));
            out.plan.push_back({e.i, e.j, e.flow});
        }
    std::sort(out.plan.begin(), out.plan.end(), [](const TransportFlow& a, const TransportFlow& b) {
        return a.from < b.from || (a.from == b.from && a.to < b.to);
    });
    out.cost = value.value();
    out.u = basis.u();
    out.v = basis.v();
    out.pivots = pivots;
    return out;
}

}  // namespace lilkit
