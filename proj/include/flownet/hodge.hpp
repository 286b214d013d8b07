#pragma once

// Helmholtz-Hodge decomposition of the net flow on a directed network.
//
//   F_ij = B_ij - B_ji                  net flow (antisymmetric)
//   w_ij = A_ij + A_ji                  weight, in {0, 1, 2}
//   F_ij = Fc_ij + Fg_ij                circular + gradient parts
//   Fg_ij = w_ij (phi_i - phi_j)
//   sum_j Fc_ij = 0                     circular part is divergence-free
//
// Combining gives the Laplacian system  sum_j L_ij phi_j = sum_j F_ij  with
// L_ij = delta_ij sum_k w_ik - w_ij. The kernel of L is the constant vector on
// each connected component; potentials are fixed by a zero mean per component.
//
// A large phi_i marks an upstream account (net sender), a small one a
// downstream account.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flownet/bowtie.hpp"
#include "flownet/error.hpp"
#include "flownet/network.hpp"
#include "flownet/sparse.hpp"
#include "flownet/stats.hpp"

namespace flownet {

enum class WeightKind { flow, frequency };

inline std::string_view to_string(WeightKind k) { return k == WeightKind::flow ? "flow" : "frequency"; }

inline std::optional<WeightKind> parse_weight_kind(std::string_view s) {
    if (s == "flow") return WeightKind::flow;
    if (s == "frequency") return WeightKind::frequency;
    return std::nullopt;
}

// One entry per unordered pair {i, j} with i < j and at least one link.
struct NodePair {
    NodeIndex i = 0;
    NodeIndex j = 0;
    double weight = 0.0;    // w_ij
    double net_flow = 0.0;  // F_ij (F_ji = -F_ij)
};

struct HodgeProblem {
    std::size_t node_count = 0;
    WeightKind kind = WeightKind::frequency;
    std::vector<NodePair> pairs;     // sorted by (i, j)
    CsrMatrix laplacian;
    std::vector<double> divergence;  // sum_j F_ij per node
};

inline HodgeProblem assemble_problem(const FlowNetwork& net, WeightKind kind = WeightKind::frequency) {
    if (net.empty()) throw UsageError("hodge problem on an empty network");
    HodgeProblem prob;
    prob.node_count = net.node_count();
    prob.kind = kind;
    auto value = [kind](const Link& l) {
        return static_cast<double>(kind == WeightKind::flow ? l.flow : l.frequency);
    };

    for (const auto& l : net.links()) {
        const auto* back = net.find_link(l.destination, l.source);
        if (back && l.destination < l.source) continue;  // mutual pair, emitted from the lower end
        NodePair p;
        const double b_fwd = value(l), b_back = back ? value(*back) : 0.0;
        if (l.source < l.destination) {
            p = {l.source, l.destination, back ? 2.0 : 1.0, b_fwd - b_back};
        } else {
            p = {l.destination, l.source, 1.0, -b_fwd};
        }
        prob.pairs.push_back(p);
    }
    std::sort(prob.pairs.begin(), prob.pairs.end(),
              [](const NodePair& a, const NodePair& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });

    const auto n = prob.node_count;
    prob.divergence.assign(n, 0.0);
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
    std::vector<double> degree(n, 0.0);
    for (const auto& p : prob.pairs) {
        prob.divergence[p.i] += p.net_flow;
        prob.divergence[p.j] -= p.net_flow;
        degree[p.i] += p.weight;
        degree[p.j] += p.weight;
        rows[p.i].emplace_back(p.j, -p.weight);
        rows[p.j].emplace_back(p.i, -p.weight);
    }
    auto& lap = prob.laplacian;
    lap.rows = n;
    lap.offsets.assign(1, 0);
    for (std::size_t r = 0; r < n; ++r) {
        rows[r].emplace_back(static_cast<std::uint32_t>(r), degree[r]);
        std::sort(rows[r].begin(), rows[r].end());
        for (const auto& [c, v] : rows[r]) {
            lap.cols.push_back(c);
            lap.values.push_back(v);
        }
        lap.offsets.push_back(lap.cols.size());
    }
    return prob;
}

struct SolverOptions {
    double relative_tolerance = 1e-10;
    std::size_t iteration_factor = 20;  // cap = factor * component size
    bool per_component = true;
};

struct Potentials {
    std::vector<double> phi;
    std::size_t iterations = 0;        // summed over components
    double relative_residual = 0.0;    // worst component
    std::size_t components = 0;
};

// Conjugate gradient per connected component of the weight graph, each with
// its own zero-mean gauge.
inline Potentials solve_potentials(const HodgeProblem& prob, const SolverOptions& opt = {}) {
    const auto n = prob.node_count;
    constexpr auto unset = std::numeric_limits<std::uint32_t>::max();
    const auto& lap = prob.laplacian;

    std::vector<std::uint32_t> comp(n, unset);
    std::vector<std::vector<std::uint32_t>> members;
    for (std::uint32_t s = 0; s < n; ++s) {
        if (comp[s] != unset) continue;
        const auto id = static_cast<std::uint32_t>(members.size());
        members.emplace_back(1, s);
        comp[s] = id;
        auto& queue = members.back();
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const auto u = queue[head];
            for (std::size_t k = lap.offsets[u]; k < lap.offsets[u + 1]; ++k) {
                const auto v = lap.cols[k];
                if (comp[v] == unset) {
                    comp[v] = id;
                    queue.push_back(v);
                }
            }
        }
    }
    if (!opt.per_component && members.size() > 1)
        throw UsageError("weighted graph has " + std::to_string(members.size()) +
                         " components; enable per-component solving");

    Potentials out;
    out.phi.assign(n, 0.0);
    out.components = members.size();
    std::vector<std::uint32_t> local(n, 0);
    for (auto& nodes : members) {
        if (nodes.size() == 1) continue;
        std::sort(nodes.begin(), nodes.end());
        for (std::uint32_t k = 0; k < nodes.size(); ++k) local[nodes[k]] = k;
        CsrMatrix sub;
        sub.rows = nodes.size();
        std::vector<double> rhs(nodes.size());
        for (std::uint32_t k = 0; k < nodes.size(); ++k) {
            const auto u = nodes[k];
            for (std::size_t e = lap.offsets[u]; e < lap.offsets[u + 1]; ++e) {
                sub.cols.push_back(local[lap.cols[e]]);
                sub.values.push_back(lap.values[e]);
            }
            sub.offsets.push_back(sub.cols.size());
            rhs[k] = prob.divergence[u];
        }
        const auto cap = opt.iteration_factor * nodes.size();
        auto res = laplacian_pcg(sub, rhs, opt.relative_tolerance, cap);
        out.iterations += res.iterations;
        out.relative_residual = std::max(out.relative_residual, res.relative_residual);
        if (!res.converged)
            throw ConvergenceError("potential solve did not converge in " + std::to_string(cap) +
                                       " iterations (relative residual " + std::to_string(res.relative_residual) + ")",
                                   res.relative_residual);
        for (std::uint32_t k = 0; k < nodes.size(); ++k) out.phi[nodes[k]] = res.x[k];
    }
    return out;
}

struct PairFlows {
    NodeIndex i = 0;
    NodeIndex j = 0;
    double weight = 0.0;
    double net_flow = 0.0;  // F_ij
    double gradient = 0.0;  // w_ij (phi_i - phi_j)
    double circular = 0.0;  // F_ij - gradient
};

struct HodgeDecomposition {
    std::vector<double> potential;
    std::vector<PairFlows> pairs;

    // sum_j Fc_ij per node
    std::vector<double> circular_divergence() const {
        std::vector<double> div(potential.size(), 0.0);
        for (const auto& p : pairs) {
            div[p.i] += p.circular;
            div[p.j] -= p.circular;
        }
        return div;
    }
};

inline HodgeDecomposition decompose(const HodgeProblem& prob, std::span<const double> phi) {
    if (phi.size() != prob.node_count) throw UsageError("potential vector has wrong length");
    HodgeDecomposition d;
    d.potential.assign(phi.begin(), phi.end());
    d.pairs.reserve(prob.pairs.size());
    for (const auto& p : prob.pairs) {
        const double g = p.weight * (phi[p.i] - phi[p.j]);
        d.pairs.push_back({p.i, p.j, p.weight, p.net_flow, g, p.net_flow - g});
    }
    return d;
}

// ---------------------------------------------------------------------------
// potentials against bowtie position and net demand

struct PotentialHistograms {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t bins = 0;
    // indexed by BowtieComponent (GSCC, IN, OUT, TE)
    std::array<std::vector<std::size_t>, 4> counts;
    std::array<std::optional<double>, 4> mean;

    double bin_width() const { return (hi - lo) / static_cast<double>(bins); }

    std::size_t bin_of(double x) const {
        if (x <= lo) return 0;
        const auto b = static_cast<std::size_t>((x - lo) / bin_width());
        return std::min(b, bins - 1);
    }
};

// Shared equal-width binning over [min phi, max phi] of the GWCC. A degenerate
// range is widened to [v - 0.5, v + 0.5].
inline PotentialHistograms potential_histograms(std::span<const double> phi, const BowtiePartition& part,
                                                std::size_t bins = 100) {
    if (phi.size() != part.component_of.size()) throw UsageError("potential/partition size mismatch");
    if (bins == 0) throw UsageError("histogram needs at least one bin");
    PotentialHistograms h;
    h.bins = bins;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        if (part.component_of[i] == BowtieComponent::outside_gwcc) continue;
        lo = std::min(lo, phi[i]);
        hi = std::max(hi, phi[i]);
    }
    if (!(lo < hi)) {
        const double v = std::isfinite(lo) ? lo : 0.0;
        lo = v - 0.5;
        hi = v + 0.5;
    }
    h.lo = lo;
    h.hi = hi;
    std::array<double, 4> sum{};
    std::array<std::size_t, 4> n{};
    for (auto& c : h.counts) c.assign(bins, 0);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const auto c = static_cast<std::size_t>(part.component_of[i]);
        if (c >= 4) continue;
        ++h.counts[c][h.bin_of(phi[i])];
        sum[c] += phi[i];
        ++n[c];
    }
    for (std::size_t c = 0; c < 4; ++c)
        if (n[c]) h.mean[c] = sum[c] / static_cast<double>(n[c]);
    return h;
}

struct PotentialVsNet {
    std::vector<double> phi;
    std::vector<double> net_degree;
    std::vector<double> net_flow;
    std::optional<double> pearson_degree;
    std::optional<double> pearson_flow;
};

// Pairs (phi_i, net degree_i) and (phi_i, net flow_i) over all nodes, or only
// over nodes with mask[i] set when a mask is given.
inline PotentialVsNet potential_vs_net(std::span<const double> phi, const FlowNetwork& net,
                                       const std::vector<bool>* mask = nullptr) {
    if (phi.size() != net.node_count()) throw UsageError("potential vector has wrong length");
    const auto deg = degree_stats(net);
    const auto flow = net_flow_per_node(net);
    PotentialVsNet out;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        out.phi.push_back(phi[i]);
        out.net_degree.push_back(static_cast<double>(deg[i].net));
        out.net_flow.push_back(static_cast<double>(flow[i]));
    }
    if (out.phi.size() >= 2) {
        out.pearson_degree = pearson(out.phi, out.net_degree);
        out.pearson_flow = pearson(out.phi, out.net_flow);
    }
    return out;
}

struct HodgeAnalysis {
    HodgeProblem problem;
    Potentials potentials;
    HodgeDecomposition decomposition;
};

inline HodgeAnalysis hodge_analysis(const FlowNetwork& net, WeightKind kind = WeightKind::frequency,
                                    const SolverOptions& opt = {}) {
    HodgeAnalysis a;
    a.problem = assemble_problem(net, kind);
    a.potentials = solve_potentials(a.problem, opt);
    a.decomposition = decompose(a.problem, a.potentials.phi);
    return a;
}

}  // namespace flownet
