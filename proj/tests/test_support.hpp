#pragma once

// Shared generators for the test suites.

#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "flownet/network.hpp"

namespace flownet::testgen {

// Erdos-Renyi style digraph with integer flow/frequency weights.
inline FlowNetwork random_digraph(std::size_t n, double p, std::uint64_t seed, int max_freq = 5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Link> links;
    for (NodeIndex i = 0; i < n; ++i)
        for (NodeIndex j = 0; j < n; ++j) {
            if (i == j || u(rng) >= p) continue;
            const auto g = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(max_freq));
            const auto f = g + static_cast<std::int64_t>(rng() % 1000);
            links.push_back({i, j, f, g});
        }
    return network_from_edges(n, std::move(links));
}

// Random digraph whose undirected skeleton is connected: a random spanning
// tree with random orientations plus extra random links.
inline FlowNetwork random_connected_digraph(std::size_t n, double extra_p, std::uint64_t seed, int max_freq = 9) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::set<std::pair<NodeIndex, NodeIndex>> seen;
    std::vector<Link> links;
    auto add = [&](NodeIndex a, NodeIndex b) {
        if (a == b || !seen.insert({a, b}).second) return;
        const auto g = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(max_freq));
        links.push_back({a, b, g * 100 + static_cast<std::int64_t>(rng() % 100), g});
    };
    for (NodeIndex v = 1; v < n; ++v) {
        const auto parent = static_cast<NodeIndex>(rng() % v);
        if (rng() % 2) add(parent, v);
        else add(v, parent);
        if (rng() % 5 == 0) add(v, parent), add(parent, v);
    }
    for (NodeIndex i = 0; i < n; ++i)
        for (NodeIndex j = 0; j < n; ++j)
            if (u(rng) < extra_p) add(i, j);
    return network_from_edges(n, std::move(links));
}

}  // namespace flownet::testgen

namespace flownet::testgen {

struct PlantedGraph {
    FlowNetwork net;
    std::vector<std::uint32_t> block;  // finest planted block per node
    std::vector<std::uint32_t> group;  // coarse group per node (equals block when flat)
};

// Stochastic block model. Nodes of block b link to each other with
// probability p_in, to other blocks of the same group with p_group and to
// everything else with p_out. `group_of_block` may be empty for a flat model.
inline PlantedGraph planted_blocks(const std::vector<std::size_t>& sizes, double p_in, double p_out,
                                   std::uint64_t seed, const std::vector<std::uint32_t>& group_of_block = {},
                                   double p_group = 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PlantedGraph out;
    for (std::uint32_t b = 0; b < sizes.size(); ++b)
        for (std::size_t k = 0; k < sizes[b]; ++k) {
            out.block.push_back(b);
            out.group.push_back(group_of_block.empty() ? b : group_of_block[b]);
        }
    const auto n = out.block.size();
    std::vector<Link> links;
    for (NodeIndex i = 0; i < n; ++i)
        for (NodeIndex j = 0; j < n; ++j) {
            if (i == j) continue;
            const double p = out.block[i] == out.block[j] ? p_in : out.group[i] == out.group[j] ? p_group : p_out;
            if (u(rng) >= p) continue;
            const auto g = 1 + static_cast<std::int64_t>(rng() % 5);
            links.push_back({i, j, g * 1000, g});
        }
    out.net = network_from_edges(n, std::move(links));
    return out;
}

}  // namespace flownet::testgen
