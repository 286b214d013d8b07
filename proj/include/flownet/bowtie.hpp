#pragma once

// Bowtie ("walnut") decomposition: GWCC = GSCC + IN + OUT + TE.
// Link weights are ignored; only directed reachability matters.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <string_view>
#include <vector>

#include "flownet/error.hpp"
#include "flownet/network.hpp"

namespace flownet {

// Node labels grouped into classes. Class 0 is the largest; equal sizes are
// ordered by their smallest member index. Remaining classes follow by
// descending size with the same tie-break.
struct Components {
    std::vector<std::uint32_t> label;  // per node
    std::vector<std::size_t> sizes;    // per class

    std::size_t count() const noexcept { return sizes.size(); }
};

namespace detail {

// Relabels raw component ids into the canonical order described above.
inline Components canonicalize(const std::vector<std::uint32_t>& raw, std::size_t raw_count) {
    constexpr auto none = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::size_t> size(raw_count, 0);
    std::vector<std::uint32_t> first(raw_count, none);
    for (std::uint32_t i = 0; i < raw.size(); ++i) {
        ++size[raw[i]];
        if (first[raw[i]] == none) first[raw[i]] = i;
    }
    std::vector<std::uint32_t> order(raw_count);
    for (std::uint32_t c = 0; c < raw_count; ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return size[a] != size[b] ? size[a] > size[b] : first[a] < first[b];
    });
    std::vector<std::uint32_t> rank(raw_count);
    Components out;
    out.sizes.resize(raw_count);
    for (std::uint32_t r = 0; r < raw_count; ++r) {
        rank[order[r]] = r;
        out.sizes[r] = size[order[r]];
    }
    out.label.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out.label[i] = rank[raw[i]];
    return out;
}

}  // namespace detail

inline Components weakly_connected_components(const FlowNetwork& net) {
    constexpr auto unset = std::numeric_limits<std::uint32_t>::max();
    const auto n = net.node_count();
    std::vector<std::uint32_t> raw(n, unset);
    std::vector<NodeIndex> queue;
    std::uint32_t count = 0;
    for (NodeIndex s = 0; s < n; ++s) {
        if (raw[s] != unset) continue;
        raw[s] = count;
        queue.assign(1, s);
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const auto u = queue[head];
            auto visit = [&](NodeIndex v) {
                if (raw[v] == unset) {
                    raw[v] = count;
                    queue.push_back(v);
                }
            };
            for (const auto& l : net.out_links(u)) visit(l.destination);
            for (auto k : net.in_link_ids(u)) visit(net.links()[k].source);
        }
        ++count;
    }
    return detail::canonicalize(raw, count);
}

// Iterative Tarjan, linear in N + M.
inline Components strongly_connected_components(const FlowNetwork& net) {
    constexpr auto unset = std::numeric_limits<std::uint32_t>::max();
    const auto n = net.node_count();
    std::vector<std::uint32_t> index(n, unset), low(n, 0), raw(n, unset);
    std::vector<bool> on_stack(n, false);
    std::vector<NodeIndex> stack;
    struct Frame {
        NodeIndex node;
        std::size_t next;  // position within out_links(node)
    };
    std::vector<Frame> call;
    std::uint32_t counter = 0, comp = 0;

    for (NodeIndex root = 0; root < n; ++root) {
        if (index[root] != unset) continue;
        call.push_back({root, 0});
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            auto& frame = call.back();
            const auto u = frame.node;
            auto row = net.out_links(u);
            if (frame.next < row.size()) {
                const auto v = row[frame.next++].destination;
                if (index[v] == unset) {
                    index[v] = low[v] = counter++;
                    stack.push_back(v);
                    on_stack[v] = true;
                    call.push_back({v, 0});
                } else if (on_stack[v]) {
                    low[u] = std::min(low[u], index[v]);
                }
                continue;
            }
            if (low[u] == index[u]) {
                NodeIndex w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    raw[w] = comp;
                } while (w != u);
                ++comp;
            }
            call.pop_back();
            if (!call.empty()) {
                const auto parent = call.back().node;
                low[parent] = std::min(low[parent], low[u]);
            }
        }
    }
    return detail::canonicalize(raw, comp);
}

// ---------------------------------------------------------------------------

enum class BowtieComponent : std::uint8_t { gscc, in, out, te, outside_gwcc };

inline std::string_view to_string(BowtieComponent c) {
    switch (c) {
    case BowtieComponent::gscc: return "GSCC";
    case BowtieComponent::in: return "IN";
    case BowtieComponent::out: return "OUT";
    case BowtieComponent::te: return "TE";
    case BowtieComponent::outside_gwcc: return "outside_GWCC";
    }
    return "?";
}

struct BowtiePartition {
    std::vector<BowtieComponent> component_of;  // per node
    std::size_t gscc = 0, in = 0, out = 0, te = 0, outside = 0;
    std::size_t gwcc_size = 0;

    std::size_t size_of(BowtieComponent c) const {
        switch (c) {
        case BowtieComponent::gscc: return gscc;
        case BowtieComponent::in: return in;
        case BowtieComponent::out: return out;
        case BowtieComponent::te: return te;
        case BowtieComponent::outside_gwcc: return outside;
        }
        return 0;
    }

    // share of the GWCC
    double ratio(BowtieComponent c) const {
        return gwcc_size ? static_cast<double>(size_of(c)) / static_cast<double>(gwcc_size) : 0.0;
    }
};

namespace detail {

// Marks everything reachable from `seeds`, following out-links (forward) or
// in-links (backward).
inline std::vector<bool> reach(const FlowNetwork& net, const std::vector<NodeIndex>& seeds, bool forward) {
    std::vector<bool> seen(net.node_count(), false);
    std::vector<NodeIndex> queue(seeds);
    for (auto s : seeds) seen[s] = true;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const auto u = queue[head];
        auto visit = [&](NodeIndex v) {
            if (!seen[v]) {
                seen[v] = true;
                queue.push_back(v);
            }
        };
        if (forward) {
            for (const auto& l : net.out_links(u)) visit(l.destination);
        } else {
            for (auto k : net.in_link_ids(u)) visit(net.links()[k].source);
        }
    }
    return seen;
}

}  // namespace detail

inline BowtiePartition classify_bowtie(const FlowNetwork& net) {
    if (net.empty()) throw UsageError("bowtie of an empty network");
    const auto n = net.node_count();
    const auto wcc = weakly_connected_components(net);
    const auto scc = strongly_connected_components(net);

    // Largest SCC inside the GWCC; the canonical SCC order already applies the
    // size / smallest-index tie-break, so the first class found there wins.
    std::uint32_t core = std::numeric_limits<std::uint32_t>::max();
    for (NodeIndex i = 0; i < n; ++i) {
        if (wcc.label[i] != 0) continue;
        core = std::min(core, scc.label[i]);
    }

    std::vector<NodeIndex> seeds;
    for (NodeIndex i = 0; i < n; ++i)
        if (scc.label[i] == core) seeds.push_back(i);
    const auto downstream = detail::reach(net, seeds, true);
    const auto upstream = detail::reach(net, seeds, false);

    BowtiePartition p;
    p.component_of.resize(n);
    for (NodeIndex i = 0; i < n; ++i) {
        BowtieComponent c;
        if (wcc.label[i] != 0) c = BowtieComponent::outside_gwcc;
        else if (scc.label[i] == core) c = BowtieComponent::gscc;
        else if (upstream[i]) c = BowtieComponent::in;
        else if (downstream[i]) c = BowtieComponent::out;
        else c = BowtieComponent::te;
        p.component_of[i] = c;
        switch (c) {
        case BowtieComponent::gscc: ++p.gscc; break;
        case BowtieComponent::in: ++p.in; break;
        case BowtieComponent::out: ++p.out; break;
        case BowtieComponent::te: ++p.te; break;
        case BowtieComponent::outside_gwcc: ++p.outside; break;
        }
    }
    p.gwcc_size = wcc.sizes.front();
    return p;
}

// ---------------------------------------------------------------------------

struct DistanceProfile {
    std::map<std::size_t, std::size_t> in_to_gscc;   // hops -> IN node count
    std::map<std::size_t, std::size_t> gscc_to_out;  // hops -> OUT node count
};

namespace detail {

// Multi-source BFS from the GSCC, entering only nodes labelled `target`.
inline std::map<std::size_t, std::size_t> skin_distances(const FlowNetwork& net, const BowtiePartition& p,
                                                         BowtieComponent target, bool forward) {
    constexpr auto unset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> dist(net.node_count(), unset);
    std::vector<NodeIndex> queue;
    for (NodeIndex i = 0; i < net.node_count(); ++i)
        if (p.component_of[i] == BowtieComponent::gscc) {
            dist[i] = 0;
            queue.push_back(i);
        }
    std::map<std::size_t, std::size_t> hist;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const auto u = queue[head];
        auto visit = [&](NodeIndex v) {
            if (dist[v] != unset || p.component_of[v] != target) return;
            dist[v] = dist[u] + 1;
            ++hist[dist[v]];
            queue.push_back(v);
        };
        if (forward) {
            for (const auto& l : net.out_links(u)) visit(l.destination);
        } else {
            for (auto k : net.in_link_ids(u)) visit(net.links()[k].source);
        }
    }
    return hist;
}

}  // namespace detail

inline DistanceProfile distance_profile(const FlowNetwork& net, const BowtiePartition& partition) {
    if (partition.component_of.size() != net.node_count())
        throw UsageError("partition does not match network");
    return {detail::skin_distances(net, partition, BowtieComponent::in, false),
            detail::skin_distances(net, partition, BowtieComponent::out, true)};
}

}  // namespace flownet
