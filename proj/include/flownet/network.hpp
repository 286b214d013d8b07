#pragma once

// Immutable weighted directed network built from aggregated links.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "flownet/error.hpp"
#include "flownet/ingest.hpp"

namespace flownet {

using NodeIndex = std::uint32_t;

struct Link {
    NodeIndex source = 0;
    NodeIndex destination = 0;
    std::int64_t flow = 0;
    std::int64_t frequency = 0;
};

class FlowNetwork {
public:
    FlowNetwork() : out_offsets_(1, 0) {}

    // Links may come in any order. Self-loops, duplicate ordered pairs and
    // out-of-range endpoints throw DataError.
    FlowNetwork(std::vector<std::string> ids, std::vector<Link> links)
        : ids_(std::move(ids)), links_(std::move(links)) {
        const auto n = ids_.size();
        for (std::size_t i = 0; i < n; ++i)
            if (!index_.emplace(ids_[i], static_cast<NodeIndex>(i)).second)
                throw DataError("duplicate node id '" + ids_[i] + "'");
        std::sort(links_.begin(), links_.end(), [](const Link& a, const Link& b) {
            return a.source != b.source ? a.source < b.source : a.destination < b.destination;
        });
        out_offsets_.assign(n + 1, 0);
        in_offsets_.assign(n + 1, 0);
        for (std::size_t k = 0; k < links_.size(); ++k) {
            const auto& l = links_[k];
            if (l.source >= n || l.destination >= n) throw DataError("link endpoint out of range");
            if (l.source == l.destination) throw DataError("self-loop on '" + ids_[l.source] + "'");
            if (k > 0 && links_[k - 1].source == l.source && links_[k - 1].destination == l.destination)
                throw DataError("duplicate link " + ids_[l.source] + " -> " + ids_[l.destination]);
            ++out_offsets_[l.source + 1];
            ++in_offsets_[l.destination + 1];
            lookup_.insert(key(l.source, l.destination));
        }
        for (std::size_t i = 0; i < n; ++i) {
            out_offsets_[i + 1] += out_offsets_[i];
            in_offsets_[i + 1] += in_offsets_[i];
        }
        in_links_.resize(links_.size());
        auto cursor = in_offsets_;
        // links_ is sorted by source, so each in-row comes out sorted by source too
        for (std::size_t k = 0; k < links_.size(); ++k)
            in_links_[cursor[links_[k].destination]++] = static_cast<std::uint32_t>(k);
    }

    std::size_t node_count() const noexcept { return ids_.size(); }
    std::size_t link_count() const noexcept { return links_.size(); }
    bool empty() const noexcept { return ids_.empty(); }

    const std::string& id(NodeIndex i) const { return ids_.at(i); }
    std::span<const std::string> ids() const noexcept { return ids_; }

    std::optional<NodeIndex> index_of(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    // All links, sorted by (source, destination).
    std::span<const Link> links() const noexcept { return links_; }

    std::span<const Link> out_links(NodeIndex i) const {
        return std::span<const Link>(links_).subspan(out_offsets_[i], out_offsets_[i + 1] - out_offsets_[i]);
    }

    // Positions into links() of the links ending at i.
    std::span<const std::uint32_t> in_link_ids(NodeIndex i) const {
        return std::span<const std::uint32_t>(in_links_).subspan(in_offsets_[i], in_offsets_[i + 1] - in_offsets_[i]);
    }

    std::size_t out_degree(NodeIndex i) const { return out_offsets_[i + 1] - out_offsets_[i]; }
    std::size_t in_degree(NodeIndex i) const { return in_offsets_[i + 1] - in_offsets_[i]; }

    // A_ij
    bool has_link(NodeIndex i, NodeIndex j) const { return lookup_.contains(key(i, j)); }

    const Link* find_link(NodeIndex i, NodeIndex j) const {
        auto row = out_links(i);
        auto it = std::lower_bound(row.begin(), row.end(), j,
                                   [](const Link& l, NodeIndex d) { return l.destination < d; });
        return (it != row.end() && it->destination == j) ? &*it : nullptr;
    }

private:
    static std::uint64_t key(NodeIndex i, NodeIndex j) {
        return (static_cast<std::uint64_t>(i) << 32) | j;
    }

    std::vector<std::string> ids_;
    std::unordered_map<std::string, NodeIndex> index_;
    std::vector<Link> links_;
    std::vector<std::size_t> out_offsets_;
    std::vector<std::size_t> in_offsets_;
    std::vector<std::uint32_t> in_links_;
    std::unordered_set<std::uint64_t> lookup_;
};

// Nodes are every account appearing as an endpoint, indexed in sorted id order.
inline FlowNetwork build_network(std::span<const AggregatedLink> links) {
    std::vector<std::string> ids;
    ids.reserve(links.size() * 2);
    for (const auto& l : links) {
        ids.push_back(l.source);
        ids.push_back(l.destination);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    auto index = [&](const std::string& s) {
        return static_cast<NodeIndex>(std::lower_bound(ids.begin(), ids.end(), s) - ids.begin());
    };
    std::vector<Link> out;
    out.reserve(links.size());
    for (const auto& l : links) {
        if (l.frequency < 1 || l.flow < l.frequency)
            throw DataError("link " + l.source + " -> " + l.destination + " violates flow >= frequency >= 1");
        out.push_back({index(l.source), index(l.destination), l.flow, l.frequency});
    }
    return FlowNetwork(std::move(ids), std::move(out));
}

// Node ids "0".."n-1"; handy for tests and generators working on indices.
inline FlowNetwork network_from_edges(std::size_t n, std::vector<Link> links) {
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
    return FlowNetwork(std::move(ids), std::move(links));
}

inline std::vector<AggregatedLink> to_aggregated(const FlowNetwork& net) {
    std::vector<AggregatedLink> out;
    out.reserve(net.link_count());
    for (const auto& l : net.links())
        out.push_back({net.id(l.source), net.id(l.destination), l.flow, l.frequency});
    return out;
}

}  // namespace flownet
