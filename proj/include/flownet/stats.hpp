#pragma once

// Descriptive statistics over a FlowNetwork: degrees, net flows, CCDFs,
// moment summaries and degree correlations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "flownet/error.hpp"
#include "flownet/network.hpp"

namespace flownet {

struct NodeDegree {
    std::int64_t in = 0;
    std::int64_t out = 0;
    std::int64_t net = 0;  // in - out
};

inline std::vector<NodeDegree> degree_stats(const FlowNetwork& net) {
    std::vector<NodeDegree> d(net.node_count());
    for (NodeIndex i = 0; i < net.node_count(); ++i) {
        d[i].in = static_cast<std::int64_t>(net.in_degree(i));
        d[i].out = static_cast<std::int64_t>(net.out_degree(i));
        d[i].net = d[i].in - d[i].out;
    }
    return d;
}

// Incoming minus outgoing money per node. Sums to zero exactly.
inline std::vector<std::int64_t> net_flow_per_node(const FlowNetwork& net) {
    std::vector<std::int64_t> f(net.node_count(), 0);
    for (const auto& l : net.links()) {
        f[l.source] -= l.flow;
        f[l.destination] += l.flow;
    }
    return f;
}

// ---------------------------------------------------------------------------
// CCDF

struct CcdfPoint {
    double value = 0.0;
    double fraction = 0.0;  // share of observations >= value
};

// One point per distinct value, ascending.
template <typename T>
std::vector<CcdfPoint> ccdf(std::span<const T> values) {
    if (values.empty()) throw UsageError("ccdf of an empty sample");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    std::vector<CcdfPoint> out;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        if (k > 0 && sorted[k] == sorted[k - 1]) continue;
        out.push_back({sorted[k], static_cast<double>(sorted.size() - k) / n});
    }
    return out;
}

template <typename T>
std::vector<CcdfPoint> ccdf(const std::vector<T>& values) {
    return ccdf(std::span<const T>(values));
}

// ---------------------------------------------------------------------------
// summary statistics

// Population moments (divide by n). Kurtosis is non-excess, m4 / m2^2.
struct SummaryStats {
    std::size_t count = 0;
    double min = 0.0;
    double max = 0.0;
    double median = 0.0;
    double mean = 0.0;
    std::optional<double> stddev;    // needs n >= 2
    std::optional<double> skewness;  // needs n >= 3 and nonzero variance
    std::optional<double> kurtosis;
};

template <typename T>
SummaryStats summary(std::span<const T> values) {
    if (values.empty()) throw UsageError("summary of an empty sample");
    SummaryStats s;
    s.count = values.size();

    // single-pass central moments (Terriberry's update)
    double n = 0.0, mean = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (const auto& raw : values) {
        const double x = static_cast<double>(raw);
        const double n1 = n;
        n += 1.0;
        const double delta = x - mean;
        const double delta_n = delta / n;
        const double delta_n2 = delta_n * delta_n;
        const double term1 = delta * delta_n * n1;
        mean += delta_n;
        m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * m2 - 4.0 * delta_n * m3;
        m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * m2;
        m2 += term1;
    }
    s.mean = mean;

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    s.min = sorted.front();
    s.max = sorted.back();
    const auto mid = sorted.size() / 2;
    s.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

    if (s.count >= 2) s.stddev = std::sqrt(m2 / n);
    if (s.count >= 3 && m2 > 0.0) {
        const double var = m2 / n;
        s.skewness = (m3 / n) / std::pow(var, 1.5);
        s.kurtosis = (m4 / n) / (var * var);
    }
    return s;
}

template <typename T>
SummaryStats summary(const std::vector<T>& values) {
    return summary(std::span<const T>(values));
}

// ---------------------------------------------------------------------------
// correlations

// Undefined when either margin has zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw UsageError("pearson: length mismatch");
    if (x.size() < 2) return std::nullopt;
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double dx = x[k] - mx, dy = y[k] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Kendall tau-b in O(n log n) (Knight's merge-sort algorithm).
inline std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw UsageError("kendall: length mismatch");
    const std::size_t n = x.size();
    if (n < 2) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
    });

    auto tie_pairs = [](auto&& same, std::size_t len) {
        std::int64_t total = 0, run = 1;
        for (std::size_t k = 1; k < len; ++k) {
            if (same(k)) {
                ++run;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        return total + run * (run - 1) / 2;
    };
    const std::int64_t ties_x = tie_pairs([&](std::size_t k) { return x[order[k]] == x[order[k - 1]]; }, n);
    const std::int64_t ties_xy = tie_pairs(
        [&](std::size_t k) { return x[order[k]] == x[order[k - 1]] && y[order[k]] == y[order[k - 1]]; }, n);

    // merge sort on y, counting inversions (discordant swaps)
    std::vector<double> ys(n), buf(n);
    for (std::size_t k = 0; k < n; ++k) ys[k] = y[order[k]];
    std::int64_t swaps = 0;
    for (std::size_t width = 1; width < n; width *= 2) {
        for (std::size_t lo = 0; lo < n; lo += 2 * width) {
            const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
            std::size_t a = lo, b = mid, out = lo;
            while (a < mid && b < hi) {
                if (ys[b] < ys[a]) {
                    swaps += static_cast<std::int64_t>(mid - a);
                    buf[out++] = ys[b++];
                } else {
                    buf[out++] = ys[a++];
                }
            }
            while (a < mid) buf[out++] = ys[a++];
            while (b < hi) buf[out++] = ys[b++];
        }
        ys.swap(buf);
    }
    const std::int64_t ties_y = tie_pairs([&](std::size_t k) { return ys[k] == ys[k - 1]; }, n);

    const auto pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
    const double denom = std::sqrt(static_cast<double>(pairs - ties_x)) * std::sqrt(static_cast<double>(pairs - ties_y));
    if (denom <= 0.0) return std::nullopt;
    const double numer = static_cast<double>(pairs - ties_x - ties_y + ties_xy - 2 * swaps);
    return std::clamp(numer / denom, -1.0, 1.0);
}

struct DegreeCorrelation {
    std::optional<double> pearson_r;
    std::optional<double> kendall_tau;
};

inline DegreeCorrelation degree_correlation(const FlowNetwork& net) {
    if (net.node_count() < 2) throw UsageError("degree correlation needs at least two nodes");
    std::vector<double> in(net.node_count()), out(net.node_count());
    for (NodeIndex i = 0; i < net.node_count(); ++i) {
        in[i] = static_cast<double>(net.in_degree(i));
        out[i] = static_cast<double>(net.out_degree(i));
    }
    return {pearson(in, out), kendall_tau_b(in, out)};
}

}  // namespace flownet
