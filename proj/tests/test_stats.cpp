#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flownet/stats.hpp"
#include "test_support.hpp"

using namespace flownet;

namespace {

// O(n^2) tau-b straight from the definition.
std::optional<double> kendall_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    double conc = 0, disc = 0, tx = 0, ty = 0;
    for (std::size_t a = 0; a < x.size(); ++a)
        for (std::size_t b = a + 1; b < x.size(); ++b) {
            const double dx = x[a] - x[b], dy = y[a] - y[b];
            if (dx == 0 && dy == 0) continue;
            if (dx == 0) ++tx;
            else if (dy == 0) ++ty;
            else if ((dx > 0) == (dy > 0)) ++conc;
            else ++disc;
        }
    const double denom = std::sqrt((conc + disc + tx) * (conc + disc + ty));
    if (denom == 0) return std::nullopt;
    return (conc - disc) / denom;
}

struct TwoPass {
    double mean, var, skew, kurt;
};

TwoPass two_pass(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : v) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n, m3 /= n, m4 /= n;
    return {mean, m2, m3 / std::pow(m2, 1.5), m4 / (m2 * m2)};
}

}  // namespace

TEST(BuildNetwork, CountsNodesAndLinks) {
    std::vector<AggregatedLink> links = {{"i", "j", 1, 1}, {"j", "i", 1, 1}, {"j", "k", 3, 2}};
    auto net = build_network(links);
    EXPECT_EQ(net.node_count(), 3u);
    EXPECT_EQ(net.link_count(), 3u);
    const auto i = *net.index_of("i"), j = *net.index_of("j"), k = *net.index_of("k");
    EXPECT_TRUE(net.has_link(i, j));
    EXPECT_TRUE(net.has_link(j, i));
    EXPECT_FALSE(net.has_link(k, j));
    EXPECT_FALSE(net.has_link(i, i));
    EXPECT_EQ(net.find_link(j, k)->frequency, 2);

    auto empty = build_network(std::vector<AggregatedLink>{});
    EXPECT_EQ(empty.node_count(), 0u);
    EXPECT_EQ(empty.link_count(), 0u);
}

TEST(BuildNetwork, RejectsDuplicatesAndSelfLoops) {
    std::vector<AggregatedLink> dup = {{"i", "j", 1, 1}, {"i", "j", 2, 1}};
    EXPECT_THROW(build_network(dup), DataError);
    std::vector<AggregatedLink> loop = {{"i", "i", 1, 1}};
    EXPECT_THROW(build_network(loop), DataError);
    std::vector<AggregatedLink> bad = {{"i", "j", 1, 2}};
    EXPECT_THROW(build_network(bad), DataError);
}

TEST(DegreeStats, StarAndTwoCycle) {
    auto star = network_from_edges(4, {{1, 0, 1, 1}, {2, 0, 1, 1}, {3, 0, 1, 1}});
    auto d = degree_stats(star);
    EXPECT_EQ(d[0].in, 3);
    EXPECT_EQ(d[0].out, 0);
    EXPECT_EQ(d[0].net, 3);

    auto pair = network_from_edges(2, {{0, 1, 1, 1}, {1, 0, 1, 1}});
    for (const auto& nd : degree_stats(pair)) {
        EXPECT_EQ(nd.in, 1);
        EXPECT_EQ(nd.out, 1);
        EXPECT_EQ(nd.net, 0);
    }
}

TEST(DegreeStats, MatchesEdgeListScan) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto net = testgen::random_digraph(50, 0.08, seed);
        std::vector<std::int64_t> in(50, 0), out(50, 0);
        for (const auto& l : net.links()) ++out[l.source], ++in[l.destination];
        auto d = degree_stats(net);
        std::int64_t sum_in = 0, sum_out = 0;
        for (NodeIndex i = 0; i < 50; ++i) {
            EXPECT_EQ(d[i].in, in[i]);
            EXPECT_EQ(d[i].out, out[i]);
            EXPECT_EQ(d[i].net, in[i] - out[i]);
            sum_in += d[i].in;
            sum_out += d[i].out;
        }
        EXPECT_EQ(sum_in, static_cast<std::int64_t>(net.link_count()));
        EXPECT_EQ(sum_out, static_cast<std::int64_t>(net.link_count()));
    }
}

TEST(NetFlow, SingleEdgeCycleAndRandom) {
    auto one = network_from_edges(2, {{0, 1, 5, 1}});
    EXPECT_EQ(net_flow_per_node(one), (std::vector<std::int64_t>{-5, 5}));

    auto cycle = network_from_edges(3, {{0, 1, 4, 1}, {1, 2, 4, 1}, {2, 0, 4, 1}});
    EXPECT_EQ(net_flow_per_node(cycle), (std::vector<std::int64_t>{0, 0, 0}));

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto net = testgen::random_digraph(40, 0.1, seed);
        auto f = net_flow_per_node(net);
        std::int64_t total = 0;
        for (NodeIndex i = 0; i < 40; ++i) {
            std::int64_t expect = 0;
            for (const auto& l : net.links()) {
                if (l.destination == i) expect += l.flow;
                if (l.source == i) expect -= l.flow;
            }
            EXPECT_EQ(f[i], expect);
            total += f[i];
        }
        EXPECT_EQ(total, 0);
    }
}

TEST(Ccdf, DirectCounts) {
    auto c = ccdf(std::vector<int>{1, 1, 2, 3});
    ASSERT_EQ(c.size(), 3u);
    EXPECT_DOUBLE_EQ(c[0].value, 1);
    EXPECT_DOUBLE_EQ(c[0].fraction, 1.0);
    EXPECT_DOUBLE_EQ(c[1].fraction, 0.5);
    EXPECT_DOUBLE_EQ(c[2].fraction, 0.25);

    auto flat = ccdf(std::vector<int>{5, 5});
    ASSERT_EQ(flat.size(), 1u);
    EXPECT_DOUBLE_EQ(flat[0].fraction, 1.0);

    EXPECT_THROW(ccdf(std::vector<int>{}), UsageError);
}

TEST(Ccdf, NonIncreasingWithinUnitInterval) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::int64_t> v(1 + rng() % 300);
        for (auto& x : v) x = static_cast<std::int64_t>(rng() % 40);
        auto c = ccdf(v);
        EXPECT_DOUBLE_EQ(c.front().fraction, 1.0);
        for (std::size_t k = 0; k < c.size(); ++k) {
            EXPECT_GT(c[k].fraction, 0.0);
            EXPECT_LE(c[k].fraction, 1.0);
            if (k) {
                EXPECT_LT(c[k].fraction, c[k - 1].fraction);
                EXPECT_GT(c[k].value, c[k - 1].value);
            }
        }
    }
}

TEST(Summary, SymmetricAndDegenerateSamples) {
    auto s = summary(std::vector<double>{1, 2, 3});
    EXPECT_DOUBLE_EQ(s.mean, 2.0);
    EXPECT_DOUBLE_EQ(s.median, 2.0);
    ASSERT_TRUE(s.skewness);
    EXPECT_NEAR(*s.skewness, 0.0, 1e-15);
    EXPECT_NEAR(*s.kurtosis, 1.5, 1e-12);  // (2/3 * 1) / (2/3)^2

    auto flat = summary(std::vector<double>{1, 1, 1});
    EXPECT_DOUBLE_EQ(*flat.stddev, 0.0);
    EXPECT_FALSE(flat.skewness);
    EXPECT_FALSE(flat.kurtosis);

    auto single = summary(std::vector<double>{4});
    EXPECT_FALSE(single.stddev);
    auto even = summary(std::vector<int>{4, 1, 3, 2});
    EXPECT_DOUBLE_EQ(even.median, 2.5);
    EXPECT_DOUBLE_EQ(even.min, 1);
    EXPECT_DOUBLE_EQ(even.max, 4);
}

TEST(Summary, MatchesTwoPassOracleOnLognormal) {
    std::mt19937_64 rng(2024);
    std::lognormal_distribution<double> dist(12.0, 1.5);
    std::vector<double> v(10000);
    for (auto& x : v) x = dist(rng);
    auto s = summary(v);
    auto o = two_pass(v);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
    EXPECT_LT(rel(s.mean, o.mean), 1e-10);
    EXPECT_LT(rel(*s.stddev * *s.stddev, o.var), 1e-10);
    EXPECT_LT(rel(*s.skewness, o.skew), 1e-10);
    EXPECT_LT(rel(*s.kurtosis, o.kurt), 1e-10);
}

TEST(DegreeCorrelation, ProportionalDegrees) {
    // node k has in-degree k and out-degree k: k links to and from "big" hubs
    std::vector<Link> links;
    const NodeIndex hubs = 6, n = 12;
    for (NodeIndex k = hubs; k < n; ++k) {
        const NodeIndex deg = k - hubs + 1;
        for (NodeIndex h = 0; h < deg; ++h) {
            links.push_back({k, h, 1, 1});
            links.push_back({h, k, 1, 1});
        }
    }
    auto net = network_from_edges(n, links);
    auto c = degree_correlation(net);
    ASSERT_TRUE(c.pearson_r);
    EXPECT_NEAR(*c.pearson_r, 1.0, 1e-12);
}

TEST(DegreeCorrelation, IndependentDegreesAreUncorrelated) {
    std::mt19937_64 rng(5);
    std::vector<double> x(10000), y(10000);
    for (std::size_t k = 0; k < x.size(); ++k) {
        x[k] = static_cast<double>(rng() % 20);
        y[k] = static_cast<double>(rng() % 20);
    }
    EXPECT_LT(std::abs(*pearson(x, y)), 0.05);
    EXPECT_LT(std::abs(*kendall_tau_b(x, y)), 0.05);
}

TEST(DegreeCorrelation, KendallMatchesExhaustivePairs) {
    // 5-node fixture
    auto net = network_from_edges(5, {{0, 1, 1, 1}, {0, 2, 1, 1}, {1, 2, 1, 1}, {2, 0, 1, 1},
                                      {3, 0, 1, 1}, {3, 4, 1, 1}, {4, 2, 1, 1}, {2, 3, 1, 1}});
    auto d = degree_stats(net);
    std::vector<double> in, out;
    for (auto& nd : d) in.push_back(double(nd.in)), out.push_back(double(nd.out));
    EXPECT_NEAR(*degree_correlation(net).kendall_tau, *kendall_oracle(in, out), 1e-14);

    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(2 + rng() % 200), y(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = double(rng() % 7), y[k] = double(rng() % 5);
        auto got = kendall_tau_b(x, y);
        auto want = kendall_oracle(x, y);
        ASSERT_EQ(bool(got), bool(want));
        if (want) {
            EXPECT_NEAR(*got, *want, 1e-12);
        }
    }
}

TEST(DegreeCorrelation, InvarianceUnderRescaling) {
    std::mt19937_64 rng(17);
    std::vector<double> x(500), y(500);
    for (std::size_t k = 0; k < x.size(); ++k) {
        x[k] = double(rng() % 50);
        y[k] = x[k] * 0.3 + double(rng() % 30);
    }
    std::vector<double> xa(x.size()), xm(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        xa[k] = 3.5 * x[k] - 7.0;
        xm[k] = std::exp(x[k] / 10.0);
    }
    EXPECT_NEAR(*pearson(xa, y), *pearson(x, y), 1e-12);
    EXPECT_NEAR(*kendall_tau_b(xm, y), *kendall_tau_b(x, y), 1e-12);
}

TEST(DegreeCorrelation, ZeroVarianceIsUndefined) {
    auto cycle = network_from_edges(3, {{0, 1, 1, 1}, {1, 2, 1, 1}, {2, 0, 1, 1}});
    auto c = degree_correlation(cycle);
    EXPECT_FALSE(c.pearson_r);
    EXPECT_FALSE(c.kendall_tau);
}
