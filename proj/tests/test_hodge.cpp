#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "flownet/hodge.hpp"
#include "hodge_oracle.hpp"
#include "test_support.hpp"

using namespace flownet;

namespace {

double max_abs(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

FlowNetwork directed_cycle(std::size_t n, std::int64_t g) {
    std::vector<Link> links;
    for (NodeIndex i = 0; i < n; ++i) links.push_back({i, static_cast<NodeIndex>((i + 1) % n), g * 10, g});
    return network_from_edges(n, links);
}

}  // namespace

TEST(AssembleProblem, MutualLinksNetOut) {
    auto net = network_from_edges(2, {{0, 1, 7, 3}, {1, 0, 1, 1}});
    auto prob = assemble_problem(net, WeightKind::frequency);
    ASSERT_EQ(prob.pairs.size(), 1u);
    EXPECT_DOUBLE_EQ(prob.pairs[0].net_flow, 2.0);
    EXPECT_DOUBLE_EQ(prob.pairs[0].weight, 2.0);

    auto by_flow = assemble_problem(net, WeightKind::flow);
    EXPECT_DOUBLE_EQ(by_flow.pairs[0].net_flow, 6.0);
    EXPECT_DOUBLE_EQ(by_flow.pairs[0].weight, 2.0);
}

TEST(AssembleProblem, SingleLinkLaplacian) {
    auto net = network_from_edges(2, {{0, 1, 1, 1}});
    auto prob = assemble_problem(net);
    EXPECT_DOUBLE_EQ(prob.pairs[0].net_flow, 1.0);
    EXPECT_DOUBLE_EQ(prob.pairs[0].weight, 1.0);
    EXPECT_DOUBLE_EQ(prob.laplacian.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(prob.laplacian.at(0, 1), -1.0);
    EXPECT_DOUBLE_EQ(prob.laplacian.at(1, 0), -1.0);
    EXPECT_DOUBLE_EQ(prob.laplacian.at(1, 1), 1.0);
}

TEST(AssembleProblem, ReversedSingleLinkIsAntisymmetric) {
    auto net = network_from_edges(2, {{1, 0, 4, 4}});
    auto prob = assemble_problem(net);
    ASSERT_EQ(prob.pairs.size(), 1u);
    EXPECT_EQ(prob.pairs[0].i, 0u);
    EXPECT_DOUBLE_EQ(prob.pairs[0].net_flow, -4.0);
    EXPECT_DOUBLE_EQ(prob.divergence[0], -4.0);
    EXPECT_DOUBLE_EQ(prob.divergence[1], 4.0);
}

TEST(AssembleProblem, LaplacianRowsSumToZero) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto net = testgen::random_digraph(60, 0.05, seed);
        auto prob = assemble_problem(net);
        const auto& lap = prob.laplacian;
        std::vector<double> ones(lap.rows, 1.0), out(lap.rows);
        lap.multiply(ones, out);
        for (double v : out) EXPECT_EQ(v, 0.0);
        for (const auto& p : prob.pairs) {
            EXPECT_LT(p.i, p.j);
            EXPECT_TRUE(p.weight == 1.0 || p.weight == 2.0);
            EXPECT_DOUBLE_EQ(lap.at(p.i, p.j), lap.at(p.j, p.i));
        }
    }
}

TEST(SolvePotentials, SingleLink) {
    auto net = network_from_edges(2, {{0, 1, 1, 1}});
    auto prob = assemble_problem(net);
    auto pot = solve_potentials(prob);
    EXPECT_NEAR(pot.phi[0], 0.5, 1e-12);
    EXPECT_NEAR(pot.phi[1], -0.5, 1e-12);
}

TEST(SolvePotentials, EqualFlowCycleHasZeroPotential) {
    auto prob = assemble_problem(directed_cycle(3, 4));
    auto pot = solve_potentials(prob);
    for (double v : pot.phi) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(SolvePotentials, MatchesDensePseudoInverse) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto net = testgen::random_connected_digraph(30, 0.06, seed);
        auto pot = solve_potentials(assemble_problem(net));
        auto dense = oracle::dense_hodge(net);
        const double scale = dense.phi.cwiseAbs().maxCoeff();
        for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(pot.phi[i], dense.phi(i), 1e-8 * scale) << "seed " << seed;
    }
}

TEST(SolvePotentials, FlowWeightsMatchDenseOracle) {
    auto net = testgen::random_connected_digraph(25, 0.1, 404);
    auto pot = solve_potentials(assemble_problem(net, WeightKind::flow));
    auto dense = oracle::dense_hodge(net, true);
    const double scale = dense.phi.cwiseAbs().maxCoeff();
    for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(pot.phi[i], dense.phi(i), 1e-8 * scale);
}

TEST(SolvePotentials, DisconnectedInputSolvedPerComponent) {
    // two separate single links
    auto net = network_from_edges(4, {{0, 1, 1, 1}, {3, 2, 2, 2}});
    auto prob = assemble_problem(net);
    auto pot = solve_potentials(prob);
    EXPECT_EQ(pot.components, 2u);
    EXPECT_NEAR(pot.phi[0], 0.5, 1e-12);
    EXPECT_NEAR(pot.phi[1], -0.5, 1e-12);
    EXPECT_NEAR(pot.phi[3], 1.0, 1e-12);
    EXPECT_NEAR(pot.phi[2], -1.0, 1e-12);

    SolverOptions whole;
    whole.per_component = false;
    EXPECT_THROW(solve_potentials(prob, whole), UsageError);
}

TEST(SolvePotentials, IterationCapRaisesWithResidual) {
    auto net = testgen::random_connected_digraph(40, 0.05, 3);
    auto prob = assemble_problem(net);
    SolverOptions opt;
    opt.iteration_factor = 0;
    try {
        solve_potentials(prob, opt);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.residual(), 0.0);
    }
}

TEST(Decompose, TreeHasNoCircularFlow) {
    auto net = network_from_edges(2, {{0, 1, 1, 1}});
    auto a = hodge_analysis(net);
    ASSERT_EQ(a.decomposition.pairs.size(), 1u);
    EXPECT_NEAR(a.decomposition.pairs[0].gradient, 1.0, 1e-12);
    EXPECT_NEAR(a.decomposition.pairs[0].circular, 0.0, 1e-12);
}

TEST(Decompose, EqualFlowCycleIsPurelyCircular) {
    auto a = hodge_analysis(directed_cycle(3, 2));
    for (const auto& p : a.decomposition.pairs) {
        EXPECT_NEAR(p.gradient, 0.0, 1e-12);
        EXPECT_NEAR(p.circular, p.net_flow, 1e-12);
    }
}

TEST(Decompose, CyclePlusPendantMatchesDenseOracle) {
    // 3-cycle with unequal frequencies, plus a pendant edge 2 -> 3 and a
    // mutual pair 3 <-> 4
    auto net = network_from_edges(5, {{0, 1, 10, 3}, {1, 2, 10, 1}, {2, 0, 10, 2}, {2, 3, 50, 5},
                                      {3, 4, 9, 2}, {4, 3, 9, 1}});
    auto a = hodge_analysis(net);
    auto dense = oracle::dense_hodge(net);
    for (const auto& p : a.decomposition.pairs) {
        EXPECT_NEAR(p.gradient, dense.gradient(p.i, p.j), 1e-8);
        EXPECT_NEAR(p.circular, dense.net_flow(p.i, p.j) - dense.gradient(p.i, p.j), 1e-8);
    }
    // the pendant edge carries no circular flow
    for (const auto& p : a.decomposition.pairs) {
        if (p.i == 2 && p.j == 3) {
            EXPECT_NEAR(p.circular, 0.0, 1e-9);
        }
    }
}

TEST(HodgeInvariants, HoldOnRandomGraphs) {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        auto net = testgen::random_connected_digraph(80, 0.03, 500 + seed);
        auto a = hodge_analysis(net);
        const auto& phi = a.potentials.phi;

        // reconstruction is exact
        for (const auto& p : a.decomposition.pairs) EXPECT_DOUBLE_EQ(p.gradient + p.circular, p.net_flow);
        // divergence-free circular part
        const double div_scale = max_abs(a.problem.divergence);
        EXPECT_LE(max_abs(a.decomposition.circular_divergence()), 1e-6 * div_scale);
        // gauge
        const double sum = std::accumulate(phi.begin(), phi.end(), 0.0);
        EXPECT_LE(std::abs(sum), 1e-9 * double(phi.size()) * max_abs(phi));
    }
}

TEST(HodgeInvariants, ScaleCovariance) {
    auto net = testgen::random_connected_digraph(40, 0.05, 8);
    std::vector<Link> scaled(net.links().begin(), net.links().end());
    for (auto& l : scaled) l.frequency *= 7, l.flow *= 7;
    auto base = hodge_analysis(net);
    auto big = hodge_analysis(network_from_edges(40, scaled));
    for (std::size_t i = 0; i < 40; ++i) EXPECT_NEAR(big.potentials.phi[i], 7.0 * base.potentials.phi[i], 1e-8);
    for (std::size_t k = 0; k < base.decomposition.pairs.size(); ++k) {
        EXPECT_NEAR(big.decomposition.pairs[k].gradient, 7.0 * base.decomposition.pairs[k].gradient, 1e-7);
        EXPECT_NEAR(big.decomposition.pairs[k].circular, 7.0 * base.decomposition.pairs[k].circular, 1e-7);
    }
}

TEST(PotentialHistograms, SymmetricGraphPutsAllMassInTheZeroBin) {
    auto net = network_from_edges(3, {{0, 1, 1, 1}, {1, 0, 1, 1}, {1, 2, 1, 1}, {2, 1, 1, 1}});
    auto a = hodge_analysis(net);
    auto part = classify_bowtie(net);
    auto h = potential_histograms(a.potentials.phi, part);
    const auto zero_bin = h.bin_of(0.0);
    EXPECT_EQ(h.counts[0][zero_bin], 3u);
    std::size_t total = 0;
    for (const auto& c : h.counts)
        for (auto v : c) total += v;
    EXPECT_EQ(total, 3u);
}

TEST(PotentialHistograms, SharedBinningAndMeans) {
    // IN(0) -> core {1,2} -> OUT(3)
    auto net = network_from_edges(4, {{0, 1, 1, 1}, {1, 2, 1, 1}, {2, 1, 1, 1}, {2, 3, 1, 1}});
    auto a = hodge_analysis(net);
    auto part = classify_bowtie(net);
    auto h = potential_histograms(a.potentials.phi, part, 10);
    EXPECT_EQ(h.bins, 10u);
    const auto gscc = static_cast<std::size_t>(BowtieComponent::gscc);
    const auto in = static_cast<std::size_t>(BowtieComponent::in);
    const auto out = static_cast<std::size_t>(BowtieComponent::out);
    EXPECT_GT(*h.mean[in], *h.mean[gscc]);
    EXPECT_GT(*h.mean[gscc], *h.mean[out]);
    EXPECT_EQ(h.counts[in][9], 1u);
    EXPECT_EQ(h.counts[out][0], 1u);
    EXPECT_FALSE(h.mean[static_cast<std::size_t>(BowtieComponent::te)]);
}

TEST(PotentialVsNet, SignStructureOnSmallCases) {
    auto one = network_from_edges(2, {{0, 1, 5, 1}});
    auto a = hodge_analysis(one);
    auto pv = potential_vs_net(a.potentials.phi, one);
    EXPECT_GT(pv.phi[0], 0.0);
    EXPECT_EQ(pv.net_degree[0], -1.0);
    EXPECT_LT(pv.phi[1], 0.0);
    EXPECT_EQ(pv.net_degree[1], 1.0);
    EXPECT_EQ(pv.net_flow[1], 5.0);
    EXPECT_NEAR(*pv.pearson_degree, -1.0, 1e-12);

    auto two = network_from_edges(2, {{0, 1, 3, 3}, {1, 0, 3, 3}});
    auto b = hodge_analysis(two);
    auto pv2 = potential_vs_net(b.potentials.phi, two);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_NEAR(pv2.phi[i], 0.0, 1e-12);
        EXPECT_EQ(pv2.net_degree[i], 0.0);
    }
    EXPECT_FALSE(pv2.pearson_degree);
}
