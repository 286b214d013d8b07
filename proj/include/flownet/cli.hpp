#pragma once

// Pipeline subcommands over an artifact directory. Each subcommand reads the
// artifacts of the subcommands it depends on, writes its own, and records a
// manifest_<name>.json with content hashes of both. Manifests carry no paths
// outside the artifact directory and no timestamps.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flownet/bowtie.hpp"
#include "flownet/community.hpp"
#include "flownet/error.hpp"
#include "flownet/geonmf.hpp"
#include "flownet/hodge.hpp"
#include "flownet/ingest.hpp"
#include "flownet/network.hpp"
#include "flownet/stats.hpp"
#include "flownet/svg.hpp"
#include "flownet/synth.hpp"
#include "flownet/text.hpp"

namespace flownet::cli {

inline constexpr const char* version = "1.0.0";

enum ExitCode : int { ok = 0, usage = 1, data = 2, nonconvergence = 3 };

// An artifact that an earlier subcommand should have produced is absent.
class MissingArtifact : public DataError {
public:
    MissingArtifact(const std::string& file, const std::string& producer)
        : DataError("missing artifact " + file + ": run `flownet " + producer + "` first"), producer_(producer) {}
    const std::string& producer() const noexcept { return producer_; }

private:
    std::string producer_;
};

struct RunConfig {
    std::string command;
    std::optional<std::string> input;
    std::string out = "out";
    bool strict = false;
    std::uint64_t seed = 1;

    // ingest filters
    bool allow_households = false;
    bool allow_external = false;

    // hodge
    WeightKind weight = WeightKind::frequency;
    double tol = 1e-10;

    // communities
    std::size_t trials = 10;
    std::size_t max_depth = 5;

    // nmf
    std::size_t grid_k = 100;
    std::optional<std::array<double, 4>> grid_bounds;  // lat_min, lat_max, lon_min, lon_max
    std::size_t nmf_d = 10;
    std::optional<std::pair<std::size_t, std::size_t>> nmf_d_range;
    double radius_km = 10.0;
    std::size_t nmf_iterations = 500;
    double nmf_tol = 1e-6;

    // synth
    std::size_t nodes = 5000;
    std::string scenario = "regional";
    std::optional<double> degree_exponent;
};

// Field-level checks; throws UsageError naming the flag.
inline void validate(const RunConfig& c) {
    if (c.out.empty()) throw UsageError("--out: must not be empty");
    if (!(c.tol > 0.0 && c.tol < 1.0)) throw UsageError("--tol: must lie in (0, 1)");
    if (c.trials < 1) throw UsageError("--trials: must be at least 1");
    if (c.max_depth < 1) throw UsageError("--max-depth: must be at least 1");
    if (c.grid_k < 1) throw UsageError("--grid-k: must be at least 1");
    if (c.grid_k > 1000) throw UsageError("--grid-k: at most 1000");
    if (c.nmf_d < 1) throw UsageError("--nmf-d: must be at least 1");
    if (c.nmf_d_range && (c.nmf_d_range->first < 1 || c.nmf_d_range->first > c.nmf_d_range->second))
        throw UsageError("--nmf-d-range: expected MIN:MAX with 1 <= MIN <= MAX");
    if (!(c.radius_km > 0.0)) throw UsageError("--radius-km: must be positive");
    if (c.nmf_iterations < 1) throw UsageError("--nmf-iter: must be at least 1");
    if (!(c.nmf_tol >= 0.0 && c.nmf_tol < 1.0)) throw UsageError("--nmf-tol: must lie in [0, 1)");
    if (c.grid_bounds) {
        const auto& b = *c.grid_bounds;
        if (!(b[1] > b[0] && b[3] > b[2])) throw UsageError("--grid-bounds: expected LAT_MIN,LAT_MAX,LON_MIN,LON_MAX");
    }
    if (c.scenario != "regional" && c.scenario != "walnut") throw UsageError("--scenario: expected regional or walnut");
    if (c.nodes < 2) throw UsageError("--nodes: must be at least 2");
    if (c.degree_exponent && !(*c.degree_exponent > 0.0)) throw UsageError("--degree-exponent: must be positive");
}

namespace detail {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline json parse_json(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw DataError(p.filename().string() + ": " + e.what());
    }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Collects file hashes and writes the manifest; artifacts are written in
// memory first so each file's hash is computed from the exact bytes on disk.
class Run {
public:
    Run(const RunConfig& cfg, json config) : cfg_(cfg), dir_(cfg.out), config_(std::move(config)) {
        fs::create_directories(dir_);
    }

    const fs::path& dir() const { return dir_; }

    fs::path require(const std::string& file, const std::string& producer) const {
        const auto p = dir_ / file;
        if (!fs::exists(p)) throw MissingArtifact(file, producer);
        return p;
    }

    std::string read_input(const fs::path& p) {
        auto data = read_file(p);
        inputs_.push_back({{"file", p.filename().string()}, {"bytes", data.size()}, {"fnv1a64", hex64(fnv1a(data))}});
        return data;
    }

    void write(const std::string& file, const std::string& data) {
        const auto p = dir_ / file;
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        out << data;
        if (!out) throw DataError("cannot write " + p.string());
        outputs_.push_back({{"file", file}, {"bytes", data.size()}, {"fnv1a64", hex64(fnv1a(data))}});
    }

    void finish() {
        json m;
        m["command"] = cfg_.command;
        m["tool"] = "flownet";
        m["version"] = version;
        m["config"] = config_;
        m["config_fnv1a64"] = hex64(fnv1a(config_.dump()));
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        const auto data = dump(m);
        std::ofstream out(dir_ / ("manifest_" + cfg_.command + ".json"), std::ios::binary);
        out << data;
        if (!out) throw DataError("cannot write manifest");
    }

private:
    const RunConfig& cfg_;
    fs::path dir_;
    json config_;
    json inputs_ = json::array();
    json outputs_ = json::array();
};

inline FlowNetwork load_network(Run& run) {
    std::istringstream in(run.read_input(run.require("links.csv", "ingest")));
    return build_network(read_links(in));
}

inline json summary_json(const SummaryStats& s) {
    return {{"count", s.count},        {"min", s.min},
            {"max", s.max},            {"median", s.median},
            {"mean", s.mean},          {"stddev", opt_number(s.stddev)},
            {"skewness", opt_number(s.skewness)}, {"kurtosis", opt_number(s.kurtosis)}};
}

inline const char* component_names[] = {"GSCC", "IN", "OUT", "TE", "outside_GWCC"};

// ---------------------------------------------------------------------------

inline void run_synth(const RunConfig& c) {
    ScenarioSpec spec;
    if (c.scenario == "regional") {
        spec = regional_scenario(c.nodes, c.seed);
    } else {
        spec.nodes = c.nodes;
        spec.seed = c.seed;
    }
    if (c.degree_exponent) spec.degree_exponent = *c.degree_exponent;
    Run run(c, {{"scenario", c.scenario}, {"nodes", c.nodes}, {"seed", c.seed}, {"degree_exponent", spec.degree_exponent}});
    const auto sc = generate(spec);
    std::ostringstream log;
    write_log(log, sc.records);
    run.write("transfers.csv", log.str());
    run.write("ground_truth.json", dump(ground_truth_json(spec, sc.truth)));
    run.finish();
}

inline void run_ingest(const RunConfig& c) {
    FilterPolicy policy;
    policy.require_firm_both_ends = !c.allow_households;
    policy.require_intra_bank = !c.allow_external;
    Run run(c, {{"input", c.input ? fs::path(*c.input).filename().string() : std::string("transfers.csv")},
                {"strict", c.strict},
                {"drop_self_loops", policy.drop_self_loops},
                {"require_firm_both_ends", policy.require_firm_both_ends},
                {"require_intra_bank", policy.require_intra_bank}});
    fs::path src;
    if (c.input) {
        src = *c.input;
        if (!fs::exists(src)) throw DataError("--input: no such file " + src.string());
    } else {
        src = run.require("transfers.csv", "synth");
    }
    std::istringstream in(run.read_input(src));
    const auto parsed = parse_log(in, LogFormat{',', c.strict});
    const auto kept = filter_records(parsed.records, policy);
    const auto links = aggregate(kept);
    const auto net = build_network(links);

    std::int64_t amount_total = 0, flow_total = 0, frequency_total = 0;
    for (const auto& r : kept) amount_total += r.amount;
    for (const auto& l : links) {
        flow_total += l.flow;
        frequency_total += l.frequency;
    }
    if (flow_total != amount_total || frequency_total != static_cast<std::int64_t>(kept.size()))
        throw DataError("aggregation lost transfers");

    std::ostringstream links_csv, accounts_csv, rejected_csv;
    write_links(links_csv, links);
    write_accounts(accounts_csv, collect_account_coords(kept));
    rejected_csv << "line,reason\n";
    for (const auto& r : parsed.rejected) rejected_csv << r.line << ',' << r.reason << '\n';
    run.write("links.csv", links_csv.str());
    run.write("accounts.csv", accounts_csv.str());
    run.write("rejected.csv", rejected_csv.str());
    run.write("ingest.json", dump({{"lines_read", parsed.lines_read},
                                   {"parsed_records", parsed.records.size()},
                                   {"rejected_lines", parsed.rejected.size()},
                                   {"kept_records", kept.size()},
                                   {"filtered_records", parsed.records.size() - kept.size()},
                                   {"nodes", net.node_count()},
                                   {"links", net.link_count()},
                                   {"amount_total", amount_total},
                                   {"flow_total", flow_total},
                                   {"frequency_total", frequency_total}}));
    run.finish();
}

inline void run_stats(const RunConfig& c) {
    Run run(c, json::object());
    const auto net = load_network(run);
    if (net.node_count() < 2) throw DataError("statistics need at least two accounts");
    std::vector<std::int64_t> flows, freqs;
    for (const auto& l : net.links()) {
        flows.push_back(l.flow);
        freqs.push_back(l.frequency);
    }
    const auto deg = degree_stats(net);
    std::vector<std::int64_t> in, out;
    std::int64_t in_sum = 0, out_sum = 0;
    for (const auto& d : deg) {
        in.push_back(d.in);
        out.push_back(d.out);
        in_sum += d.in;
        out_sum += d.out;
    }
    const auto corr = degree_correlation(net);
    std::map<std::int64_t, std::size_t> freq_hist;
    for (auto g : freqs) ++freq_hist[g];
    auto links_with = [&](std::int64_t g) { return freq_hist.count(g) ? freq_hist.at(g) : std::size_t{0}; };

    std::ostringstream ccdf_csv;
    ccdf_csv << "series,value,fraction\n";
    auto emit = [&](const char* name, const std::vector<std::int64_t>& v) {
        for (const auto& p : ccdf(v)) ccdf_csv << name << ',' << format_double(p.value) << ',' << format_double(p.fraction) << '\n';
    };
    emit("in_degree", in);
    emit("out_degree", out);
    emit("link_flow", flows);
    emit("link_frequency", freqs);

    std::ostringstream degrees_csv;
    degrees_csv << "account_id,in_degree,out_degree,net_degree\n";
    for (NodeIndex i = 0; i < net.node_count(); ++i)
        degrees_csv << net.id(i) << ',' << deg[i].in << ',' << deg[i].out << ',' << deg[i].net << '\n';

    run.write("stats.json",
              dump({{"nodes", net.node_count()},
                    {"links", net.link_count()},
                    {"in_degree_sum", in_sum},
                    {"out_degree_sum", out_sum},
                    {"link_flow", summary_json(summary(flows))},
                    {"link_frequency", summary_json(summary(freqs))},
                    {"in_degree", summary_json(summary(in))},
                    {"out_degree", summary_json(summary(out))},
                    {"degree_correlation", {{"pearson", opt_number(corr.pearson_r)}, {"kendall_tau_b", opt_number(corr.kendall_tau)}}},
                    {"periodic_links", {{"monthly_29", links_with(29)}, {"biweekly_58", links_with(58)}}}}));
    run.write("ccdf.csv", ccdf_csv.str());
    run.write("degrees.csv", degrees_csv.str());
    run.finish();
}

inline json distance_json(const std::map<std::size_t, std::size_t>& hist) {
    std::size_t total = 0;
    for (auto [d, n] : hist) total += n;
    json rows = json::array();
    for (auto [d, n] : hist)
        rows.push_back({{"distance", d}, {"accounts", n}, {"share", total ? static_cast<double>(n) / static_cast<double>(total) : 0.0}});
    return rows;
}

inline void run_bowtie(const RunConfig& c) {
    Run run(c, json::object());
    const auto net = load_network(run);
    const auto part = classify_bowtie(net);
    const auto prof = distance_profile(net, part);
    json comps = json::array();
    for (auto comp : {BowtieComponent::gscc, BowtieComponent::in, BowtieComponent::out, BowtieComponent::te,
                      BowtieComponent::outside_gwcc}) {
        json row{{"component", std::string(to_string(comp))}, {"accounts", part.size_of(comp)}};
        if (comp != BowtieComponent::outside_gwcc) row["share_of_gwcc"] = part.ratio(comp);
        comps.push_back(row);
    }
    std::ostringstream csv;
    csv << "account_id,component\n";
    for (NodeIndex i = 0; i < net.node_count(); ++i) csv << net.id(i) << ',' << to_string(part.component_of[i]) << '\n';
    run.write("bowtie.csv", csv.str());
    run.write("bowtie.json", dump({{"nodes", net.node_count()},
                                   {"gwcc", part.gwcc_size},
                                   {"components", comps},
                                   {"in_to_gscc", distance_json(prof.in_to_gscc)},
                                   {"gscc_to_out", distance_json(prof.gscc_to_out)}}));
    run.finish();
}

inline void run_hodge(const RunConfig& c) {
    Run run(c, {{"weight", std::string(to_string(c.weight))}, {"tol", c.tol}});
    const auto net = load_network(run);
    SolverOptions opt;
    opt.relative_tolerance = c.tol;
    const auto a = hodge_analysis(net, c.weight, opt);
    const auto& phi = a.potentials.phi;
    const auto part = classify_bowtie(net);
    const auto hist = potential_histograms(phi, part, 100);
    const auto vs = potential_vs_net(phi, net);
    const auto deg = degree_stats(net);
    const auto netflow = net_flow_per_node(net);

    double grad2 = 0, circ2 = 0, total2 = 0, div = 0, scale = 0;
    for (const auto& p : a.decomposition.pairs) {
        grad2 += p.gradient * p.gradient;
        circ2 += p.circular * p.circular;
        total2 += p.net_flow * p.net_flow;
        scale = std::max(scale, std::abs(p.net_flow));
    }
    for (double x : a.decomposition.circular_divergence()) div = std::max(div, std::abs(x));

    json means = json::object(), counts = json::object();
    for (std::size_t k = 0; k < 4; ++k) {
        means[component_names[k]] = opt_number(hist.mean[k]);
        counts[component_names[k]] = hist.counts[k];
    }
    std::ostringstream csv;
    csv << "account_id,potential,net_degree,net_flow,component\n";
    for (NodeIndex i = 0; i < net.node_count(); ++i)
        csv << net.id(i) << ',' << format_double(phi[i]) << ',' << deg[i].net << ',' << netflow[i] << ','
            << to_string(part.component_of[i]) << '\n';
    run.write("potentials.csv", csv.str());
    run.write("hodge.json",
              dump({{"weight", std::string(to_string(c.weight))},
                    {"nodes", net.node_count()},
                    {"pairs", a.problem.pairs.size()},
                    {"solver", {{"iterations", a.potentials.iterations},
                                {"relative_residual", a.potentials.relative_residual},
                                {"components", a.potentials.components}}},
                    {"flow_norms", {{"total", std::sqrt(total2)}, {"gradient", std::sqrt(grad2)}, {"circular", std::sqrt(circ2)}}},
                    {"max_circular_divergence", div},
                    {"max_abs_net_flow", scale},
                    {"pearson_potential_net_degree", opt_number(vs.pearson_degree)},
                    {"pearson_potential_net_flow", opt_number(vs.pearson_flow)},
                    {"component_mean_potential", means},
                    {"histogram", {{"lo", hist.lo}, {"hi", hist.hi}, {"bins", hist.bins}, {"counts", counts}}}}));
    run.finish();
}

inline void run_communities(const RunConfig& c) {
    Run run(c, {{"seed", c.seed}, {"trials", c.trials}, {"max_depth", c.max_depth}, {"teleport", 0.15}});
    const auto net = load_network(run);
    OptimizerOptions opt;
    opt.trials = c.trials;
    opt.max_depth = c.max_depth;
    const auto tree = detect_communities(net, c.seed, opt);
    const auto rep = community_report(tree);

    // per node, the path of child positions from the root
    std::vector<std::string> path(net.node_count());
    std::vector<std::string> label(tree.communities.size());
    for (std::size_t k = 0; k < tree.communities.size(); ++k) {
        const auto& com = tree.communities[k];
        for (std::size_t j = 0; j < com.children.size(); ++j) {
            const auto ch = com.children[j];
            label[ch] = (label[k].empty() ? "" : label[k] + ":") + std::to_string(j + 1);
        }
    }
    for (std::size_t k = 0; k < tree.communities.size(); ++k)
        if (tree.communities[k].irreducible)
            for (auto v : tree.communities[k].members) path[v] = label[k];

    std::ostringstream csv;
    csv << "account_id,community_path,level\n";
    for (NodeIndex i = 0; i < net.node_count(); ++i) {
        const auto levels = path[i].empty() ? 0 : 1 + std::count(path[i].begin(), path[i].end(), ':');
        csv << net.id(i) << ',' << path[i] << ',' << levels << '\n';
    }
    json levels = json::array();
    for (const auto& l : rep.levels)
        levels.push_back({{"level", l.level},
                          {"communities", l.communities},
                          {"irreducible", l.irreducible},
                          {"accounts", l.accounts},
                          {"ratio", l.ratio}});
    json sizes = json::array();
    for (auto [rank, size] : rep.size_rank) sizes.push_back({rank, size});
    run.write("communities.csv", csv.str());
    run.write("communities.json", dump({{"nodes", net.node_count()},
                                        {"codelength_bits", tree.root().codelength},
                                        {"depth", tree.depth()},
                                        {"levels", levels},
                                        {"total_irreducible", rep.total_irreducible},
                                        {"total_accounts", rep.total_accounts},
                                        {"size_rank", sizes}}));
    run.finish();
}

inline json cell_json(const GeoGrid& grid, const Localization& l) {
    if (!l.center) return {{"gamma", nullptr}, {"p", nullptr}, {"q", nullptr}, {"lat", nullptr}, {"lon", nullptr}};
    const auto at = grid.center(*l.center);
    return {{"gamma", *l.gamma}, {"p", l.center->p}, {"q", l.center->q}, {"lat", at.lat}, {"lon", at.lon}};
}

inline void run_nmf(const RunConfig& c) {
    json cfg{{"grid_k", c.grid_k}, {"nmf_d", c.nmf_d}, {"radius_km", c.radius_km}, {"seed", c.seed},
             {"nmf_iterations", c.nmf_iterations}, {"nmf_tol", c.nmf_tol}};
    cfg["grid_bounds"] = c.grid_bounds ? json(*c.grid_bounds) : json(nullptr);
    cfg["nmf_d_range"] = c.nmf_d_range ? json{c.nmf_d_range->first, c.nmf_d_range->second} : json(nullptr);
    Run run(c, cfg);
    const auto net = load_network(run);
    std::istringstream acc_in(run.read_input(run.require("accounts.csv", "ingest")));
    const auto coords = read_accounts(acc_in);
    if (coords.empty()) throw DataError("accounts.csv has no coordinates; the transfer log carries none");

    GeoGrid grid;
    if (c.grid_bounds) {
        const auto& b = *c.grid_bounds;
        grid = GeoGrid(b[0], b[1], b[2], b[3], c.grid_k);
    } else {
        std::vector<GeoCoord> points;
        for (const auto& [id, p] : coords) points.push_back(p);
        grid = GeoGrid::bounding(points, c.grid_k);
    }
    const auto gl = geo_links(net, {coords.begin(), coords.end()});
    const auto alpha = bin_transfers(gl.links, grid);
    const auto v = alpha.log_matrix();
    if (c.nmf_d > grid.cells()) throw UsageError("--nmf-d: exceeds the number of grid cells");
    const CircleIndex circles(grid, c.radius_km);
    NmfOptions opt;
    opt.max_iterations = c.nmf_iterations;
    opt.tolerance = c.nmf_tol;
    const auto f = nmf(v, c.nmf_d, c.seed, opt);
    const auto loc = localization(f, circles);
    const auto sim = similarity_matrix(f);
    const auto row = summarize(f, circles);

    json factors = json::array();
    for (std::size_t m = 0; m < f.d; ++m)
        factors.push_back({{"factor", m + 1},
                           {"source", cell_json(grid, loc.source[m])},
                           {"destination", cell_json(grid, loc.destination[m])},
                           {"similarity", opt_number(sim[m][m])}});
    json sim_rows = json::array();
    for (const auto& r : sim) {
        json jr = json::array();
        for (const auto& x : r) jr.push_back(opt_number(x));
        sim_rows.push_back(jr);
    }

    std::ostringstream vs, ws, hs;
    write_sparse(vs, v);
    write_dense(ws, f.w);
    write_dense(hs, f.h);
    run.write("V.txt", vs.str());
    run.write("W.txt", ws.str());
    run.write("H.txt", hs.str());
    if (c.nmf_d_range) {
        std::ostringstream sweep;
        sweep << "d,localized_sources,localized_destinations,matched_pairs,localized_matched_pairs,relative_error\n";
        for (const auto& r : d_sweep(v, c.nmf_d_range->first, c.nmf_d_range->second, c.seed, circles, opt))
            sweep << r.d << ',' << r.localized_sources << ',' << r.localized_destinations << ',' << r.matched_pairs << ','
                  << r.localized_matched_pairs << ',' << format_double(r.relative_error) << '\n';
        run.write("sweep.csv", sweep.str());
    }
    run.write("nmf.json",
              dump({{"grid", {{"k", grid.k()},
                              {"lat_min", grid.lat_min()},
                              {"lat_max", grid.lat_max()},
                              {"lon_min", grid.lon_min()},
                              {"lon_max", grid.lon_max()}}},
                    {"links_binned", gl.links.size()},
                    {"links_without_coordinates", gl.missing_coordinates},
                    {"links_out_of_bounds", alpha.out_of_bounds},
                    {"stored_entries", v.entries.size()},
                    {"d", f.d},
                    {"iterations", f.iterations},
                    {"objective", f.objective},
                    {"relative_error", f.relative_error},
                    {"radius_km", c.radius_km},
                    {"localized_gamma", localized_gamma},
                    {"matched_similarity", matched_similarity},
                    {"localized_sources", row.localized_sources},
                    {"localized_destinations", row.localized_destinations},
                    {"matched_pairs", row.matched_pairs},
                    {"localized_matched_pairs", row.localized_matched_pairs},
                    {"factors", factors},
                    {"similarity", sim_rows}}));
    run.finish();
}

inline std::string render(const auto& draw) {
    std::ostringstream s;
    draw(s);
    return s.str();
}

inline void run_report(const RunConfig& c) {
    Run run(c, json::object());
    auto load = [&](const std::string& file, const std::string& producer) {
        return json::parse(run.read_input(run.require(file, producer)));
    };
    const auto ingest = load("ingest.json", "ingest");
    const auto stats = load("stats.json", "stats");
    const auto bowtie = load("bowtie.json", "bowtie");
    const auto hodge = load("hodge.json", "hodge");
    const auto communities = load("communities.json", "communities");
    const auto nmfj = load("nmf.json", "nmf");
    const auto ccdf_text = run.read_input(run.require("ccdf.csv", "stats"));
    std::istringstream w_in(run.read_input(run.require("W.txt", "nmf")));
    std::istringstream h_in(run.read_input(run.require("H.txt", "nmf")));
    const auto w = read_dense(w_in);
    const auto h = read_dense(h_in);

    std::vector<std::string> figures;
    auto figure = [&](const std::string& name, const std::string& svg_text) {
        run.write("report/" + name, svg_text);
        figures.push_back(name);
    };

    // CCDFs
    std::map<std::string, svg::Series> series;
    std::istringstream ccdf_in(ccdf_text);
    std::string line;
    std::getline(ccdf_in, line);
    while (std::getline(ccdf_in, line)) {
        const auto f = split(line, ',');
        if (f.size() != 3) throw DataError("ccdf.csv: malformed line");
        auto& s = series[std::string(f[0])];
        s.name = std::string(f[0]);
        s.points.push_back({parse_double(f[1]).value_or(0), parse_double(f[2]).value_or(0)});
    }
    figure("degree_ccdf.svg", render([&](std::ostream& o) {
               svg::loglog(o, {"Degree distributions", "degree", "CCDF"}, {series["in_degree"], series["out_degree"]});
           }));
    figure("link_flow_ccdf.svg", render([&](std::ostream& o) {
               svg::loglog(o, {"Link flow", "flow (yen)", "CCDF"}, {series["link_flow"]});
           }));
    figure("link_frequency_ccdf.svg", render([&](std::ostream& o) {
               svg::loglog(o, {"Link frequency", "transfers", "CCDF"}, {series["link_frequency"]});
           }));

    // potentials by bowtie component
    std::vector<svg::Histogram> hists;
    for (std::size_t k = 0; k < 4; ++k)
        hists.push_back({component_names[k], hodge["histogram"]["counts"][component_names[k]].get<std::vector<double>>()});
    figure("potential_histogram.svg", render([&](std::ostream& o) {
               svg::histogram(o, {"Hodge potential by bowtie component", "potential", "accounts"},
                              hodge["histogram"]["lo"].get<double>(), hodge["histogram"]["hi"].get<double>(), hists);
           }));

    // community rank-size
    svg::Series ranks{"irreducible communities", {}};
    for (const auto& p : communities["size_rank"]) ranks.points.push_back({p[0].get<double>(), p[1].get<double>()});
    figure("community_rank_size.svg", render([&](std::ostream& o) {
               svg::loglog(o, {"Irreducible community sizes", "rank", "size"}, {ranks});
           }));

    // NMF basis heatmaps, north at the top
    const auto k = nmfj["grid"]["k"].get<std::size_t>();
    if (w.rows != k * k || h.cols != k * k || w.cols != h.rows) throw DataError("W.txt/H.txt do not match the grid");
    auto top_down = [&](auto value) {
        std::vector<double> out(k * k);
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t p = 0; p < k; ++p) out[r * k + p] = value(p + (k - 1 - r) * k);
        return out;
    };
    for (std::size_t m = 0; m < w.cols; ++m) {
        char id[8];
        std::snprintf(id, sizeof id, "%02zu", m + 1);
        const auto src = top_down([&](std::size_t cell) { return w(cell, m); });
        const auto dst = top_down([&](std::size_t cell) { return h(m, cell); });
        figure(std::string("nmf_source_") + id + ".svg", render([&](std::ostream& o) {
                   svg::heatmap(o, {std::string("Source basis w_") + std::to_string(m + 1), "west to east", ""}, k, src);
               }));
        figure(std::string("nmf_destination_") + id + ".svg", render([&](std::ostream& o) {
                   svg::heatmap(o, {std::string("Destination basis h_") + std::to_string(m + 1), "west to east", ""}, k, dst);
               }));
    }

    json report;
    report["network"] = {{"nodes", stats["nodes"]}, {"links", stats["links"]}, {"records_kept", ingest["kept_records"]}};
    report["link_statistics"] = {{"flow", stats["link_flow"]}, {"frequency", stats["link_frequency"]}};
    report["degree_correlation"] = stats["degree_correlation"];
    report["communities"] = {{"levels", communities["levels"]},
                             {"total_irreducible", communities["total_irreducible"]},
                             {"total_accounts", communities["total_accounts"]}};
    report["bowtie"] = {{"gwcc", bowtie["gwcc"]}, {"components", bowtie["components"]}};
    report["bowtie_distances"] = {{"in_to_gscc", bowtie["in_to_gscc"]}, {"gscc_to_out", bowtie["gscc_to_out"]}};
    report["hodge"] = {{"weight", hodge["weight"]},
                       {"component_mean_potential", hodge["component_mean_potential"]},
                       {"pearson_potential_net_degree", hodge["pearson_potential_net_degree"]},
                       {"pearson_potential_net_flow", hodge["pearson_potential_net_flow"]},
                       {"flow_norms", hodge["flow_norms"]}};
    report["nmf"] = {{"d", nmfj["d"]},
                     {"relative_error", nmfj["relative_error"]},
                     {"localized_matched_pairs", nmfj["localized_matched_pairs"]},
                     {"factors", nmfj["factors"]},
                     {"similarity", nmfj["similarity"]}};
    report["figures"] = figures;
    run.write("report/report.json", dump(report));
    run.finish();
}

}  // namespace detail

// Runs one subcommand; returns its exit code and reports errors on `err`.
inline int run(const RunConfig& config, std::ostream& err = std::cerr) {
    try {
        validate(config);
        if (config.command == "synth") detail::run_synth(config);
        else if (config.command == "ingest") detail::run_ingest(config);
        else if (config.command == "stats") detail::run_stats(config);
        else if (config.command == "bowtie") detail::run_bowtie(config);
        else if (config.command == "hodge") detail::run_hodge(config);
        else if (config.command == "communities") detail::run_communities(config);
        else if (config.command == "nmf") detail::run_nmf(config);
        else if (config.command == "report") detail::run_report(config);
        else throw UsageError("unknown subcommand '" + config.command + "'");
        return ok;
    } catch (const UsageError& e) {
        err << "flownet " << config.command << ": " << e.what() << '\n';
        return usage;
    } catch (const ConvergenceError& e) {
        err << "flownet " << config.command << ": " << e.what() << " (residual " << e.residual() << ")\n";
        return nonconvergence;
    } catch (const DataError& e) {
        err << "flownet " << config.command << ": " << e.what() << '\n';
        return data;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "flownet " << config.command << ": " << e.what() << '\n';
        return data;
    } catch (const nlohmann::json::exception& e) {
        err << "flownet " << config.command << ": malformed artifact: " << e.what() << '\n';
        return data;
    }
}

inline int main(int argc, const char* const* argv, std::ostream& err = std::cerr) {
    RunConfig cfg;
    CLI::App app{"Firm-to-firm transfer network analysis"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_version_flag("--version", version);

    std::string input, weight = "frequency", bounds, d_range;
    app.add_option("--input", input, "Transfer log for ingest");
    app.add_option("--out", cfg.out, "Artifact directory")->capture_default_str();
    app.add_option("--weight", weight, "Hodge weights: flow or frequency")->capture_default_str();
    app.add_option("--tol", cfg.tol, "Relative residual tolerance of the potential solve")->capture_default_str();
    app.add_option("--seed", cfg.seed, "Seed for synth, communities and nmf")->capture_default_str();
    app.add_option("--trials", cfg.trials, "Community optimizer trials")->capture_default_str();
    app.add_option("--grid-k", cfg.grid_k, "Grid cells per side")->capture_default_str();
    app.add_option("--nmf-d", cfg.nmf_d, "Number of NMF factors")->capture_default_str();
    app.add_option("--nmf-d-range", d_range, "Factor-count sweep MIN:MAX");
    app.add_option("--radius-km", cfg.radius_km, "Localization radius")->capture_default_str();
    app.add_option("--grid-bounds", bounds, "LAT_MIN,LAT_MAX,LON_MIN,LON_MAX (default: bounding square)");
    app.add_flag("--strict", cfg.strict, "Fail on the first malformed log line");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic transfer log with ground truth");
    synth->add_option("--nodes", cfg.nodes, "Accounts")->capture_default_str();
    synth->add_option("--scenario", cfg.scenario, "regional or walnut")->capture_default_str();
    synth->add_option("--degree-exponent", cfg.degree_exponent, "Out-degree tail exponent");
    auto* ingest = app.add_subcommand("ingest", "Parse, filter and aggregate a transfer log");
    ingest->add_flag("--allow-households", cfg.allow_households, "Keep transfers with a household end");
    ingest->add_flag("--allow-external", cfg.allow_external, "Keep transfers with another bank");
    app.add_subcommand("stats", "Degree, flow and frequency statistics");
    app.add_subcommand("bowtie", "Bowtie decomposition and skin distances");
    app.add_subcommand("hodge", "Hodge potentials and flow decomposition");
    auto* comm = app.add_subcommand("communities", "Hierarchical map-equation communities");
    comm->add_option("--max-depth", cfg.max_depth, "Deepest community level")->capture_default_str();
    auto* geo = app.add_subcommand("nmf", "Geographic origin-destination factorization");
    geo->add_option("--nmf-iter", cfg.nmf_iterations, "Iteration cap")->capture_default_str();
    geo->add_option("--nmf-tol", cfg.nmf_tol, "Relative objective decrease to stop")->capture_default_str();
    app.add_subcommand("report", "Collate artifacts into report/ with SVG figures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, std::cout, err);
        return code == 0 ? ok : usage;
    }
    cfg.command = app.get_subcommands().front()->get_name();
    if (!input.empty()) cfg.input = input;
    try {
        const auto w = parse_weight_kind(weight);
        if (!w) throw UsageError("--weight: expected flow or frequency");
        cfg.weight = *w;
        if (!d_range.empty()) {
            const auto parts = split(d_range, ':');
            std::size_t lo = 0, hi = 0;
            if (parts.size() != 2 || std::from_chars(parts[0].data(), parts[0].data() + parts[0].size(), lo).ec != std::errc{} ||
                std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), hi).ec != std::errc{})
                throw UsageError("--nmf-d-range: expected MIN:MAX");
            cfg.nmf_d_range = std::pair{lo, hi};
        }
        if (!bounds.empty()) {
            const auto parts = split(bounds, ',');
            std::array<double, 4> b{};
            if (parts.size() != 4) throw UsageError("--grid-bounds: expected LAT_MIN,LAT_MAX,LON_MIN,LON_MAX");
            for (std::size_t i = 0; i < 4; ++i) {
                const auto v = parse_double(trim(parts[i]));
                if (!v) throw UsageError("--grid-bounds: expected LAT_MIN,LAT_MAX,LON_MIN,LON_MAX");
                b[i] = *v;
            }
            cfg.grid_bounds = b;
        }
    } catch (const UsageError& e) {
        err << "flownet " << cfg.command << ": " << e.what() << '\n';
        return usage;
    }
    return run(cfg, err);
}

}  // namespace flownet::cli
