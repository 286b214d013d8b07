#pragma once

// Flow-based community detection with the two-level map equation, applied
// recursively to build a community hierarchy.
//
// Random walk: follow an out-link with probability proportional to its
// frequency weight, or teleport (probability `teleport`, and always from a
// node without out-links) to a node chosen proportionally to out-strength.
// Teleportation steps are recorded, so for a module m with visit rate P_m,
// teleport-departure rate T_m and teleport-target share U_m the exit rate is
//
//   q_m = T_m (1 - U_m) + (link flow leaving m)
//
// and the description length is
//
//   L = q H(Q) + sum_m p_m H(P_m)
//     = plogp(q) - 2 sum_m plogp(q_m) - sum_a plogp(p_a) + sum_m plogp(q_m + P_m)
//
// with q = sum_m q_m and plogp(x) = x log2 x.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "flownet/error.hpp"
#include "flownet/network.hpp"

namespace flownet {

struct WeightedArc {
    std::uint32_t source = 0;
    std::uint32_t target = 0;
    double weight = 0.0;
};

struct WeightedDigraph {
    std::size_t node_count = 0;
    std::vector<WeightedArc> arcs;  // no self-loops
};

// Frequency-weighted view of the network.
inline WeightedDigraph frequency_graph(const FlowNetwork& net) {
    WeightedDigraph g;
    g.node_count = net.node_count();
    g.arcs.reserve(net.link_count());
    for (const auto& l : net.links()) g.arcs.push_back({l.source, l.destination, static_cast<double>(l.frequency)});
    return g;
}

struct FlowModel {
    std::size_t node_count = 0;
    double teleport = 0.15;
    std::vector<double> visit;            // stationary visit rate p_a
    std::vector<double> teleport_exit;    // rate of teleport departures from a
    std::vector<double> teleport_target;  // u_a, share of teleports landing on a
    std::vector<WeightedArc> arc_flow;    // weight = flow along the arc
    // Set when the model covers one community of a larger network: link flow
    // from each node to outside the community, and the community's own exit
    // rate, which joins the index codebook as an extra codeword.
    std::vector<double> external_out;
    double parent_exit = 0.0;
};

inline FlowModel compute_flow(const WeightedDigraph& g, double teleport = 0.15) {
    const auto n = g.node_count;
    FlowModel m;
    m.node_count = n;
    m.teleport = teleport;
    if (n == 0) return m;

    std::vector<double> strength(n, 0.0);
    for (const auto& a : g.arcs) strength[a.source] += a.weight;
    const double total = std::accumulate(strength.begin(), strength.end(), 0.0);
    m.teleport_target.assign(n, 1.0 / static_cast<double>(n));
    if (total > 0.0)
        for (std::size_t i = 0; i < n; ++i) m.teleport_target[i] = strength[i] / total;

    std::vector<double> p(n, 1.0 / static_cast<double>(n)), next(n);
    for (int iter = 0; iter < 10000; ++iter) {
        double jump = 0.0;
        for (std::size_t i = 0; i < n; ++i) jump += strength[i] > 0.0 ? teleport * p[i] : p[i];
        for (std::size_t i = 0; i < n; ++i) next[i] = jump * m.teleport_target[i];
        for (const auto& a : g.arcs) next[a.target] += (1.0 - teleport) * p[a.source] * a.weight / strength[a.source];
        const double norm = std::accumulate(next.begin(), next.end(), 0.0);
        double diff = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            next[i] /= norm;
            diff += std::abs(next[i] - p[i]);
        }
        p.swap(next);
        if (diff < 1e-15) break;
    }
    m.visit = p;
    m.teleport_exit.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.teleport_exit[i] = (strength[i] > 0.0 ? teleport : 1.0) * p[i];
    m.arc_flow.reserve(g.arcs.size());
    for (const auto& a : g.arcs)
        m.arc_flow.push_back({a.source, a.target, (1.0 - teleport) * p[a.source] * a.weight / strength[a.source]});
    return m;
}

// Flow of `global` restricted to `members`, exits measured against the whole
// network.
inline FlowModel restrict_flow(const FlowModel& global, std::span<const std::uint32_t> members) {
    constexpr auto absent = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> local(global.node_count, absent);
    for (std::uint32_t k = 0; k < members.size(); ++k) local[members[k]] = k;
    FlowModel m;
    m.node_count = members.size();
    m.teleport = global.teleport;
    m.visit.reserve(members.size());
    double tele_exit = 0.0, tele_in = 0.0;
    for (auto v : members) {
        m.visit.push_back(global.visit[v]);
        m.teleport_exit.push_back(global.teleport_exit[v]);
        m.teleport_target.push_back(global.teleport_target[v]);
        tele_exit += global.teleport_exit[v];
        tele_in += global.teleport_target[v];
    }
    m.external_out.assign(members.size(), 0.0);
    double link_exit = 0.0;
    for (const auto& a : global.arc_flow) {
        const auto s = local[a.source], t = local[a.target];
        if (s == absent) continue;
        if (t == absent) {
            m.external_out[s] += a.weight;
            link_exit += a.weight;
        } else {
            m.arc_flow.push_back({s, t, a.weight});
        }
    }
    m.parent_exit = tele_exit * (1.0 - tele_in) + link_exit;
    return m;
}

namespace detail {

inline double plogp(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

struct ModuleStats {
    double visit = 0.0;     // P_m
    double tele_exit = 0.0; // T_m
    double tele_in = 0.0;   // U_m
    double link_exit = 0.0; // E_m
    std::size_t units = 0;

    double exit() const { return tele_exit * (1.0 - tele_in) + link_exit; }
};

}  // namespace detail

// Two-level map equation for a partition given as module labels 0..k-1.
// Every label below the largest one must be used.
inline double map_equation_value(const FlowModel& flow, std::span<const std::uint32_t> module_of) {
    if (module_of.size() != flow.node_count) throw UsageError("partition does not cover the network");
    if (module_of.empty()) return 0.0;
    const std::size_t k = *std::max_element(module_of.begin(), module_of.end()) + 1;
    std::vector<detail::ModuleStats> mods(k);
    double node_entropy = 0.0;
    for (std::size_t i = 0; i < module_of.size(); ++i) {
        auto& m = mods[module_of[i]];
        m.visit += flow.visit[i];
        m.tele_exit += flow.teleport_exit[i];
        m.tele_in += flow.teleport_target[i];
        ++m.units;
        node_entropy += detail::plogp(flow.visit[i]);
    }
    for (const auto& m : mods)
        if (m.units == 0) throw UsageError("partition has an empty module");
    for (const auto& a : flow.arc_flow)
        if (module_of[a.source] != module_of[a.target]) mods[module_of[a.source]].link_exit += a.weight;
    for (std::size_t i = 0; i < flow.external_out.size(); ++i) mods[module_of[i]].link_exit += flow.external_out[i];
    double exit_total = flow.parent_exit, exit_terms = 0.0, module_terms = 0.0;
    for (const auto& m : mods) {
        const double q = m.exit();
        exit_total += q;
        exit_terms += detail::plogp(q);
        module_terms += detail::plogp(q + m.visit);
    }
    return detail::plogp(exit_total) - detail::plogp(flow.parent_exit) - 2.0 * exit_terms - node_entropy +
           module_terms;
}

// Codelength of a model left as a single codebook (for a community: its exit
// codeword plus its nodes).
inline double unsplit_codelength(const FlowModel& flow) {
    double visit = 0.0, node_entropy = 0.0;
    for (double p : flow.visit) {
        visit += p;
        node_entropy += detail::plogp(p);
    }
    return detail::plogp(flow.parent_exit + visit) - detail::plogp(flow.parent_exit) - node_entropy;
}

inline double map_equation_value(const FlowNetwork& net, std::span<const std::uint32_t> module_of,
                                 double teleport = 0.15) {
    if (net.empty()) throw UsageError("map equation of an empty network");
    return map_equation_value(compute_flow(frequency_graph(net), teleport), module_of);
}

// ---------------------------------------------------------------------------
// optimizer

struct OptimizerOptions {
    double teleport = 0.15;
    std::size_t trials = 10;
    std::size_t max_sweeps = 100;
    std::size_t max_depth = 5;
    double min_improvement = 1e-10;
};

struct PartitionResult {
    std::vector<std::uint32_t> module_of;
    std::size_t module_count = 0;
    double codelength = 0.0;
    double unsplit_codelength = 0.0;  // single codebook, see unsplit_codelength()
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Greedy search over a set of units (original nodes or merged groups).
// Each unit carries aggregated flow; arcs between units carry summed flow.
class UnitOptimizer {
public:
    struct Unit {
        double visit = 0.0, tele_exit = 0.0, tele_in = 0.0;
        double out_total = 0.0;  // flow on arcs to other units
    };

    UnitOptimizer(std::vector<Unit> units, const std::vector<WeightedArc>& arcs, double node_entropy,
                  double parent_exit, std::vector<double>* trace)
        : units_(std::move(units)), node_entropy_(node_entropy), parent_exit_(parent_exit), trace_(trace) {
        const auto n = units_.size();
        out_.resize(n);
        in_.resize(n);
        for (const auto& a : arcs) {
            if (a.source == a.target || a.weight <= 0.0) continue;
            out_[a.source].emplace_back(a.target, a.weight);
            in_[a.target].emplace_back(a.source, a.weight);
        }
    }

    // Starts from `initial` (labels into 0..k-1) and moves single units.
    // Returns true if any unit moved.
    bool sweep_moves(std::vector<std::uint32_t>& module_of, std::mt19937_64& rng, std::size_t max_sweeps,
                     double min_improvement) {
        const auto n = units_.size();
        load(module_of);
        std::vector<std::uint32_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> to_mod(n, 0.0), from_mod(n, 0.0);
        std::vector<std::uint32_t> touched;
        bool moved_any = false;

        for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
            for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng() % k]);
            std::size_t moves = 0;
            for (auto v : order) {
                const auto cur = module_of_[v];
                touched.clear();
                auto touch = [&](std::uint32_t m) {
                    if (to_mod[m] == 0.0 && from_mod[m] == 0.0) touched.push_back(m);
                };
                for (auto [w, f] : out_[v]) {
                    const auto m = module_of_[w];
                    touch(m);
                    to_mod[m] += f;
                }
                for (auto [w, f] : in_[v]) {
                    const auto m = module_of_[w];
                    touch(m);
                    from_mod[m] += f;
                }

                const double base = codelength_;
                double best_delta = 0.0;
                std::uint32_t best = cur;
                auto consider = [&](std::uint32_t target) {
                    if (target == cur) return;
                    const double d = move_delta(v, cur, target, to_mod[cur], from_mod[cur], to_mod[target],
                                                from_mod[target]);
                    if (d < best_delta - min_improvement || (best != cur && d < best_delta && target < best)) {
                        best_delta = d;
                        best = target;
                    }
                };
                for (auto m : touched) consider(m);
                if (mods_[cur].units > 1 && !empty_.empty()) consider(empty_.back());

                if (best != cur && best_delta < -min_improvement) {
                    apply_move(v, cur, best, to_mod[cur], from_mod[cur], to_mod[best], from_mod[best]);
                    codelength_ = base + best_delta;
                    if (trace_) trace_->push_back(codelength_);
                    ++moves;
                    moved_any = true;
                }
                for (auto m : touched) to_mod[m] = from_mod[m] = 0.0;
                to_mod[cur] = from_mod[cur] = 0.0;
            }
            if (moves == 0) break;
        }
        module_of = compact(module_of_);
        return moved_any;
    }

    double codelength() const { return codelength_; }

    // Recomputes the codelength of the current assignment from scratch.
    double evaluate(const std::vector<std::uint32_t>& module_of) {
        load(module_of);
        return codelength_;
    }

private:
    static std::vector<std::uint32_t> compact(const std::vector<std::uint32_t>& labels) {
        std::vector<std::uint32_t> remap(labels.size() + 1, std::numeric_limits<std::uint32_t>::max());
        std::vector<std::uint32_t> out(labels.size());
        std::uint32_t next = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            auto& r = remap[labels[i]];
            if (r == std::numeric_limits<std::uint32_t>::max()) r = next++;
            out[i] = r;
        }
        return out;
    }

    void load(const std::vector<std::uint32_t>& module_of) {
        const auto n = units_.size();
        module_of_ = module_of;
        mods_.assign(n, ModuleStats{});
        for (std::uint32_t v = 0; v < n; ++v) {
            auto& m = mods_[module_of_[v]];
            m.visit += units_[v].visit;
            m.tele_exit += units_[v].tele_exit;
            m.tele_in += units_[v].tele_in;
            ++m.units;
        }
        for (std::uint32_t v = 0; v < n; ++v)
            for (auto [w, f] : out_[v])
                if (module_of_[v] != module_of_[w]) mods_[module_of_[v]].link_exit += f;
        empty_.clear();
        for (std::uint32_t m = static_cast<std::uint32_t>(n); m-- > 0;)
            if (mods_[m].units == 0) empty_.push_back(m);
        exit_total_ = parent_exit_;
        exit_terms_ = 0.0;
        module_terms_ = 0.0;
        for (const auto& m : mods_) {
            if (m.units == 0) continue;
            const double q = m.exit();
            exit_total_ += q;
            exit_terms_ += plogp(q);
            module_terms_ += plogp(q + m.visit);
        }
        codelength_ = total();
    }

    double total() const {
        return plogp(exit_total_) - plogp(parent_exit_) - 2.0 * exit_terms_ - node_entropy_ + module_terms_;
    }

    ModuleStats removed(std::uint32_t v, const ModuleStats& from, double to_own, double from_own) const {
        ModuleStats m = from;
        const auto& u = units_[v];
        m.visit -= u.visit;
        m.tele_exit -= u.tele_exit;
        m.tele_in -= u.tele_in;
        m.link_exit += -(u.out_total - to_own) + from_own;
        m.units -= 1;
        return m;
    }

    ModuleStats added(std::uint32_t v, const ModuleStats& to, double to_target, double from_target) const {
        ModuleStats m = to;
        const auto& u = units_[v];
        m.visit += u.visit;
        m.tele_exit += u.tele_exit;
        m.tele_in += u.tele_in;
        m.link_exit += (u.out_total - to_target) - from_target;
        m.units += 1;
        return m;
    }

    static double exit_of(const ModuleStats& m) { return m.units ? m.exit() : 0.0; }

    double move_delta(std::uint32_t v, std::uint32_t cur, std::uint32_t target, double to_cur, double from_cur,
                      double to_target, double from_target) const {
        const auto a_old = mods_[cur], b_old = mods_[target];
        const auto a_new = removed(v, a_old, to_cur, from_cur);
        const auto b_new = added(v, b_old, to_target, from_target);
        const double qa0 = exit_of(a_old), qb0 = exit_of(b_old), qa1 = exit_of(a_new), qb1 = exit_of(b_new);
        const double exit_total = exit_total_ - qa0 - qb0 + qa1 + qb1;
        const double exit_terms = exit_terms_ - plogp(qa0) - plogp(qb0) + plogp(qa1) + plogp(qb1);
        const double module_terms = module_terms_ - plogp(qa0 + a_old.visit) - plogp(qb0 + b_old.visit) +
                                    plogp(qa1 + a_new.visit) + plogp(qb1 + b_new.visit);
        return plogp(exit_total) - 2.0 * exit_terms + module_terms - (plogp(exit_total_) - 2.0 * exit_terms_ + module_terms_);
    }

    void apply_move(std::uint32_t v, std::uint32_t cur, std::uint32_t target, double to_cur, double from_cur,
                    double to_target, double from_target) {
        const auto a_old = mods_[cur], b_old = mods_[target];
        const bool target_was_empty = b_old.units == 0;
        mods_[cur] = removed(v, a_old, to_cur, from_cur);
        mods_[target] = added(v, b_old, to_target, from_target);
        const auto& a_new = mods_[cur];
        const auto& b_new = mods_[target];
        const double qa0 = exit_of(a_old), qb0 = exit_of(b_old), qa1 = exit_of(a_new), qb1 = exit_of(b_new);
        exit_total_ += -qa0 - qb0 + qa1 + qb1;
        exit_terms_ += -plogp(qa0) - plogp(qb0) + plogp(qa1) + plogp(qb1);
        module_terms_ += -plogp(qa0 + a_old.visit) - plogp(qb0 + b_old.visit) + plogp(qa1 + a_new.visit) +
                         plogp(qb1 + b_new.visit);
        module_of_[v] = target;
        if (target_was_empty) empty_.pop_back();
        if (mods_[cur].units == 0) {
            mods_[cur] = ModuleStats{};
            empty_.push_back(cur);
        }
    }

    std::vector<Unit> units_;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> out_, in_;
    double node_entropy_ = 0.0;
    double parent_exit_ = 0.0;  // included in exit_total_
    std::vector<double>* trace_ = nullptr;

    std::vector<std::uint32_t> module_of_;
    std::vector<ModuleStats> mods_;
    std::vector<std::uint32_t> empty_;
    double exit_total_ = 0.0, exit_terms_ = 0.0, module_terms_ = 0.0, codelength_ = 0.0;
};

// Units formed by grouping nodes by `group_of` (labels 0..k-1).
inline UnitOptimizer make_units(const FlowModel& flow, const std::vector<std::uint32_t>& group_of, std::size_t groups,
                                double node_entropy, std::vector<double>* trace) {
    std::vector<UnitOptimizer::Unit> units(groups);
    for (std::size_t i = 0; i < flow.node_count; ++i) {
        auto& u = units[group_of[i]];
        u.visit += flow.visit[i];
        u.tele_exit += flow.teleport_exit[i];
        u.tele_in += flow.teleport_target[i];
    }
    std::unordered_map<std::uint64_t, double> merged;
    for (const auto& a : flow.arc_flow) {
        const auto s = group_of[a.source], t = group_of[a.target];
        if (s == t) continue;
        units[s].out_total += a.weight;
        merged[(static_cast<std::uint64_t>(s) << 32) | t] += a.weight;
    }
    for (std::size_t i = 0; i < flow.external_out.size(); ++i) units[group_of[i]].out_total += flow.external_out[i];
    std::vector<WeightedArc> arcs;
    arcs.reserve(merged.size());
    for (const auto& [key, w] : merged)
        arcs.push_back({static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key & 0xffffffffu), w});
    // deterministic adjacency order regardless of hash layout
    std::sort(arcs.begin(), arcs.end(), [](const WeightedArc& x, const WeightedArc& y) {
        return x.source != y.source ? x.source < y.source : x.target < y.target;
    });
    return UnitOptimizer(std::move(units), arcs, node_entropy, flow.parent_exit, trace);
}

inline std::size_t label_count(const std::vector<std::uint32_t>& labels) {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

inline std::vector<std::uint32_t> compose(const std::vector<std::uint32_t>& node_to_unit,
                                          const std::vector<std::uint32_t>& unit_to_module) {
    std::vector<std::uint32_t> out(node_to_unit.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = unit_to_module[node_to_unit[i]];
    return out;
}

// Repeated local moving plus aggregation, starting from `partition`.
inline void aggregate_and_move(const FlowModel& flow, std::vector<std::uint32_t>& partition, double node_entropy,
                               std::mt19937_64& rng, const OptimizerOptions& opt, std::vector<double>* trace) {
    for (;;) {
        const auto groups = label_count(partition);
        auto opt_units = make_units(flow, partition, groups, node_entropy, trace);
        std::vector<std::uint32_t> unit_modules(groups);
        std::iota(unit_modules.begin(), unit_modules.end(), 0);
        const bool moved = opt_units.sweep_moves(unit_modules, rng, opt.max_sweeps, opt.min_improvement);
        partition = compose(partition, unit_modules);
        if (!moved || label_count(unit_modules) == groups) break;
    }
}

// One optimization run from singletons.
inline std::vector<std::uint32_t> optimize_once(const FlowModel& flow, double node_entropy, std::mt19937_64& rng,
                                                const OptimizerOptions& opt, std::vector<double>* trace) {
    const auto n = flow.node_count;
    std::vector<std::uint32_t> partition(n);
    std::iota(partition.begin(), partition.end(), 0);
    aggregate_and_move(flow, partition, node_entropy, rng, opt, trace);

    // Fine-tuning: let single nodes leave their modules, then merge modules
    // again, until the codelength stops improving.
    std::vector<std::uint32_t> identity(n);
    std::iota(identity.begin(), identity.end(), 0);
    auto nodes = make_units(flow, identity, n, node_entropy, trace);
    double best = nodes.evaluate(partition);
    for (int round = 0; round < 20; ++round) {
        auto candidate = partition;
        nodes.sweep_moves(candidate, rng, opt.max_sweeps, opt.min_improvement);
        aggregate_and_move(flow, candidate, node_entropy, rng, opt, trace);
        const double value = nodes.evaluate(candidate);
        if (value < best - opt.min_improvement) {
            best = value;
            partition = std::move(candidate);
        } else {
            break;
        }
    }
    return partition;
}

// Nodes carrying no flow (isolated inside an induced subgraph) join the
// module of a neighbour, or the largest module.
inline void absorb_flowless(const FlowModel& flow, std::vector<std::uint32_t>& partition) {
    const auto n = flow.node_count;
    std::vector<std::size_t> size(label_count(partition), 0);
    std::vector<double> mass(size.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        ++size[partition[i]];
        mass[partition[i]] += flow.visit[i];
    }
    std::uint32_t largest = 0;
    for (std::uint32_t m = 0; m < mass.size(); ++m)
        if (mass[m] > mass[largest]) largest = m;
    std::vector<std::uint32_t> neighbour(n, std::numeric_limits<std::uint32_t>::max());
    for (const auto& a : flow.arc_flow) {
        neighbour[a.source] = std::min(neighbour[a.source], a.target);
        neighbour[a.target] = std::min(neighbour[a.target], a.source);
    }
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (flow.visit[i] > 0.0 || mass[partition[i]] > 0.0) continue;
        const auto nb = neighbour[i];
        partition[i] = (nb != std::numeric_limits<std::uint32_t>::max() && flow.visit[nb] > 0.0) ? partition[nb] : largest;
        changed = true;
    }
    if (changed) {
        std::vector<std::uint32_t> remap(size.size(), std::numeric_limits<std::uint32_t>::max());
        std::uint32_t next = 0;
        for (auto& l : partition) {
            if (remap[l] == std::numeric_limits<std::uint32_t>::max()) remap[l] = next++;
            l = remap[l];
        }
    }
}

}  // namespace detail

// Best of `opt.trials` runs; ties keep the earliest trial. When `trace` is
// given it receives the running codelength after every accepted move.
inline PartitionResult optimize_partition(const FlowModel& flow, std::uint64_t seed, const OptimizerOptions& opt = {},
                                          std::vector<std::vector<double>>* trace = nullptr) {
    PartitionResult best;
    const auto n = flow.node_count;
    best.module_of.assign(n, 0);
    best.module_count = n ? 1 : 0;
    if (n == 0) return best;
    double node_entropy = 0.0;
    for (double p : flow.visit) node_entropy += detail::plogp(p);
    best.unsplit_codelength = unsplit_codelength(flow);
    best.codelength = map_equation_value(flow, best.module_of);

    for (std::size_t t = 0; t < std::max<std::size_t>(opt.trials, 1); ++t) {
        std::mt19937_64 rng(detail::splitmix64(seed ^ detail::splitmix64(t + 1)));
        std::vector<double>* run_trace = nullptr;
        if (trace) run_trace = &trace->emplace_back();
        auto partition = detail::optimize_once(flow, node_entropy, rng, opt, run_trace);
        detail::absorb_flowless(flow, partition);
        const double value = map_equation_value(flow, partition);
        if (value < best.codelength - opt.min_improvement) {
            best.codelength = value;
            best.module_of = std::move(partition);
        }
    }
    best.module_count = detail::label_count(best.module_of);
    return best;
}

// Modules of `partition` as units of a coarser search. A unit's weight is its
// module's exit rate, so that optimizing the two-level objective over these
// units measures the gain of grouping modules under a shared index codebook.
inline FlowModel module_flow(const FlowModel& flow, std::span<const std::uint32_t> module_of) {
    const auto k = module_of.empty() ? 0 : *std::max_element(module_of.begin(), module_of.end()) + 1;
    FlowModel m;
    m.node_count = k;
    m.teleport = flow.teleport;
    m.teleport_exit.assign(k, 0.0);
    m.teleport_target.assign(k, 0.0);
    std::vector<double> link_exit(k, 0.0);
    for (std::size_t i = 0; i < module_of.size(); ++i) {
        m.teleport_exit[module_of[i]] += flow.teleport_exit[i];
        m.teleport_target[module_of[i]] += flow.teleport_target[i];
    }
    std::map<std::pair<std::uint32_t, std::uint32_t>, double> between;
    for (const auto& a : flow.arc_flow) {
        const auto s = module_of[a.source], t = module_of[a.target];
        if (s == t) continue;
        link_exit[s] += a.weight;
        between[{s, t}] += a.weight;
    }
    for (std::size_t i = 0; i < flow.external_out.size(); ++i) link_exit[module_of[i]] += flow.external_out[i];
    m.visit.resize(k);
    for (std::size_t x = 0; x < k; ++x) m.visit[x] = m.teleport_exit[x] * (1.0 - m.teleport_target[x]) + link_exit[x];
    for (const auto& [key, w] : between) m.arc_flow.push_back({key.first, key.second, w});
    return m;
}

// ---------------------------------------------------------------------------
// hierarchy

struct Community {
    std::size_t level = 0;  // root is level 0, top communities level 1
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
    std::vector<NodeIndex> members;  // sorted
    bool irreducible = false;
    double codelength = 0.0;  // description length of the community's chosen codebook structure, one level deep
};

struct CommunityTree {
    std::size_t node_count = 0;
    std::vector<Community> communities;  // [0] is the root, parents precede children

    const Community& root() const { return communities.front(); }

    std::size_t depth() const {
        std::size_t d = 0;
        for (const auto& c : communities) d = std::max(d, c.level);
        return d;
    }

    // Per node, the index of its irreducible community.
    std::vector<std::size_t> irreducible_of() const {
        std::vector<std::size_t> out(node_count, 0);
        for (std::size_t c = 0; c < communities.size(); ++c)
            if (communities[c].irreducible)
                for (auto v : communities[c].members) out[v] = c;
        return out;
    }

    // Per node, the community index at `level` (or nullopt when the node's
    // irreducible community sits above that level).
    std::vector<std::optional<std::size_t>> at_level(std::size_t level) const {
        std::vector<std::optional<std::size_t>> out(node_count);
        for (std::size_t c = 0; c < communities.size(); ++c)
            if (communities[c].level == level)
                for (auto v : communities[c].members) out[v] = c;
        return out;
    }
};

// The whole network is split with the two-level objective; the resulting
// modules are then grouped into coarser layers while a deeper shared index
// shortens the description, which sets the top levels. Every community below
// that is re-optimized on its own nodes, keeping the network-wide flow, and
// split while a nested codebook for its sub-communities is shorter than its
// single codebook, down to `opt.max_depth` levels.
inline CommunityTree detect_communities(const FlowNetwork& net, std::uint64_t seed, const OptimizerOptions& opt = {}) {
    if (net.empty()) throw UsageError("community detection on an empty network");
    const auto global = compute_flow(frequency_graph(net), opt.teleport);
    CommunityTree tree;
    tree.node_count = net.node_count();

    auto add_children = [&](std::size_t parent, std::vector<std::vector<NodeIndex>> parts) {
        std::sort(parts.begin(), parts.end(), [](const auto& a, const auto& b) {
            return a.size() != b.size() ? a.size() > b.size() : a.front() < b.front();
        });
        for (auto& p : parts) {
            Community child;
            child.level = tree.communities[parent].level + 1;
            child.parent = parent;
            child.members = std::move(p);
            tree.communities[parent].children.push_back(tree.communities.size());
            tree.communities.push_back(std::move(child));
        }
    };
    auto group_nodes = [](std::span<const NodeIndex> members, const std::vector<std::uint32_t>& label) {
        std::vector<std::vector<NodeIndex>> parts(detail::label_count(label));
        for (std::size_t k = 0; k < members.size(); ++k) parts[label[k]].push_back(members[k]);
        return parts;
    };

    Community root;
    root.members.resize(net.node_count());
    std::iota(root.members.begin(), root.members.end(), 0);
    tree.communities.push_back(std::move(root));

    // top split plus coarser layers; layers[0] maps nodes to modules, each
    // later layer maps the previous layer's groups to coarser groups
    std::vector<std::vector<std::uint32_t>> layers;
    const auto top = optimize_partition(global, detail::splitmix64(seed), opt);
    const bool top_split = top.module_count > 1 && top.codelength < top.unsplit_codelength - opt.min_improvement;
    tree.communities[0].codelength = top_split ? top.codelength : top.unsplit_codelength;
    if (top_split) {
        layers.push_back(top.module_of);
        auto units = module_flow(global, top.module_of);
        while (layers.size() + 1 < opt.max_depth && units.node_count > 2) {
            const auto coarse = optimize_partition(units, detail::splitmix64(seed + layers.size() + 0x5eed), opt);
            if (coarse.module_count < 2 || coarse.module_count >= units.node_count ||
                coarse.codelength >= coarse.unsplit_codelength - opt.min_improvement)
                break;
            layers.push_back(coarse.module_of);
            units = module_flow(units, coarse.module_of);
        }
    } else {
        layers.push_back(std::vector<std::uint32_t>(net.node_count(), 0));
    }

    // node -> group at each layer
    std::vector<std::vector<std::uint32_t>> node_group(layers.size());
    node_group[0] = layers[0];
    for (std::size_t l = 1; l < layers.size(); ++l) {
        node_group[l].resize(net.node_count());
        for (std::size_t v = 0; v < net.node_count(); ++v) node_group[l][v] = layers[l][node_group[l - 1][v]];
    }
    // build the fixed top levels, coarsest first
    std::vector<std::size_t> frontier{0};
    for (std::size_t l = layers.size(); l-- > 0;) {
        std::vector<std::size_t> next;
        for (auto c : frontier) {
            const auto members = tree.communities[c].members;
            std::vector<std::uint32_t> label(members.size());
            std::map<std::uint32_t, std::uint32_t> dense;
            for (std::size_t k = 0; k < members.size(); ++k)
                label[k] = dense.emplace(node_group[l][members[k]], static_cast<std::uint32_t>(dense.size())).first->second;
            const auto first = tree.communities.size();
            add_children(c, group_nodes(members, label));
            for (auto k = first; k < tree.communities.size(); ++k) next.push_back(k);
        }
        frontier = std::move(next);
    }

    // recursive refinement below the fixed levels; appended communities are
    // visited by the same loop
    std::vector<bool> fixed_inner(tree.communities.size(), false);
    for (std::size_t c = 0; c < tree.communities.size(); ++c)
        if (!tree.communities[c].children.empty()) fixed_inner[c] = true;
    for (std::size_t c = 1; c < tree.communities.size(); ++c) {
        if (c < fixed_inner.size() && fixed_inner[c]) continue;
        const auto level = tree.communities[c].level;
        const auto members = tree.communities[c].members;
        if (level >= opt.max_depth || members.size() < 2) {
            tree.communities[c].irreducible = true;
            continue;
        }
        const auto result = optimize_partition(restrict_flow(global, members), detail::splitmix64(seed + c), opt);
        const bool split = result.module_count > 1 &&
                           result.codelength < result.unsplit_codelength - opt.min_improvement;
        tree.communities[c].codelength = split ? result.codelength : result.unsplit_codelength;
        if (!split) {
            tree.communities[c].irreducible = true;
            continue;
        }
        add_children(c, group_nodes(members, result.module_of));
    }
    return tree;
}

struct LevelRow {
    std::size_t level = 0;
    std::size_t communities = 0;
    std::size_t irreducible = 0;
    std::size_t accounts = 0;  // members of the irreducible communities at this level
    double ratio = 0.0;        // accounts / N
};

struct CommunityReport {
    std::vector<LevelRow> levels;
    std::size_t total_irreducible = 0;
    std::size_t total_accounts = 0;
    // (rank, size) over irreducible communities, rank 1 = largest
    std::vector<std::pair<std::size_t, std::size_t>> size_rank;
};

inline CommunityReport community_report(const CommunityTree& tree) {
    CommunityReport rep;
    const auto depth = tree.depth();
    rep.levels.resize(depth);
    for (std::size_t l = 0; l < depth; ++l) rep.levels[l].level = l + 1;
    std::vector<std::size_t> sizes;
    for (const auto& c : tree.communities) {
        if (c.level == 0) continue;
        auto& row = rep.levels[c.level - 1];
        ++row.communities;
        if (c.irreducible) {
            ++row.irreducible;
            row.accounts += c.members.size();
            sizes.push_back(c.members.size());
        }
    }
    for (auto& row : rep.levels) {
        row.ratio = tree.node_count ? static_cast<double>(row.accounts) / static_cast<double>(tree.node_count) : 0.0;
        rep.total_irreducible += row.irreducible;
        rep.total_accounts += row.accounts;
    }
    std::sort(sizes.begin(), sizes.end(), std::greater<>());
    for (std::size_t r = 0; r < sizes.size(); ++r) rep.size_rank.emplace_back(r + 1, sizes[r]);
    return rep;
}

}  // namespace flownet
