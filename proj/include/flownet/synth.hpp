#pragma once

// Synthetic transfer logs with planted structure: a walnut-shaped bowtie,
// heavy-tailed out-degrees, periodic transfers, city clusters, community
// blocks and an optional hub sending from one city to the rest of the region.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "flownet/bowtie.hpp"
#include "flownet/error.hpp"
#include "flownet/ingest.hpp"
#include "flownet/text.hpp"

namespace flownet {

struct WalnutShares {
    double gscc = 0.382;
    double in = 0.149;
    double out = 0.373;
    double te = 0.096;
    // the remainder lies outside the giant weak component
};

struct CitySpec {
    GeoCoord center;
    double spread_km = 3.0;  // standard deviation of each coordinate offset
    double share = 0.1;      // fraction of all accounts
};

struct HubSpec {
    bool enabled = false;
    std::size_t city = 0;         // index into ScenarioSpec::cities
    std::size_t accounts = 4;
    std::size_t out_degree = 400; // links per hub account
    double radius_km = 1.0;       // hub accounts sit this close to the city center
};

struct Region {
    double lat_min = 35.6, lat_max = 36.4;
    double lon_min = 137.6, lon_max = 138.6;
};

struct ScenarioSpec {
    std::size_t nodes = 5000;
    WalnutShares walnut;
    double direct_share = 0.97;     // IN/OUT accounts wired straight to/from the core
    double degree_exponent = 2.5;   // tail exponent of the planted out-degree CCDF
    double min_out_degree = 2.0;
    double monthly_share = 0.05;    // links with one transfer per month
    double biweekly_share = 0.02;   // links with two transfers per month
    double mean_other_frequency = 3.0;
    double amount_log_mean = 12.2;  // ln yen
    double amount_log_sd = 2.0;
    std::vector<CitySpec> cities;   // empty: no coordinates are emitted
    Region region;                  // scattered accounts are uniform here
    std::size_t blocks = 1;         // community blocks when there are no cities
    double block_affinity = 0.85;   // chance a link stays inside its block
    HubSpec hub;
    double noise_share = 0.02;      // extra records with households or other banks
    double self_loop_share = 0.005; // extra firm self-transfers
    std::uint64_t seed = 1;
};

// Six compact cities with the first one largest, plus a hub in it.
inline ScenarioSpec regional_scenario(std::size_t nodes, std::uint64_t seed) {
    ScenarioSpec s;
    s.nodes = nodes;
    s.seed = seed;
    s.cities = {
        {{36.20, 137.80}, 1.0, 0.20}, {{36.25, 138.40}, 1.0, 0.13}, {{35.80, 138.45}, 1.0, 0.13},
        {{35.75, 137.80}, 1.0, 0.13}, {{36.00, 138.10}, 1.0, 0.13}, {{35.70, 138.12}, 1.0, 0.13},
    };
    s.block_affinity = 0.9;
    s.hub.enabled = true;
    return s;
}

// 29 months: 2017-03 through 2019-07
inline constexpr int window_months = 29;

inline Timestamp window_start() {
    using namespace std::chrono;
    return sys_days{year{2017} / March / 1};
}

inline Timestamp window_end() {
    using namespace std::chrono;
    return sys_days{year{2019} / August / 1} - seconds{1};
}

struct GroundTruth {
    std::vector<std::string> ids;  // ascending, so position = node index after ingest
    std::vector<BowtieComponent> walnut;
    std::vector<std::int32_t> block;  // -1 for scattered accounts, which have no block affinity
    std::vector<std::int32_t> city;  // -1 for scattered accounts
    std::vector<std::optional<GeoCoord>> coord;
    std::vector<bool> hub;
    std::vector<bool> direct;  // IN/OUT account with a link straight to/from the core
    std::size_t link_count = 0;

    std::size_t count(BowtieComponent c) const {
        return static_cast<std::size_t>(std::count(walnut.begin(), walnut.end(), c));
    }
};

struct Scenario {
    std::vector<TransferRecord> records;
    GroundTruth truth;
};

// Field-level validation; throws UsageError naming the offending field.
inline void validate(const ScenarioSpec& s) {
    auto share = [](double v, const char* field) {
        if (!(v >= 0.0 && v <= 1.0)) throw UsageError(std::string(field) + " must lie in [0, 1]");
    };
    share(s.walnut.gscc, "walnut.gscc");
    share(s.walnut.in, "walnut.in");
    share(s.walnut.out, "walnut.out");
    share(s.walnut.te, "walnut.te");
    if (s.walnut.gscc + s.walnut.in + s.walnut.out + s.walnut.te > 1.0 + 1e-12)
        throw UsageError("walnut shares sum above 1");
    share(s.direct_share, "direct_share");
    share(s.monthly_share, "monthly_share");
    share(s.biweekly_share, "biweekly_share");
    if (s.monthly_share + s.biweekly_share > 1.0 + 1e-12) throw UsageError("periodic shares sum above 1");
    share(s.block_affinity, "block_affinity");
    share(s.noise_share, "noise_share");
    share(s.self_loop_share, "self_loop_share");
    if (!(s.degree_exponent > 0.0)) throw UsageError("degree_exponent must be positive");
    if (!(s.min_out_degree >= 1.0)) throw UsageError("min_out_degree must be at least 1");
    if (!(s.mean_other_frequency >= 1.0)) throw UsageError("mean_other_frequency must be at least 1");
    if (!(s.amount_log_sd >= 0.0)) throw UsageError("amount_log_sd must be non-negative");
    if (s.nodes < 2) throw UsageError("nodes must be at least 2");
    if (s.cities.empty() && s.blocks < 1) throw UsageError("blocks must be at least 1");
    double city_total = 0;
    for (const auto& c : s.cities) {
        share(c.share, "cities.share");
        if (!(c.spread_km > 0.0)) throw UsageError("cities.spread_km must be positive");
        city_total += c.share;
    }
    if (city_total > 1.0 + 1e-12) throw UsageError("city shares sum above 1");
    if (!(s.region.lat_max > s.region.lat_min && s.region.lon_max > s.region.lon_min))
        throw UsageError("region bounds are empty");
    if (s.hub.enabled) {
        if (s.hub.city >= s.cities.size()) throw UsageError("hub.city does not name a city");
        if (s.hub.accounts < 1) throw UsageError("hub.accounts must be at least 1");
    }
}

namespace detail {

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}

    double uniform() { return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53; }  // (0, 1)
    std::uint64_t below(std::uint64_t n) { return n ? rng_() % n : 0; }
    bool chance(double p) { return uniform() < p; }

    double normal() {
        if (spare_) {
            const double v = *spare_;
            spare_.reset();
            return v;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform())), a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        return r * std::cos(a);
    }

    // P(X >= x) = (x / xmin)^-alpha
    double pareto(double xmin, double alpha) { return xmin * std::pow(uniform(), -1.0 / alpha); }

    // 1 + geometric number of failures, mean `mean`
    std::int64_t geometric(double mean) {
        if (mean <= 1.0) return 1;
        const double q = 1.0 - 1.0 / mean;
        return 1 + static_cast<std::int64_t>(std::floor(std::log(uniform()) / std::log(q)));
    }

private:
    std::mt19937_64 rng_;
    std::optional<double> spare_;
};

// Weighted pick from a fixed node list.
struct Pool {
    std::vector<std::uint32_t> nodes;
    std::vector<double> cumulative;

    void add(std::uint32_t v, double w) {
        nodes.push_back(v);
        cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + w);
    }
    bool empty() const { return nodes.empty(); }
    std::uint32_t pick(Sampler& s) const {
        const double x = s.uniform() * cumulative.back();
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
        if (it == cumulative.end()) --it;
        return nodes[static_cast<std::size_t>(it - cumulative.begin())];
    }
};

enum class Cadence { monthly, biweekly, other };

struct PlannedLink {
    std::uint32_t source;
    std::uint32_t destination;
    Cadence cadence;
};

inline GeoCoord offset_km(GeoCoord c, double east_km, double north_km) {
    const double km_per_deg = std::numbers::pi / 180.0 * 6371.0;
    return {c.lat + north_km / km_per_deg, c.lon + east_km / (km_per_deg * std::cos(c.lat * std::numbers::pi / 180.0))};
}

// Integer counts summing to n, closest to share * n (largest remainder; ties
// go to the earlier share).
inline std::array<std::size_t, 5> apportion(const double (&shares)[5], std::size_t n) {
    double total = 0;
    for (double x : shares) total += x;
    std::array<std::size_t, 5> out{};
    std::array<double, 5> frac{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 5; ++k) {
        const double exact = total > 0 ? shares[k] / total * static_cast<double>(n) : 0.0;
        out[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        frac[k] = exact - static_cast<double>(out[k]);
        assigned += out[k];
    }
    std::array<std::size_t, 5> order{0, 1, 2, 3, 4};
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < n; k = (k + 1) % 5, ++assigned) ++out[order[k]];
    return out;
}

}  // namespace detail

// Planted links and ground truth, before expansion into transfers.
struct PlannedScenario {
    GroundTruth truth;
    std::vector<detail::PlannedLink> links;
};

inline PlannedScenario plan_scenario(const ScenarioSpec& spec) {
    validate(spec);
    using C = BowtieComponent;
    const std::size_t n = spec.nodes;
    detail::Sampler rng(spec.seed);

    // class sizes by largest remainder; the remainder of the shares is outside
    const double shares[5] = {spec.walnut.gscc, spec.walnut.in, spec.walnut.out, spec.walnut.te,
                              std::max(0.0, 1.0 - spec.walnut.gscc - spec.walnut.in - spec.walnut.out - spec.walnut.te)};
    const auto sizes = detail::apportion(shares, n);
    const std::size_t n_gscc = sizes[0], n_in = sizes[1], n_out = sizes[2], n_te = sizes[3];
    const std::size_t n_outside = sizes[4];
    if (n_gscc < 2 && n_gscc + n_in + n_out + n_te > 0)
        throw UsageError("walnut.gscc leaves fewer than two core accounts to form a cycle");
    if (n_te > 0 && n_in == 0 && n_out == 0) throw UsageError("walnut.te needs an IN or OUT component to attach to");
    if (n_outside == 1) throw UsageError("a single account outside the giant component cannot carry a link");
    if (n_outside > 0 && n_outside >= n_gscc + n_in + n_out + n_te)
        throw UsageError("accounts outside the giant component outnumber it");
    if (spec.hub.enabled && spec.hub.accounts > n_gscc) throw UsageError("hub.accounts exceeds the core size");

    PlannedScenario out;
    auto& t = out.truth;
    t.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "F%07zu", i + 1);
        t.ids[i] = buf;
    }
    // classes over a random permutation of the accounts
    std::vector<C> label;
    label.insert(label.end(), n_gscc, C::gscc);
    label.insert(label.end(), n_in, C::in);
    label.insert(label.end(), n_out, C::out);
    label.insert(label.end(), n_te, C::te);
    label.insert(label.end(), n_outside, C::outside_gwcc);
    for (std::size_t k = n; k > 1; --k) std::swap(label[k - 1], label[rng.below(k)]);
    t.walnut = label;

    // geography and blocks
    const bool geo = !spec.cities.empty();
    t.city.assign(n, -1);
    t.coord.assign(n, std::nullopt);
    t.block.assign(n, 0);
    t.hub.assign(n, false);
    t.direct.assign(n, false);
    const std::size_t n_blocks = geo ? spec.cities.size() : spec.blocks;
    std::vector<bool> scattered(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (geo) {
            double x = rng.uniform(), acc = 0;
            for (std::size_t c = 0; c < spec.cities.size(); ++c) {
                acc += spec.cities[c].share;
                if (x < acc) {
                    t.city[i] = static_cast<std::int32_t>(c);
                    break;
                }
            }
            if (t.city[i] >= 0) {
                const auto& c = spec.cities[static_cast<std::size_t>(t.city[i])];
                const double e = rng.normal() * c.spread_km, nn = rng.normal() * c.spread_km;
                t.coord[i] = detail::offset_km(c.center, e, nn);
                t.block[i] = t.city[i];
            } else {
                scattered[i] = true;
                t.coord[i] = GeoCoord{spec.region.lat_min + rng.uniform() * (spec.region.lat_max - spec.region.lat_min),
                                      spec.region.lon_min + rng.uniform() * (spec.region.lon_max - spec.region.lon_min)};
                t.block[i] = -1;
            }
        } else {
            t.block[i] = static_cast<std::int32_t>(rng.below(n_blocks));
        }
    }

    // budgets: heavy-tailed out-degree and in-attractiveness
    std::vector<double> in_weight(n);
    std::vector<std::size_t> budget(n);
    const std::size_t cap = std::max<std::size_t>(1, n / 4);
    for (std::size_t i = 0; i < n; ++i) {
        budget[i] = std::min(cap, static_cast<std::size_t>(rng.pareto(spec.min_out_degree, spec.degree_exponent)));
        in_weight[i] = rng.pareto(1.0, spec.degree_exponent);
    }

    std::vector<std::vector<std::uint32_t>> members(5);
    for (std::uint32_t i = 0; i < n; ++i) members[static_cast<int>(label[i])].push_back(i);
    const auto& core = members[static_cast<int>(C::gscc)];
    const auto& ins = members[static_cast<int>(C::in)];
    const auto& outs = members[static_cast<int>(C::out)];
    const auto& tes = members[static_cast<int>(C::te)];
    const auto& outside = members[static_cast<int>(C::outside_gwcc)];

    std::unordered_set<std::uint64_t> seen;
    std::vector<std::size_t> used(n, 0);
    auto cadence = [&]() {
        const double x = rng.uniform();
        if (x < spec.monthly_share) return detail::Cadence::monthly;
        if (x < spec.monthly_share + spec.biweekly_share) return detail::Cadence::biweekly;
        return detail::Cadence::other;
    };
    auto link = [&](std::uint32_t s, std::uint32_t d, std::optional<detail::Cadence> c = std::nullopt) {
        if (s == d || !seen.insert((static_cast<std::uint64_t>(s) << 32) | d).second) return false;
        out.links.push_back({s, d, c ? *c : cadence()});
        ++used[s];
        return true;
    };

    // core: one cycle through every core account, ordered by block so
    // that most cycle links stay inside a block
    std::vector<std::uint32_t> ring = core;
    std::stable_sort(ring.begin(), ring.end(), [&](auto a, auto b) { return t.block[a] < t.block[b]; });
    for (std::size_t k = 0; k < ring.size() && ring.size() >= 2; ++k) link(ring[k], ring[(k + 1) % ring.size()]);

    // pools of allowed targets per source class, overall and per block
    auto make_pools = [&](std::initializer_list<C> classes) {
        std::vector<detail::Pool> pools(n_blocks + 1);
        for (auto c : classes)
            for (auto v : members[static_cast<int>(c)]) {
                if (t.block[v] >= 0) pools[static_cast<std::size_t>(t.block[v])].add(v, in_weight[v]);
                pools[n_blocks].add(v, in_weight[v]);
            }
        return pools;
    };
    const auto to_core = make_pools({C::gscc});
    const auto from_core = make_pools({C::gscc, C::out});
    const auto from_in = make_pools({C::gscc, C::in, C::out});
    const auto from_out = make_pools({C::out});
    const auto from_te = make_pools({C::te, C::out});
    auto pick = [&](const std::vector<detail::Pool>& pools, std::uint32_t source) -> std::optional<std::uint32_t> {
        const bool local = !scattered[source] && rng.chance(spec.block_affinity);
        const auto& own = pools[static_cast<std::size_t>(local ? t.block[source] : static_cast<std::int32_t>(n_blocks))];
        const auto& p = !own.empty() ? own : pools[n_blocks];
        if (p.empty()) return std::nullopt;
        return p.pick(rng);
    };

    // a core source drawn by remaining budget, so attachments do not add
    // degree beyond the planted sequence where avoidable
    detail::Pool core_by_budget;
    for (auto v : core) core_by_budget.add(v, static_cast<double>(budget[v]));

    // IN: a link into the core, or into an IN account that has one
    std::vector<std::uint32_t> direct_in, late_in;
    for (auto v : ins) (rng.chance(spec.direct_share) ? direct_in : late_in).push_back(v);
    if (direct_in.empty() && !late_in.empty()) {
        direct_in.push_back(late_in.back());
        late_in.pop_back();
    }
    for (auto v : direct_in) {
        for (int tries = 0; tries < 20; ++tries)
            if (auto d = pick(to_core, v); d && link(v, *d)) break;
        t.direct[v] = true;
    }
    for (auto v : late_in) link(v, direct_in[rng.below(direct_in.size())]);

    // OUT: a link from the core, or from an OUT account that has one
    std::vector<std::uint32_t> direct_out, late_out;
    for (auto v : outs) (rng.chance(spec.direct_share) ? direct_out : late_out).push_back(v);
    if (direct_out.empty() && !late_out.empty()) {
        direct_out.push_back(late_out.back());
        late_out.pop_back();
    }
    for (auto v : direct_out) {
        for (int tries = 0; tries < 20; ++tries) {
            std::uint32_t s = core_by_budget.pick(rng);
            if (!scattered[v] && rng.chance(spec.block_affinity)) {
                // prefer a core account of the same block
                const auto& same = to_core[static_cast<std::size_t>(t.block[v])];
                if (!same.empty()) s = same.pick(rng);
            }
            if (link(s, v)) break;
        }
        t.direct[v] = true;
    }
    for (auto v : late_out) link(direct_out[rng.below(direct_out.size())], v);

    // TE: hangs off IN or feeds OUT
    for (auto v : tes) {
        const bool from_in_side = !ins.empty() && (outs.empty() || rng.chance(0.5));
        if (from_in_side) link(ins[rng.below(ins.size())], v);
        else link(v, outs[rng.below(outs.size())]);
    }

    // outside: chains of two or three accounts
    for (std::size_t k = 0; k < outside.size();) {
        const std::size_t len = (outside.size() - k == 3) ? 3 : 2;
        for (std::size_t j = 0; j + 1 < len; ++j) link(outside[k + j], outside[k + j + 1]);
        k += len;
    }

    // remaining out-degree budget
    for (std::uint32_t v = 0; v < n; ++v) {
        const std::vector<detail::Pool>* pools = nullptr;
        switch (label[v]) {
        case C::gscc: pools = &from_core; break;
        case C::in: pools = &from_in; break;
        case C::out: pools = &from_out; break;
        case C::te: pools = &from_te; break;
        default: break;
        }
        if (!pools) continue;
        for (int misses = 0; used[v] < budget[v] && misses < 50;) {
            const auto d = pick(*pools, v);
            if (!d || !link(v, *d)) ++misses;
        }
    }

    // hub: core accounts moved to the hub city's center, paying monthly to
    // accounts outside that city
    if (spec.hub.enabled) {
        const auto& hub_city = spec.cities[spec.hub.city];
        std::vector<std::uint32_t> candidates;
        for (auto v : core)
            if (t.city[v] == static_cast<std::int32_t>(spec.hub.city)) candidates.push_back(v);
        if (candidates.size() < spec.hub.accounts) candidates = core;
        std::vector<std::uint32_t> targets;
        for (std::uint32_t v = 0; v < n; ++v)
            if ((label[v] == C::gscc || label[v] == C::out) && t.city[v] != static_cast<std::int32_t>(spec.hub.city))
                targets.push_back(v);
        for (std::size_t h = 0; h < spec.hub.accounts; ++h) {
            const auto v = candidates[h * candidates.size() / spec.hub.accounts];
            t.hub[v] = true;
            t.city[v] = static_cast<std::int32_t>(spec.hub.city);
            t.block[v] = static_cast<std::int32_t>(spec.hub.city);
            const double r = hub_city.spread_km > 0 ? spec.hub.radius_km : 0.0;
            t.coord[v] = detail::offset_km(hub_city.center, r * (2 * rng.uniform() - 1) / std::numbers::sqrt2,
                                           r * (2 * rng.uniform() - 1) / std::numbers::sqrt2);
            if (targets.empty()) continue;
            for (std::size_t k = 0; k < spec.hub.out_degree; ++k)
                link(v, targets[rng.below(targets.size())], detail::Cadence::monthly);
        }
    }
    t.link_count = out.links.size();
    return out;
}

namespace detail {

inline std::int64_t draw_amount(Sampler& rng, double log_scale, double jitter) {
    const double a = std::exp(log_scale + jitter * rng.normal());
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(std::min(a, 1e15))));
}

inline Timestamp month_day(int month_offset, int day, std::chrono::seconds time_of_day) {
    using namespace std::chrono;
    const auto ym = year_month{year{2017}, March} + months{month_offset};
    return sys_days{ym / std::chrono::day{static_cast<unsigned>(day)}} + time_of_day;
}

}  // namespace detail

// Expands planned links into time-ordered transfer records and adds records
// that the default filters drop.
inline Scenario generate(const ScenarioSpec& spec) {
    auto planned = plan_scenario(spec);
    Scenario sc;
    sc.truth = std::move(planned.truth);
    const auto& t = sc.truth;
    detail::Sampler rng(spec.seed ^ 0x7f4a7c159e3779b9ULL);
    using std::chrono::seconds;
    const auto start = window_start();
    const auto span = (window_end() - start).count() + 1;

    auto record = [&](std::uint32_t s, std::uint32_t d, Timestamp when, std::int64_t amount) {
        TransferRecord r;
        r.timestamp = when;
        r.source = t.ids[s];
        r.destination = t.ids[d];
        r.amount = amount;
        r.source_coord = t.coord[s];
        r.destination_coord = t.coord[d];
        sc.records.push_back(std::move(r));
    };

    for (const auto& l : planned.links) {
        const double log_scale = spec.amount_log_mean + spec.amount_log_sd * rng.normal();
        const seconds at{9 * 3600 + static_cast<std::int64_t>(rng.below(6 * 3600))};
        switch (l.cadence) {
        case detail::Cadence::monthly: {
            const int day = 1 + static_cast<int>(rng.below(28));
            const auto amount = detail::draw_amount(rng, log_scale, 0.0);
            for (int m = 0; m < window_months; ++m) record(l.source, l.destination, detail::month_day(m, day, at), amount);
            break;
        }
        case detail::Cadence::biweekly: {
            const int day = 1 + static_cast<int>(rng.below(14));
            const auto amount = detail::draw_amount(rng, log_scale, 0.0);
            for (int m = 0; m < window_months; ++m) {
                record(l.source, l.destination, detail::month_day(m, day, at), amount);
                record(l.source, l.destination, detail::month_day(m, day + 14, at), amount);
            }
            break;
        }
        case detail::Cadence::other: {
            const auto g = rng.geometric(spec.mean_other_frequency);
            for (std::int64_t k = 0; k < g; ++k)
                record(l.source, l.destination, start + seconds{static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span)))},
                       detail::draw_amount(rng, log_scale, 0.5));
            break;
        }
        }
    }

    // records the default filters remove
    const std::size_t base = sc.records.size();
    const auto n_noise = static_cast<std::size_t>(std::llround(spec.noise_share * static_cast<double>(base)));
    const auto n_loops = static_cast<std::size_t>(std::llround(spec.self_loop_share * static_cast<double>(base)));
    const std::size_t n = t.ids.size();
    for (std::size_t k = 0; k < n_noise; ++k) {
        TransferRecord r;
        r.timestamp = start + seconds{static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span)))};
        const auto firm = static_cast<std::uint32_t>(rng.below(n));
        const bool household = rng.chance(0.5);
        char buf[32];
        std::snprintf(buf, sizeof buf, household ? "H%07llu" : "X%07llu",
                      static_cast<unsigned long long>(1 + rng.below(n)));
        const bool outgoing = rng.chance(0.5);
        r.source = outgoing ? t.ids[firm] : buf;
        r.destination = outgoing ? buf : t.ids[firm];
        const auto other_kind = household ? PartyKind::household : PartyKind::external;
        r.source_kind = outgoing ? PartyKind::firm : other_kind;
        r.destination_kind = outgoing ? other_kind : PartyKind::firm;
        r.amount = detail::draw_amount(rng, spec.amount_log_mean, spec.amount_log_sd);
        if (outgoing) r.source_coord = t.coord[firm];
        else r.destination_coord = t.coord[firm];
        sc.records.push_back(std::move(r));
    }
    for (std::size_t k = 0; k < n_loops; ++k) {
        const auto firm = static_cast<std::uint32_t>(rng.below(n));
        record(firm, firm, start + seconds{static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span)))},
               detail::draw_amount(rng, spec.amount_log_mean, spec.amount_log_sd));
    }

    std::stable_sort(sc.records.begin(), sc.records.end(),
                     [](const TransferRecord& a, const TransferRecord& b) { return a.timestamp < b.timestamp; });
    return sc;
}

inline void write_log(std::ostream& out, const std::vector<TransferRecord>& records) {
    write_log_header(out);
    for (const auto& r : records) write_record(out, r);
}

inline nlohmann::ordered_json ground_truth_json(const ScenarioSpec& spec, const GroundTruth& t) {
    using json = nlohmann::ordered_json;
    json j;
    j["seed"] = spec.seed;
    j["nodes"] = t.ids.size();
    j["links"] = t.link_count;
    json counts;
    for (auto c : {BowtieComponent::gscc, BowtieComponent::in, BowtieComponent::out, BowtieComponent::te,
                   BowtieComponent::outside_gwcc})
        counts[std::string(to_string(c))] = t.count(c);
    j["walnut_counts"] = counts;
    json cities = json::array();
    for (std::size_t c = 0; c < spec.cities.size(); ++c)
        cities.push_back({{"index", c},
                          {"lat", spec.cities[c].center.lat},
                          {"lon", spec.cities[c].center.lon},
                          {"spread_km", spec.cities[c].spread_km},
                          {"share", spec.cities[c].share}});
    j["cities"] = cities;
    // expected factor structure: one local factor per city, plus a hub
    // factor localized at the hub city on the source side only
    json factors = json::array();
    for (std::size_t c = 0; c < spec.cities.size(); ++c)
        factors.push_back({{"kind", "local"}, {"source_city", c}, {"destination_city", c}});
    if (spec.hub.enabled)
        factors.push_back({{"kind", "hub"}, {"source_city", spec.hub.city}, {"destination_city", nullptr}});
    j["factors"] = factors;
    json accounts = json::array();
    for (std::size_t i = 0; i < t.ids.size(); ++i) {
        json a{{"id", t.ids[i]},
               {"walnut", std::string(to_string(t.walnut[i]))},
               {"block", t.block[i]},
               {"city", t.city[i]},
               {"hub", static_cast<bool>(t.hub[i])}};
        if (t.coord[i]) {
            a["lat"] = t.coord[i]->lat;
            a["lon"] = t.coord[i]->lon;
        }
        accounts.push_back(std::move(a));
    }
    j["accounts"] = accounts;
    return j;
}

}  // namespace flownet
