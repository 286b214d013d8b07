#pragma once

// Geographic origin-destination binning and non-negative matrix factorization.
//
// Cells of a K x K grid are indexed m = p + q K (0-based), p counting
// longitude bins eastward and q latitude bins northward. Rows of V are source
// cells and columns destination cells, so in V ~ W H a column of W is a
// pattern over source cells and a row of H a pattern over destination cells.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flownet/error.hpp"
#include "flownet/ingest.hpp"
#include "flownet/network.hpp"
#include "flownet/text.hpp"

namespace flownet {

inline constexpr double earth_radius_km = 6371.0;

inline double haversine_km(GeoCoord a, GeoCoord b) {
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (b.lat - a.lat) * rad, dlon = (b.lon - a.lon) * rad;
    const double s = std::sin(dlat / 2), t = std::sin(dlon / 2);
    const double h = s * s + std::cos(a.lat * rad) * std::cos(b.lat * rad) * t * t;
    return 2.0 * earth_radius_km * std::asin(std::min(1.0, std::sqrt(h)));
}

struct CellIndex {
    std::size_t p = 0;  // longitude bin
    std::size_t q = 0;  // latitude bin
    auto operator<=>(const CellIndex&) const = default;
};

class GeoGrid {
public:
    GeoGrid() = default;
    GeoGrid(double lat_min, double lat_max, double lon_min, double lon_max, std::size_t k)
        : lat_min_(lat_min), lat_max_(lat_max), lon_min_(lon_min), lon_max_(lon_max), k_(k) {
        if (k == 0) throw UsageError("grid needs at least one cell per side");
        if (!(lat_max > lat_min) || !(lon_max > lon_min)) throw UsageError("grid bounds are empty");
    }

    // Smallest square (in degrees) around `coords`, widened by `margin` degrees.
    static GeoGrid bounding(std::span<const GeoCoord> coords, std::size_t k, double margin = 1e-6) {
        if (coords.empty()) throw DataError("no coordinates to bound");
        double la0 = coords[0].lat, la1 = la0, lo0 = coords[0].lon, lo1 = lo0;
        for (const auto& c : coords) {
            la0 = std::min(la0, c.lat);
            la1 = std::max(la1, c.lat);
            lo0 = std::min(lo0, c.lon);
            lo1 = std::max(lo1, c.lon);
        }
        const double side = std::max(la1 - la0, lo1 - lo0) + 2 * margin;
        const double lac = (la0 + la1) / 2, loc = (lo0 + lo1) / 2;
        return GeoGrid(lac - side / 2, lac + side / 2, loc - side / 2, loc + side / 2, k);
    }

    std::size_t k() const { return k_; }
    std::size_t cells() const { return k_ * k_; }
    double lat_min() const { return lat_min_; }
    double lat_max() const { return lat_max_; }
    double lon_min() const { return lon_min_; }
    double lon_max() const { return lon_max_; }

    std::size_t flat(CellIndex c) const { return c.p + c.q * k_; }
    CellIndex cell(std::size_t m) const { return {m % k_, m / k_}; }

    // nullopt outside the bounds; the upper edges belong to the last cell
    std::optional<CellIndex> locate(GeoCoord c) const {
        if (!(c.lat >= lat_min_ && c.lat <= lat_max_ && c.lon >= lon_min_ && c.lon <= lon_max_)) return std::nullopt;
        auto bin = [this](double x, double lo, double hi) {
            const auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(k_));
            return std::min(b, k_ - 1);
        };
        return CellIndex{bin(c.lon, lon_min_, lon_max_), bin(c.lat, lat_min_, lat_max_)};
    }

    GeoCoord center(CellIndex c) const {
        const double dl = (lat_max_ - lat_min_) / static_cast<double>(k_);
        const double dn = (lon_max_ - lon_min_) / static_cast<double>(k_);
        return {lat_min_ + (static_cast<double>(c.q) + 0.5) * dl, lon_min_ + (static_cast<double>(c.p) + 0.5) * dn};
    }

    // Cells whose centers lie within `radius_km` of the center of `c`, in
    // ascending flat index.
    std::vector<std::size_t> cells_within(CellIndex c, double radius_km) const {
        const auto origin = center(c);
        const double dlat_km = (lat_max_ - lat_min_) / static_cast<double>(k_) * std::numbers::pi / 180.0 * earth_radius_km;
        const double pole_lat = std::max(std::abs(lat_min_), std::abs(lat_max_));
        const double dlon_km = (lon_max_ - lon_min_) / static_cast<double>(k_) * std::numbers::pi / 180.0 *
                               earth_radius_km * std::cos(std::min(pole_lat, 89.0) * std::numbers::pi / 180.0);
        const auto reach = [this](double span) {
            return std::min<std::size_t>(k_, static_cast<std::size_t>(std::ceil(span)) + 1);
        };
        const auto rq = reach(radius_km / dlat_km), rp = reach(radius_km / dlon_km);
        std::vector<std::size_t> out;
        const std::size_t q0 = c.q > rq ? c.q - rq : 0, q1 = std::min(k_ - 1, c.q + rq);
        const std::size_t p0 = c.p > rp ? c.p - rp : 0, p1 = std::min(k_ - 1, c.p + rp);
        for (std::size_t q = q0; q <= q1; ++q)
            for (std::size_t p = p0; p <= p1; ++p)
                if (haversine_km(origin, center({p, q})) <= radius_km) out.push_back(flat({p, q}));
        return out;
    }

private:
    double lat_min_ = 0, lat_max_ = 1, lon_min_ = 0, lon_max_ = 1;
    std::size_t k_ = 1;
};

// ---------------------------------------------------------------------------
// binning

struct GeoLink {
    GeoCoord source;
    GeoCoord destination;
    std::int64_t frequency = 0;
};

struct SparseEntry {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    double value = 0.0;
};

struct SparseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<SparseEntry> entries;  // sorted by (row, col), no duplicates

    double squared_norm() const {
        double s = 0;
        for (const auto& e : entries) s += e.value * e.value;
        return s;
    }
};

struct GeoFlowMatrix {
    std::size_t cells = 0;
    // alpha per (source cell, destination cell); absent pairs are zero
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::int64_t> alpha;
    std::size_t out_of_bounds = 0;  // links with an endpoint outside the grid
    std::int64_t counted_frequency = 0;

    // V_mn = ln max(1, alpha); only alpha >= 2 gives a stored entry
    SparseMatrix log_matrix() const {
        SparseMatrix v;
        v.rows = v.cols = cells;
        for (const auto& [key, a] : alpha)
            if (a >= 2) v.entries.push_back({key.first, key.second, std::log(static_cast<double>(a))});
        return v;
    }
};

inline GeoFlowMatrix bin_transfers(std::span<const GeoLink> links, const GeoGrid& grid) {
    GeoFlowMatrix out;
    out.cells = grid.cells();
    for (const auto& l : links) {
        const auto s = grid.locate(l.source), t = grid.locate(l.destination);
        if (!s || !t) {
            ++out.out_of_bounds;
            continue;
        }
        out.alpha[{static_cast<std::uint32_t>(grid.flat(*s)), static_cast<std::uint32_t>(grid.flat(*t))}] +=
            l.frequency;
        out.counted_frequency += l.frequency;
    }
    return out;
}

struct GeoLinkSet {
    std::vector<GeoLink> links;
    std::size_t missing_coordinates = 0;  // links dropped for lack of a coordinate
};

inline GeoLinkSet geo_links(const FlowNetwork& net, const std::unordered_map<std::string, GeoCoord>& coords) {
    GeoLinkSet out;
    for (const auto& l : net.links()) {
        const auto s = coords.find(net.id(l.source)), t = coords.find(net.id(l.destination));
        if (s == coords.end() || t == coords.end()) {
            ++out.missing_coordinates;
            continue;
        }
        out.links.push_back({s->second, t->second, l.frequency});
    }
    return out;
}

// ---------------------------------------------------------------------------
// NMF

// Row-major dense matrix.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct NmfOptions {
    std::size_t max_iterations = 500;
    double tolerance = 1e-6;  // stop when the relative objective decrease falls below this
    bool record_history = false;
};

struct NmfFactorization {
    std::size_t d = 0;
    DenseMatrix w;  // rows x d
    DenseMatrix h;  // d x cols, rows normalized to unit sum where nonzero
    double objective = 0.0;  // squared Frobenius error
    double relative_error = 0.0;  // ||V - WH|| / ||V|| (0 when V = 0)
    std::size_t iterations = 0;
    std::vector<double> history;  // objective after each iteration, starting with the initial value

    std::vector<double> w_column(std::size_t m) const {
        std::vector<double> v(w.rows);
        for (std::size_t i = 0; i < w.rows; ++i) v[i] = w(i, m);
        return v;
    }
    std::vector<double> h_row(std::size_t m) const {
        return {h.data.begin() + static_cast<std::ptrdiff_t>(m * h.cols),
                h.data.begin() + static_cast<std::ptrdiff_t>((m + 1) * h.cols)};
    }
};

namespace detail {

inline constexpr std::size_t dense_objective_limit = 4'000'000;

// ||V - WH||^2, exact over all entries for small matrices, otherwise through
// ||V||^2 - 2 <V, WH> + <W^T W, H H^T>.
inline double nmf_objective(const SparseMatrix& v, const DenseMatrix& w, const DenseMatrix& h) {
    const std::size_t d = w.cols;
    if (v.rows * v.cols <= dense_objective_limit) {
        std::vector<double> dense(v.rows * v.cols, 0.0);
        for (const auto& e : v.entries) dense[e.row * v.cols + e.col] = e.value;
        double s = 0;
        for (std::size_t i = 0; i < v.rows; ++i)
            for (std::size_t j = 0; j < v.cols; ++j) {
                double x = 0;
                for (std::size_t k = 0; k < d; ++k) x += w(i, k) * h(k, j);
                const double r = dense[i * v.cols + j] - x;
                s += r * r;
            }
        return s;
    }
    double cross = 0;
    for (const auto& e : v.entries) {
        double x = 0;
        for (std::size_t k = 0; k < d; ++k) x += w(e.row, k) * h(k, e.col);
        cross += e.value * x;
    }
    DenseMatrix wtw(d, d), hht(d, d);
    for (std::size_t i = 0; i < w.rows; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) wtw(a, b) += w(i, a) * w(i, b);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
            double x = 0;
            for (std::size_t j = 0; j < h.cols; ++j) x += h(a, j) * h(b, j);
            hht(a, b) = x;
        }
    double model = 0;
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) model += wtw(a, b) * hht(a, b);
    return std::max(0.0, v.squared_norm() - 2 * cross + model);
}

inline double unit_uniform(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

// Multiplicative updates for the squared Frobenius error. An entry whose
// update denominator is zero, or whose update would overflow, is left unchanged.
// A step that ends above the previous objective is undone and stops the run,
// so the returned factors are the best iterate and `history` never rises.
inline NmfFactorization nmf(const SparseMatrix& v, std::size_t d, std::uint64_t seed, const NmfOptions& opt = {}) {
    if (d < 1 || d > std::min(v.rows, v.cols)) throw UsageError("factor count out of range");
    for (const auto& e : v.entries)
        if (!(e.value >= 0.0)) throw DataError("NMF input has a negative entry");

    NmfFactorization f;
    f.d = d;
    f.w = DenseMatrix(v.rows, d);
    f.h = DenseMatrix(d, v.cols);
    std::mt19937_64 rng(seed);
    for (auto& x : f.w.data) x = detail::unit_uniform(rng);
    for (auto& x : f.h.data) x = detail::unit_uniform(rng);

    const double v_norm2 = v.squared_norm();
    double prev = detail::nmf_objective(v, f.w, f.h);
    if (opt.record_history) f.history.push_back(prev);

    DenseMatrix num_h(d, v.cols), num_w(v.rows, d), gram(d, d);
    auto update = [](double& x, double num, double den) {
        if (!(den > 0.0)) return;
        const double next = x * num / den;  // x = 0 stays 0 even when num / den overflows
        if (std::isfinite(next)) x = next;
    };

    DenseMatrix last_w, last_h;
    for (std::size_t it = 0; it < opt.max_iterations && prev > 0.0; ++it) {
        last_w = f.w;
        last_h = f.h;
        // H <- H * (W^T V) / (W^T W H)
        std::fill(num_h.data.begin(), num_h.data.end(), 0.0);
        for (const auto& e : v.entries)
            for (std::size_t k = 0; k < d; ++k) num_h(k, e.col) += f.w(e.row, k) * e.value;
        std::fill(gram.data.begin(), gram.data.end(), 0.0);
        for (std::size_t i = 0; i < v.rows; ++i)
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = 0; b < d; ++b) gram(a, b) += f.w(i, a) * f.w(i, b);
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t j = 0; j < v.cols; ++j) {
                double den = 0;
                for (std::size_t b = 0; b < d; ++b) den += gram(k, b) * f.h(b, j);
                update(f.h(k, j), num_h(k, j), den);
            }

        // W <- W * (V H^T) / (W H H^T)
        std::fill(num_w.data.begin(), num_w.data.end(), 0.0);
        for (const auto& e : v.entries)
            for (std::size_t k = 0; k < d; ++k) num_w(e.row, k) += e.value * f.h(k, e.col);
        std::fill(gram.data.begin(), gram.data.end(), 0.0);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) {
                double x = 0;
                for (std::size_t j = 0; j < v.cols; ++j) x += f.h(a, j) * f.h(b, j);
                gram(a, b) = x;
            }
        for (std::size_t i = 0; i < v.rows; ++i)
            for (std::size_t k = 0; k < d; ++k) {
                double den = 0;
                for (std::size_t b = 0; b < d; ++b) den += f.w(i, b) * gram(b, k);
                update(f.w(i, k), num_w(i, k), den);
            }

        const double cur = detail::nmf_objective(v, f.w, f.h);
        if (cur > prev) {
            // only round-off near a fixed point can raise the objective; keep the better iterate
            f.w = std::move(last_w);
            f.h = std::move(last_h);
            break;
        }
        ++f.iterations;
        if (opt.record_history) f.history.push_back(cur);
        const bool done = cur <= 0.0 || (prev - cur) <= opt.tolerance * prev;
        prev = cur;
        if (done) break;
    }

    // move scale into W so every nonzero row of H sums to one, then order
    // factors by descending W column mass
    for (std::size_t k = 0; k < d; ++k) {
        double s = 0;
        for (std::size_t j = 0; j < v.cols; ++j) s += f.h(k, j);
        if (s <= 0.0) continue;
        for (std::size_t j = 0; j < v.cols; ++j) f.h(k, j) /= s;
        for (std::size_t i = 0; i < v.rows; ++i) f.w(i, k) *= s;
    }
    std::vector<double> mass(d, 0.0);
    for (std::size_t i = 0; i < v.rows; ++i)
        for (std::size_t k = 0; k < d; ++k) mass[k] += f.w(i, k);
    std::vector<std::size_t> order(d);
    for (std::size_t k = 0; k < d; ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mass[a] > mass[b]; });
    DenseMatrix w2(v.rows, d), h2(d, v.cols);
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t i = 0; i < v.rows; ++i) w2(i, k) = f.w(i, order[k]);
        for (std::size_t j = 0; j < v.cols; ++j) h2(k, j) = f.h(order[k], j);
    }
    f.w = std::move(w2);
    f.h = std::move(h2);
    f.objective = detail::nmf_objective(v, f.w, f.h);
    f.relative_error = v_norm2 > 0 ? std::sqrt(f.objective / v_norm2) : 0.0;
    return f;
}

// ---------------------------------------------------------------------------
// localization and similarity

struct Localization {
    std::optional<CellIndex> center;  // C'(v); nullopt for an all-zero vector
    std::optional<double> gamma;      // largest captured share
};

// Neighbourhoods of every cell center, shared across basis vectors.
class CircleIndex {
public:
    CircleIndex(const GeoGrid& grid, double radius_km) : grid_(grid), radius_km_(radius_km) {
        within_.resize(grid.cells());
        for (std::size_t m = 0; m < grid.cells(); ++m) within_[m] = grid.cells_within(grid.cell(m), radius_km);
    }

    const GeoGrid& grid() const { return grid_; }
    double radius_km() const { return radius_km_; }
    std::span<const std::size_t> within(std::size_t m) const { return within_[m]; }

    // Brute force over all candidate centers; ties keep the smallest (p, q)
    // with p compared first.
    Localization localize(std::span<const double> v) const {
        if (v.size() != grid_.cells()) throw UsageError("basis vector does not match the grid");
        double total = 0;
        for (double x : v) total += x;
        if (!(total > 0.0)) return {};
        double best = -1.0;
        CellIndex best_cell{};
        const auto k = grid_.k();
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t q = 0; q < k; ++q) {
                double s = 0;
                for (auto c : within_[grid_.flat({p, q})]) s += v[c];
                if (s > best) {
                    best = s;
                    best_cell = {p, q};
                }
            }
        return {best_cell, std::min(1.0, best / total)};
    }

private:
    GeoGrid grid_;
    double radius_km_;
    std::vector<std::vector<std::size_t>> within_;
};

struct FactorLocalization {
    std::vector<Localization> source;       // per column of W
    std::vector<Localization> destination;  // per row of H
};

inline FactorLocalization localization(const NmfFactorization& f, const CircleIndex& circles) {
    if (f.w.rows != circles.grid().cells() || f.h.cols != circles.grid().cells())
        throw UsageError("factorization does not match the grid");
    FactorLocalization out;
    for (std::size_t m = 0; m < f.d; ++m) {
        out.source.push_back(circles.localize(f.w_column(m)));
        out.destination.push_back(circles.localize(f.h_row(m)));
    }
    return out;
}

inline std::optional<double> cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa <= 0.0 || bb <= 0.0) return std::nullopt;
    return std::clamp(ab / std::sqrt(aa * bb), 0.0, 1.0);
}

// entry [n][m] = cos(w_m, h_n); nullopt where a vector has zero norm
inline std::vector<std::vector<std::optional<double>>> similarity_matrix(const NmfFactorization& f) {
    std::vector<std::vector<double>> ws, hs;
    for (std::size_t m = 0; m < f.d; ++m) {
        ws.push_back(f.w_column(m));
        hs.push_back(f.h_row(m));
    }
    std::vector<std::vector<std::optional<double>>> s(f.d, std::vector<std::optional<double>>(f.d));
    for (std::size_t n = 0; n < f.d; ++n)
        for (std::size_t m = 0; m < f.d; ++m) s[n][m] = cosine_similarity(ws[m], hs[n]);
    return s;
}

inline constexpr double localized_gamma = 0.23;
inline constexpr double matched_similarity = 0.9;

struct SweepRow {
    std::size_t d = 0;
    std::vector<std::optional<double>> source_gamma;
    std::vector<std::optional<double>> destination_gamma;
    std::size_t localized_sources = 0;       // gamma > 0.23
    std::size_t localized_destinations = 0;
    std::size_t matched_pairs = 0;           // diagonal similarity >= 0.9
    std::size_t localized_matched_pairs = 0; // both ends localized and matched
    double relative_error = 0.0;
};

inline SweepRow summarize(const NmfFactorization& f, const CircleIndex& circles) {
    SweepRow row;
    row.d = f.d;
    row.relative_error = f.relative_error;
    const auto loc = localization(f, circles);
    const auto sim = similarity_matrix(f);
    auto localized = [](const Localization& l) { return l.gamma && *l.gamma > localized_gamma; };
    for (std::size_t m = 0; m < f.d; ++m) {
        row.source_gamma.push_back(loc.source[m].gamma);
        row.destination_gamma.push_back(loc.destination[m].gamma);
        row.localized_sources += localized(loc.source[m]);
        row.localized_destinations += localized(loc.destination[m]);
        const bool matched = sim[m][m] && *sim[m][m] >= matched_similarity;
        row.matched_pairs += matched;
        row.localized_matched_pairs += matched && localized(loc.source[m]) && localized(loc.destination[m]);
    }
    return row;
}

inline std::vector<SweepRow> d_sweep(const SparseMatrix& v, std::size_t d_min, std::size_t d_max, std::uint64_t seed,
                                     const CircleIndex& circles, const NmfOptions& opt = {}) {
    if (d_min < 1 || d_min > d_max) throw UsageError("invalid factor-count range");
    std::vector<SweepRow> rows;
    for (std::size_t d = d_min; d <= d_max; ++d) rows.push_back(summarize(nmf(v, d, seed, opt), circles));
    return rows;
}

// ---------------------------------------------------------------------------
// text exports

// Dense matrix with a "rows cols" header line.
inline void write_dense(std::ostream& out, const DenseMatrix& m) {
    out << m.rows << ' ' << m.cols << '\n';
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j) out << ' ';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

inline DenseMatrix read_dense(std::istream& in) {
    std::size_t rows = 0, cols = 0;
    if (!(in >> rows >> cols)) throw DataError("dense matrix: missing header");
    DenseMatrix m(rows, cols);
    for (auto& x : m.data)
        if (!(in >> x)) throw DataError("dense matrix: truncated");
    return m;
}

// Sparse matrix as a "rows cols nonzeros" header and one "row col value" line
// per stored entry.
inline void write_sparse(std::ostream& out, const SparseMatrix& m) {
    out << m.rows << ' ' << m.cols << ' ' << m.entries.size() << '\n';
    for (const auto& e : m.entries) out << e.row << ' ' << e.col << ' ' << format_double(e.value) << '\n';
}

// K x K heatmap of a cell vector, northernmost row first, west to east.
inline void write_heatmap(std::ostream& out, const GeoGrid& grid, std::span<const double> v) {
    const auto k = grid.k();
    for (std::size_t q = k; q-- > 0;) {
        for (std::size_t p = 0; p < k; ++p) {
            if (p) out << ',';
            out << format_double(v[grid.flat({p, q})]);
        }
        out << '\n';
    }
}

}  // namespace flownet
