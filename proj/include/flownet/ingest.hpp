#pragma once

// Transfer-log parsing, filtering and aggregation into weighted links.
//
// Log format, one transfer per line:
//   timestamp,source_id,destination_id,amount_yen,source_kind,destination_kind,
//   source_lat,source_lon,dest_lat,dest_lon
// Coordinate columns may be empty or omitted from the end of the line.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flownet/error.hpp"
#include "flownet/text.hpp"

namespace flownet {

enum class PartyKind { firm, household, external };

inline std::string_view to_string(PartyKind kind) {
    switch (kind) {
    case PartyKind::firm: return "firm";
    case PartyKind::household: return "household";
    case PartyKind::external: return "external";
    }
    return "?";
}

inline std::optional<PartyKind> parse_party_kind(std::string_view s) {
    if (s == "firm") return PartyKind::firm;
    if (s == "household") return PartyKind::household;
    if (s == "external") return PartyKind::external;
    return std::nullopt;
}

struct GeoCoord {
    double lat = 0.0;  // degrees
    double lon = 0.0;  // degrees

    friend bool operator==(const GeoCoord&, const GeoCoord&) = default;
};

using Timestamp = std::chrono::sys_seconds;

struct TransferRecord {
    Timestamp timestamp{};
    std::string source;
    std::string destination;
    std::int64_t amount = 0;  // yen, >= 1
    PartyKind source_kind = PartyKind::firm;
    PartyKind destination_kind = PartyKind::firm;
    std::optional<GeoCoord> source_coord;
    std::optional<GeoCoord> destination_coord;
};

struct FilterPolicy {
    bool require_intra_bank = true;
    bool require_firm_both_ends = true;
    bool drop_self_loops = true;

    static FilterPolicy paper_default() { return {}; }
    static FilterPolicy none() { return {false, false, false}; }
};

struct AggregatedLink {
    std::string source;
    std::string destination;
    std::int64_t flow = 0;       // sum of amounts
    std::int64_t frequency = 0;  // number of transfers

    friend bool operator==(const AggregatedLink&, const AggregatedLink&) = default;
};

struct LogFormat {
    char delimiter = ',';
    bool strict = false;  // abort on the first malformed line
};

struct Rejection {
    std::size_t line = 0;  // 1-based
    std::string reason;
};

struct ParseResult {
    std::vector<TransferRecord> records;
    std::vector<Rejection> rejected;
    std::size_t lines_read = 0;
};

// ---------------------------------------------------------------------------
// timestamps

// Accepts YYYY-MM-DD, YYYY-MM-DDTHH:MM:SS and the same with a trailing 'Z'.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
    using namespace std::chrono;
    if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
    if (s.size() != 10 && s.size() != 19) return std::nullopt;
    auto digits = [&](std::size_t pos, std::size_t len, int& out) {
        out = 0;
        for (std::size_t k = pos; k < pos + len; ++k) {
            if (s[k] < '0' || s[k] > '9') return false;
            out = out * 10 + (s[k] - '0');
        }
        return true;
    };
    int y, mo, d, h = 0, mi = 0, sec = 0;
    if (!digits(0, 4, y) || s[4] != '-' || !digits(5, 2, mo) || s[7] != '-' || !digits(8, 2, d))
        return std::nullopt;
    if (s.size() == 19) {
        if ((s[10] != 'T' && s[10] != ' ') || !digits(11, 2, h) || s[13] != ':' ||
            !digits(14, 2, mi) || s[16] != ':' || !digits(17, 2, sec))
            return std::nullopt;
        if (h > 23 || mi > 59 || sec > 59) return std::nullopt;
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

inline std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

// ---------------------------------------------------------------------------
// parse_log

namespace detail {

inline std::optional<std::int64_t> parse_amount(std::string_view s) {
    std::int64_t v = 0;
    if (s.empty() || s.front() == '-' || s.front() == '+') return std::nullopt;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// Both empty -> nullopt coordinate; both numeric -> coordinate; else error text.
inline std::optional<std::string> parse_coord_pair(std::string_view lat_s, std::string_view lon_s,
                                                   const char* which,
                                                   std::optional<GeoCoord>& out) {
    lat_s = trim(lat_s);
    lon_s = trim(lon_s);
    if (lat_s.empty() && lon_s.empty()) {
        out.reset();
        return std::nullopt;
    }
    auto lat = parse_double(lat_s);
    auto lon = parse_double(lon_s);
    if (!lat || !lon) return std::string("incomplete or non-numeric ") + which + " coordinate";
    if (*lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0)
        return std::string(which) + " coordinate out of range";
    out = GeoCoord{*lat, *lon};
    return std::nullopt;
}

// Returns the record or a reason string.
inline std::pair<std::optional<TransferRecord>, std::string> parse_line(std::string_view line,
                                                                        char delim) {
    auto fields = split(line, delim);
    if (fields.size() < 6) return {std::nullopt, "missing field (expected at least 6 columns)"};
    if (fields.size() > 10) return {std::nullopt, "too many fields (expected at most 10 columns)"};
    fields.resize(10, std::string_view{});

    TransferRecord rec;
    auto ts = parse_timestamp(trim(fields[0]));
    if (!ts) return {std::nullopt, "bad timestamp"};
    rec.timestamp = *ts;
    rec.source = std::string(trim(fields[1]));
    rec.destination = std::string(trim(fields[2]));
    if (rec.source.empty() || rec.destination.empty()) return {std::nullopt, "empty account id"};
    auto amount = parse_amount(trim(fields[3]));
    if (!amount) return {std::nullopt, "non-numeric amount"};
    if (*amount < 1) return {std::nullopt, "amount must be at least 1 yen"};
    rec.amount = *amount;
    auto sk = parse_party_kind(trim(fields[4]));
    auto dk = parse_party_kind(trim(fields[5]));
    if (!sk || !dk) return {std::nullopt, "unknown party kind"};
    rec.source_kind = *sk;
    rec.destination_kind = *dk;
    if (auto err = parse_coord_pair(fields[6], fields[7], "source", rec.source_coord))
        return {std::nullopt, *err};
    if (auto err = parse_coord_pair(fields[8], fields[9], "destination", rec.destination_coord))
        return {std::nullopt, *err};
    return {std::move(rec), {}};
}

}  // namespace detail

// One record per valid line in file order. Blank lines and a leading header
// line (first field "timestamp") are skipped. In strict mode the first
// malformed line throws DataError.
inline ParseResult parse_log(std::istream& in, const LogFormat& format = {}) {
    ParseResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        if (line_no == 1 && trim(split(line, format.delimiter).front()) == "timestamp") continue;
        ++result.lines_read;
        auto [rec, reason] = detail::parse_line(line, format.delimiter);
        if (rec) {
            result.records.push_back(std::move(*rec));
            continue;
        }
        if (format.strict)
            throw DataError("line " + std::to_string(line_no) + ": " + reason);
        result.rejected.push_back({line_no, std::move(reason)});
    }
    return result;
}

inline void write_log_header(std::ostream& out) {
    out << "timestamp,source_id,destination_id,amount_yen,source_kind,destination_kind,"
           "source_lat,source_lon,dest_lat,dest_lon\n";
}

inline void write_record(std::ostream& out, const TransferRecord& r) {
    auto coord = [&](const std::optional<GeoCoord>& c) {
        if (!c) {
            out << ",,";
            return;
        }
        out << ',' << format_fixed(c->lat, 6) << ',' << format_fixed(c->lon, 6);
    };
    out << format_timestamp(r.timestamp) << ',' << r.source << ',' << r.destination << ','
        << r.amount << ',' << to_string(r.source_kind) << ',' << to_string(r.destination_kind);
    coord(r.source_coord);
    coord(r.destination_coord);
    out << '\n';
}

// ---------------------------------------------------------------------------
// filtering and aggregation

inline bool passes(const TransferRecord& r, const FilterPolicy& policy) {
    if (policy.require_intra_bank &&
        (r.source_kind == PartyKind::external || r.destination_kind == PartyKind::external))
        return false;
    if (policy.require_firm_both_ends &&
        (r.source_kind != PartyKind::firm || r.destination_kind != PartyKind::firm))
        return false;
    if (policy.drop_self_loops && r.source == r.destination) return false;
    return true;
}

inline std::vector<TransferRecord> filter_records(std::span<const TransferRecord> records,
                                                  const FilterPolicy& policy) {
    std::vector<TransferRecord> kept;
    for (const auto& r : records)
        if (passes(r, policy)) kept.push_back(r);
    return kept;
}

// One link per ordered (source, destination) pair, sorted by that pair.
inline std::vector<AggregatedLink> aggregate(std::span<const TransferRecord> records) {
    std::map<std::pair<std::string_view, std::string_view>, std::pair<std::int64_t, std::int64_t>> acc;
    for (const auto& r : records) {
        auto& [flow, freq] = acc[{r.source, r.destination}];
        flow += r.amount;
        freq += 1;
    }
    std::vector<AggregatedLink> links;
    links.reserve(acc.size());
    for (const auto& [key, value] : acc)
        links.push_back({std::string(key.first), std::string(key.second), value.first, value.second});
    return links;
}

// First coordinate observed for each account, keyed by account id.
inline std::map<std::string, GeoCoord> collect_account_coords(std::span<const TransferRecord> records) {
    std::map<std::string, GeoCoord> coords;
    for (const auto& r : records) {
        if (r.source_coord) coords.try_emplace(r.source, *r.source_coord);
        if (r.destination_coord) coords.try_emplace(r.destination, *r.destination_coord);
    }
    return coords;
}

// ---------------------------------------------------------------------------
// link and account tables

inline void write_links(std::ostream& out, std::span<const AggregatedLink> links) {
    out << "source_id,destination_id,flow_yen,frequency\n";
    for (const auto& l : links)
        out << l.source << ',' << l.destination << ',' << l.flow << ',' << l.frequency << '\n';
}

inline std::vector<AggregatedLink> read_links(std::istream& in) {
    std::vector<AggregatedLink> links;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto f = split(line, ',');
        if (line_no == 1 && trim(f[0]) == "source_id") continue;
        if (f.size() != 4) throw DataError("link table line " + std::to_string(line_no) + ": expected 4 columns");
        auto flow = detail::parse_amount(trim(f[2]));
        auto freq = detail::parse_amount(trim(f[3]));
        if (!flow || !freq || *freq < 1 || *flow < *freq)
            throw DataError("link table line " + std::to_string(line_no) + ": bad flow/frequency");
        links.push_back({std::string(trim(f[0])), std::string(trim(f[1])), *flow, *freq});
    }
    return links;
}

inline void write_accounts(std::ostream& out, const std::map<std::string, GeoCoord>& coords) {
    out << "account_id,lat,lon\n";
    for (const auto& [id, c] : coords)
        out << id << ',' << format_fixed(c.lat, 6) << ',' << format_fixed(c.lon, 6) << '\n';
}

inline std::map<std::string, GeoCoord> read_accounts(std::istream& in) {
    std::map<std::string, GeoCoord> coords;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto f = split(line, ',');
        if (line_no == 1 && trim(f[0]) == "account_id") continue;
        std::optional<GeoCoord> c;
        if (f.size() != 3 || detail::parse_coord_pair(f[1], f[2], "account", c) || !c)
            throw DataError("account table line " + std::to_string(line_no) + ": malformed");
        coords.emplace(std::string(trim(f[0])), *c);
    }
    return coords;
}

}  // namespace flownet
