#pragma once

// Minimal SVG plots: log-log scatter/step series, histograms and grid
// heatmaps. Output is a pure function of the inputs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "flownet/error.hpp"
#include "flownet/text.hpp"

namespace flownet::svg {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Series {
    std::string name;
    std::vector<Point> points;
};

struct Frame {
    std::string title;
    std::string x_label;
    std::string y_label;
    double width = 640;
    double height = 480;
};

namespace detail {

inline constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
inline constexpr double left = 70, right = 20, top = 40, bottom = 55;

inline std::string num(double v) { return format_fixed(v, 2); }

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline void open(std::ostream& out, const Frame& f) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(f.width) << "\" height=\"" << num(f.height)
        << "\" viewBox=\"0 0 " << num(f.width) << ' ' << num(f.height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << num(f.width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(f.title)
        << "</text>\n";
}

inline void axes(std::ostream& out, const Frame& f) {
    const double x0 = left, y0 = f.height - bottom, x1 = f.width - right, y1 = top;
    out << "<path d=\"M" << num(x0) << ' ' << num(y1) << " V" << num(y0) << " H" << num(x1)
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(f.height - 12) << "\" text-anchor=\"middle\">"
        << escape(f.x_label) << "</text>\n";
    out << "<text x=\"16\" y=\"" << num((y0 + y1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << num((y0 + y1) / 2) << ")\">" << escape(f.y_label) << "</text>\n";
}

inline void legend(std::ostream& out, const Frame& f, const std::vector<std::string>& names) {
    for (std::size_t k = 0; k < names.size(); ++k) {
        const double y = top + 14 + 16 * static_cast<double>(k);
        const double x = f.width - right - 150;
        out << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 9) << "\" width=\"10\" height=\"10\" fill=\""
            << palette[k % std::size(palette)] << "\"/>\n";
        out << "<text x=\"" << num(x + 16) << "\" y=\"" << num(y) << "\">" << escape(names[k]) << "</text>\n";
    }
}

struct Scale {
    double lo, hi, a, b;  // data [lo, hi] -> pixel [a, b]
    double operator()(double v) const { return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : (a + b) / 2; }
};

}  // namespace detail

// Log-log plot; non-positive coordinates are skipped. Decade ticks on both axes.
inline void loglog(std::ostream& out, const Frame& f, const std::vector<Series>& series) {
    double xl = std::numeric_limits<double>::infinity(), xh = -xl, yl = xl, yh = -xl;
    for (const auto& s : series)
        for (const auto& p : s.points) {
            if (p.x <= 0 || p.y <= 0) continue;
            xl = std::min(xl, std::log10(p.x));
            xh = std::max(xh, std::log10(p.x));
            yl = std::min(yl, std::log10(p.y));
            yh = std::max(yh, std::log10(p.y));
        }
    if (!std::isfinite(xl)) xl = 0, xh = 1, yl = 0, yh = 1;
    xl = std::floor(xl), xh = std::max(std::ceil(xh), xl + 1);
    yl = std::floor(yl), yh = std::max(std::ceil(yh), yl + 1);
    const detail::Scale sx{xl, xh, detail::left, f.width - detail::right};
    const detail::Scale sy{yl, yh, f.height - detail::bottom, detail::top};
    detail::open(out, f);
    detail::axes(out, f);
    for (double e = xl; e <= xh; e += 1)
        out << "<text x=\"" << detail::num(sx(e)) << "\" y=\"" << detail::num(f.height - detail::bottom + 16)
            << "\" text-anchor=\"middle\">1e" << static_cast<int>(e) << "</text>\n";
    for (double e = yl; e <= yh; e += 1)
        out << "<text x=\"" << detail::num(detail::left - 6) << "\" y=\"" << detail::num(sy(e) + 4)
            << "\" text-anchor=\"end\">1e" << static_cast<int>(e) << "</text>\n";
    std::vector<std::string> names;
    for (std::size_t k = 0; k < series.size(); ++k) {
        names.push_back(series[k].name);
        out << "<g fill=\"" << detail::palette[k % std::size(detail::palette)] << "\">\n";
        for (const auto& p : series[k].points) {
            if (p.x <= 0 || p.y <= 0) continue;
            out << "<circle cx=\"" << detail::num(sx(std::log10(p.x))) << "\" cy=\"" << detail::num(sy(std::log10(p.y)))
                << "\" r=\"2\"/>\n";
        }
        out << "</g>\n";
    }
    detail::legend(out, f, names);
    out << "</svg>\n";
}

struct Histogram {
    std::string name;
    std::vector<double> counts;
};

// Overlaid step histograms sharing equal-width bins on [lo, hi].
inline void histogram(std::ostream& out, const Frame& f, double lo, double hi, const std::vector<Histogram>& hists) {
    if (!(hi > lo)) throw UsageError("histogram range is empty");
    double top_count = 1;
    std::size_t bins = 0;
    for (const auto& h : hists) {
        bins = std::max(bins, h.counts.size());
        for (double c : h.counts) top_count = std::max(top_count, c);
    }
    const detail::Scale sx{lo, hi, detail::left, f.width - detail::right};
    const detail::Scale sy{0, top_count, f.height - detail::bottom, detail::top};
    detail::open(out, f);
    detail::axes(out, f);
    for (int k = 0; k <= 4; ++k) {
        const double x = lo + (hi - lo) * k / 4.0, y = top_count * k / 4.0;
        out << "<text x=\"" << detail::num(sx(x)) << "\" y=\"" << detail::num(f.height - detail::bottom + 16)
            << "\" text-anchor=\"middle\">" << format_fixed(x, 2) << "</text>\n";
        out << "<text x=\"" << detail::num(detail::left - 6) << "\" y=\"" << detail::num(sy(y) + 4)
            << "\" text-anchor=\"end\">" << format_fixed(y, 0) << "</text>\n";
    }
    std::vector<std::string> names;
    for (std::size_t k = 0; k < hists.size(); ++k) {
        names.push_back(hists[k].name);
        const auto& c = hists[k].counts;
        if (c.empty()) continue;
        const double w = (hi - lo) / static_cast<double>(c.size());
        out << "<path fill=\"none\" stroke=\"" << detail::palette[k % std::size(detail::palette)] << "\" d=\"M"
            << detail::num(sx(lo)) << ' ' << detail::num(sy(0));
        for (std::size_t b = 0; b < c.size(); ++b) {
            out << " V" << detail::num(sy(c[b])) << " H" << detail::num(sx(lo + w * static_cast<double>(b + 1)));
        }
        out << " V" << detail::num(sy(0)) << "\"/>\n";
    }
    detail::legend(out, f, names);
    out << "</svg>\n";
}

// K x K grid with row 0 drawn at the top; values map to a white-to-blue ramp
// scaled by the maximum.
inline void heatmap(std::ostream& out, const Frame& f, std::size_t k, std::span<const double> top_down_values) {
    if (k == 0 || top_down_values.size() != k * k) throw UsageError("heatmap needs k*k values");
    double mx = 0;
    for (double v : top_down_values) mx = std::max(mx, v);
    const double side = std::min(f.width - detail::left - detail::right, f.height - detail::top - detail::bottom);
    const double cell = side / static_cast<double>(k);
    detail::open(out, f);
    out << "<rect x=\"" << detail::num(detail::left) << "\" y=\"" << detail::num(detail::top) << "\" width=\""
        << detail::num(side) << "\" height=\"" << detail::num(side) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c) {
            const double v = top_down_values[r * k + c];
            if (!(v > 0) || mx <= 0) continue;
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - v / mx)));
            out << "<rect x=\"" << detail::num(detail::left + cell * static_cast<double>(c)) << "\" y=\""
                << detail::num(detail::top + cell * static_cast<double>(r)) << "\" width=\"" << detail::num(cell)
                << "\" height=\"" << detail::num(cell) << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\"/>\n";
        }
    out << "<text x=\"" << detail::num(detail::left + side / 2) << "\" y=\"" << detail::num(detail::top + side + 20)
        << "\" text-anchor=\"middle\">" << detail::escape(f.x_label) << "</text>\n";
    out << "</svg>\n";
}

}  // namespace flownet::svg
