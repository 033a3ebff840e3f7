#include "harness/plot.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "core/error.h"
#include "harness/metrics.h"

namespace fatlab::harness {

namespace {

constexpr int kW = 720, kH = 480;
constexpr int kMargL = 70, kMargR = 20, kMargT = 40, kMargB = 50;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr int kPaletteN = 10;

struct Span {
    double lo = 0, hi = 1;
    void grow(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    static Span of(const std::vector<double>& vs) {
        if (vs.empty()) return {0, 1};
        Span s{vs[0], vs[0]};
        for (double v : vs) s.grow(v);
        if (s.hi - s.lo < 1e-12) {
            s.lo -= 0.5;
            s.hi += 0.5;
        }
        return s;
    }
};

double map_x(double v, const Span& s) {
    return kMargL + (v - s.lo) / (s.hi - s.lo) * (kW - kMargL - kMargR);
}
double map_y(double v, const Span& s) {
    return kH - kMargB - (v - s.lo) / (s.hi - s.lo) * (kH - kMargT - kMargB);
}

std::string esc(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '&') o += "&amp;";
        else if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else o += c;
    }
    return o;
}

void open_svg(std::ostringstream& svg, const std::string& title) {
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
        << "' viewBox='0 0 " << kW << " " << kH << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n"
        << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='16' "
           "font-family='sans-serif'>"
        << esc(title) << "</text>\n";
}

void axes(std::ostringstream& svg, const Span& xs, const Span& ys,
          const std::string& xlabel, const std::string& ylabel) {
    svg << "<rect x='" << kMargL << "' y='" << kMargT << "' width='"
        << kW - kMargL - kMargR << "' height='" << kH - kMargT - kMargB
        << "' fill='none' stroke='#444'/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xs.lo + (xs.hi - xs.lo) * i / 4.0;
        const double fy = ys.lo + (ys.hi - ys.lo) * i / 4.0;
        svg << "<text x='" << map_x(fx, xs) << "' y='" << kH - kMargB + 18
            << "' text-anchor='middle' font-size='11' font-family='sans-serif'>"
            << fmt_real(std::round(fx * 100) / 100) << "</text>\n";
        svg << "<text x='" << kMargL - 8 << "' y='" << map_y(fy, ys) + 4
            << "' text-anchor='end' font-size='11' font-family='sans-serif'>"
            << fmt_real(std::round(fy * 100) / 100) << "</text>\n";
        svg << "<line x1='" << kMargL << "' y1='" << map_y(fy, ys) << "' x2='"
            << kW - kMargR << "' y2='" << map_y(fy, ys)
            << "' stroke='#ddd' stroke-width='0.5'/>\n";
    }
    svg << "<text x='" << (kMargL + kW - kMargR) / 2 << "' y='" << kH - 12
        << "' text-anchor='middle' font-size='13' font-family='sans-serif'>" << esc(xlabel)
        << "</text>\n";
    svg << "<text x='16' y='" << (kMargT + kH - kMargB) / 2
        << "' text-anchor='middle' font-size='13' font-family='sans-serif' transform='rotate(-90 "
           "16 "
        << (kMargT + kH - kMargB) / 2 << ")'>" << esc(ylabel) << "</text>\n";
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_io("cannot write " + path);
    out << body;
}

}  // namespace

void plot_lines(const std::string& stem, const std::string& title,
                const std::string& xlabel, const std::string& ylabel,
                const std::vector<Series>& series) {
    Span xs{1e300, -1e300}, ys{1e300, -1e300};
    bool any = false;
    for (const auto& s : series) {
        for (double v : s.x) {
            xs.grow(v);
            any = true;
        }
        for (double v : s.y) ys.grow(v);
    }
    if (!any) {
        xs = {0, 1};
        ys = {0, 1};
    }
    if (xs.hi - xs.lo < 1e-12) xs.hi = xs.lo + 1;
    if (ys.hi - ys.lo < 1e-12) ys.hi = ys.lo + 1;

    std::ostringstream svg;
    open_svg(svg, title);
    axes(svg, xs, ys, xlabel, ylabel);
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % kPaletteN];
        svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.8' points='";
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            svg << map_x(s.x[i], xs) << "," << map_y(s.y[i], ys) << " ";
        svg << "'/>\n";
        svg << "<text x='" << kW - kMargR - 8 << "' y='" << kMargT + 16 + 15 * si
            << "' text-anchor='end' font-size='12' font-family='sans-serif' fill='" << color
            << "'>" << esc(s.name) << "</text>\n";
    }
    svg << "</svg>\n";
    write_text(stem + ".svg", svg.str());

    std::ostringstream csv;
    csv << "series,x,y\n";
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            csv << s.name << "," << fmt_real(s.x[i]) << "," << fmt_real(s.y[i]) << "\n";
    write_text(stem + ".csv", csv.str());
}

void plot_heatmap(const std::string& stem, const std::string& title, int k,
                  const std::vector<double>& values) {
    if (k <= 0 || values.size() != static_cast<size_t>(k) * k)
        throw_input("plot_heatmap: values must be k*k");
    double vmax = 0;
    for (double v : values) vmax = std::max(vmax, v);
    if (vmax <= 0) vmax = 1;

    const int cell = std::min((kW - kMargL - kMargR) / k, (kH - kMargT - kMargB) / k);
    std::ostringstream svg;
    open_svg(svg, title);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double v = values[static_cast<size_t>(i) * k + j] / vmax;
            const int r = static_cast<int>(255 * v);
            const int b = static_cast<int>(255 * (1 - v));
            svg << "<rect x='" << kMargL + j * cell << "' y='" << kMargT + i * cell
                << "' width='" << cell << "' height='" << cell << "' fill='rgb(" << r << ",80,"
                << b << ")'/>\n";
            svg << "<text x='" << kMargL + j * cell + cell / 2 << "' y='"
                << kMargT + i * cell + cell / 2 + 4
                << "' text-anchor='middle' font-size='10' fill='white' "
                   "font-family='sans-serif'>"
                << fmt_real(std::round(values[static_cast<size_t>(i) * k + j] * 1000) / 1000)
                << "</text>\n";
        }
        svg << "<text x='" << kMargL - 8 << "' y='" << kMargT + i * cell + cell / 2 + 4
            << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << i
            << "</text>\n";
        svg << "<text x='" << kMargL + i * cell + cell / 2 << "' y='" << kMargT - 6
            << "' text-anchor='middle' font-size='11' font-family='sans-serif'>" << i
            << "</text>\n";
    }
    svg << "</svg>\n";
    write_text(stem + ".svg", svg.str());

    std::ostringstream csv;
    csv << "i,j,value\n";
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            csv << i << "," << j << "," << fmt_real(values[static_cast<size_t>(i) * k + j])
                << "\n";
    write_text(stem + ".csv", csv.str());
}

void plot_scatter(const std::string& stem, const std::string& title,
                  const std::vector<double>& xy, const std::vector<int>& labels) {
    const size_t n = xy.size() / 2;
    Span xs{1e300, -1e300}, ys{1e300, -1e300};
    for (size_t i = 0; i < n; ++i) {
        xs.grow(xy[2 * i]);
        ys.grow(xy[2 * i + 1]);
    }
    if (n == 0) {
        xs = {0, 1};
        ys = {0, 1};
    }
    if (xs.hi - xs.lo < 1e-12) xs.hi = xs.lo + 1;
    if (ys.hi - ys.lo < 1e-12) ys.hi = ys.lo + 1;

    std::ostringstream svg;
    open_svg(svg, title);
    axes(svg, xs, ys, "dim 1", "dim 2");
    for (size_t i = 0; i < n; ++i) {
        const int lab = i < labels.size() ? labels[i] : 0;
        svg << "<circle cx='" << map_x(xy[2 * i], xs) << "' cy='" << map_y(xy[2 * i + 1], ys)
            << "' r='3' fill='" << kPalette[lab % kPaletteN] << "' fill-opacity='0.75'/>\n";
    }
    svg << "</svg>\n";
    write_text(stem + ".svg", svg.str());

    std::ostringstream csv;
    csv << "x,y,label\n";
    for (size_t i = 0; i < n; ++i)
        csv << fmt_real(xy[2 * i]) << "," << fmt_real(xy[2 * i + 1]) << ","
            << (i < labels.size() ? labels[i] : 0) << "\n";
    write_text(stem + ".csv", csv.str());
}

void plot_grouped_bars(const std::string& stem, const std::string& title,
                       const std::vector<std::string>& groups,
                       const std::vector<std::string>& bins,
                       const std::vector<std::vector<double>>& pct) {
    if (groups.size() != pct.size()) throw_input("plot_grouped_bars: group/pct mismatch");
    double vmax = 0;
    for (const auto& row : pct)
        for (double v : row) vmax = std::max(vmax, v);
    if (vmax <= 0) vmax = 1;

    const int ng = static_cast<int>(groups.size());
    const int nb = static_cast<int>(bins.size());
    const double gw = static_cast<double>(kW - kMargL - kMargR) / std::max(1, ng);
    const double bw = gw / (nb + 1);

    std::ostringstream svg;
    open_svg(svg, title);
    svg << "<line x1='" << kMargL << "' y1='" << kH - kMargB << "' x2='" << kW - kMargR
        << "' y2='" << kH - kMargB << "' stroke='#444'/>\n";
    for (int g = 0; g < ng; ++g) {
        const auto& row = pct[static_cast<size_t>(g)];
        for (int b = 0; b < nb && b < static_cast<int>(row.size()); ++b) {
            const double h = row[static_cast<size_t>(b)] / vmax * (kH - kMargT - kMargB);
            svg << "<rect x='" << kMargL + g * gw + b * bw << "' y='" << kH - kMargB - h
                << "' width='" << bw * 0.9 << "' height='" << h << "' fill='"
                << kPalette[b % kPaletteN] << "'/>\n";
        }
        svg << "<text x='" << kMargL + g * gw + gw / 2 << "' y='" << kH - kMargB + 18
            << "' text-anchor='middle' font-size='11' font-family='sans-serif'>"
            << esc(groups[static_cast<size_t>(g)]) << "</text>\n";
    }
    for (int b = 0; b < nb; ++b)
        svg << "<text x='" << kW - kMargR - 8 << "' y='" << kMargT + 16 + 14 * b
            << "' text-anchor='end' font-size='11' font-family='sans-serif' fill='"
            << kPalette[b % kPaletteN] << "'>" << esc(bins[static_cast<size_t>(b)])
            << "</text>\n";
    svg << "</svg>\n";
    write_text(stem + ".svg", svg.str());

    std::ostringstream csv;
    csv << "group,bin,pct\n";
    for (int g = 0; g < ng; ++g)
        for (int b = 0; b < nb && b < static_cast<int>(pct[static_cast<size_t>(g)].size()); ++b)
            csv << groups[static_cast<size_t>(g)] << "," << bins[static_cast<size_t>(b)] << ","
                << fmt_real(pct[static_cast<size_t>(g)][static_cast<size_t>(b)]) << "\n";
    write_text(stem + ".csv", csv.str());
}

}  // namespace fatlab::harness
