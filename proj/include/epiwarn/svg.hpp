#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "epiwarn/errors.hpp"

namespace epiwarn {

struct ChartSeries {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> points;
};

namespace detail {

inline std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

inline std::string fmt_coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

} // namespace detail

// Static line chart: polyline per series, optional dotted vertical rule,
// simple axes with min/max ticks and a legend. No timestamps or external
// references, so identical inputs give identical bytes.
inline std::string line_chart_svg(const std::vector<ChartSeries>& series,
                                  std::optional<double> vline_x, const std::string& x_label,
                                  const std::string& y_label, const std::string& title) {
    if (series.empty()) throw DataError("line_chart_svg: no series");
    double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
    bool first = true;
    for (const ChartSeries& s : series)
        for (const auto& [x, y] : s.points) {
            if (first) {
                x_min = x_max = x;
                y_min = y_max = y;
                first = false;
            }
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
    if (first) throw DataError("line_chart_svg: series have no points");
    if (vline_x) {
        x_min = std::min(x_min, *vline_x);
        x_max = std::max(x_max, *vline_x);
    }
    if (x_max == x_min) x_max = x_min + 1.0;
    if (y_max == y_min) y_max = y_min + 1.0;

    const double width = 720.0, height = 420.0;
    const double ml = 64.0, mr = 20.0, mt = 36.0, mb = 48.0;
    const double pw = width - ml - mr, ph = height - mt - mb;
    const auto sx = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
    const auto sy = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"420\" "
           "viewBox=\"0 0 720 420\">\n";
    out += "  <rect width=\"720\" height=\"420\" fill=\"white\"/>\n";
    out += "  <text x=\"360\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">" + title + "</text>\n";
    // axes
    out += "  <line x1=\"" + detail::fmt_coord(ml) + "\" y1=\"" + detail::fmt_coord(mt) +
           "\" x2=\"" + detail::fmt_coord(ml) + "\" y2=\"" + detail::fmt_coord(mt + ph) +
           "\" stroke=\"black\"/>\n";
    out += "  <line x1=\"" + detail::fmt_coord(ml) + "\" y1=\"" + detail::fmt_coord(mt + ph) +
           "\" x2=\"" + detail::fmt_coord(ml + pw) + "\" y2=\"" + detail::fmt_coord(mt + ph) +
           "\" stroke=\"black\"/>\n";
    // min/max tick labels
    out += "  <text x=\"" + detail::fmt_coord(ml) + "\" y=\"" + detail::fmt_coord(mt + ph + 18) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
           detail::fmt_tick(x_min) + "</text>\n";
    out += "  <text x=\"" + detail::fmt_coord(ml + pw) + "\" y=\"" +
           detail::fmt_coord(mt + ph + 18) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
           detail::fmt_tick(x_max) + "</text>\n";
    out += "  <text x=\"" + detail::fmt_coord(ml - 6) + "\" y=\"" + detail::fmt_coord(mt + ph) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
           detail::fmt_tick(y_min) + "</text>\n";
    out += "  <text x=\"" + detail::fmt_coord(ml - 6) + "\" y=\"" + detail::fmt_coord(mt + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
           detail::fmt_tick(y_max) + "</text>\n";
    // axis labels
    out += "  <text x=\"" + detail::fmt_coord(ml + pw / 2) + "\" y=\"" +
           detail::fmt_coord(height - 10) +
           "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" + x_label +
           "</text>\n";
    out += "  <text x=\"16\" y=\"" + detail::fmt_coord(mt + ph / 2) +
           "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
           "transform=\"rotate(-90 16 " + detail::fmt_coord(mt + ph / 2) + ")\">" + y_label +
           "</text>\n";

    if (vline_x) {
        const double x = sx(*vline_x);
        out += "  <line x1=\"" + detail::fmt_coord(x) + "\" y1=\"" + detail::fmt_coord(mt) +
               "\" x2=\"" + detail::fmt_coord(x) + "\" y2=\"" + detail::fmt_coord(mt + ph) +
               "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    }

    double legend_y = mt + 14.0;
    for (const ChartSeries& s : series) {
        out += "  <polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.8\" points=\"";
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            if (i) out += " ";
            out += detail::fmt_coord(sx(s.points[i].first)) + "," +
                   detail::fmt_coord(sy(s.points[i].second));
        }
        out += "\"/>\n";
        out += "  <line x1=\"" + detail::fmt_coord(ml + pw - 150) + "\" y1=\"" +
               detail::fmt_coord(legend_y - 4) + "\" x2=\"" + detail::fmt_coord(ml + pw - 126) +
               "\" y2=\"" + detail::fmt_coord(legend_y - 4) + "\" stroke=\"" + s.color +
               "\" stroke-width=\"1.8\"/>\n";
        out += "  <text x=\"" + detail::fmt_coord(ml + pw - 120) + "\" y=\"" +
               detail::fmt_coord(legend_y) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + s.label + "</text>\n";
        legend_y += 16.0;
    }
    out += "</svg>\n";
    return out;
}

} // namespace epiwarn
