#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "drgrade/error.hpp"

namespace drgrade::svg {

struct Series {
    std::string label;
    std::string color;
    std::vector<double> x, y;
};

namespace detail {

inline std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Frame {
    double width = 640, height = 400, left = 60, right = 20, top = 30, bottom = 50;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::string axes(const Frame& f, const std::string& title, const std::string& xlabel, const std::string& ylabel)
{
    std::string s;
    s += "<rect x=\"0\" y=\"0\" width=\"" + num(f.width) + "\" height=\"" + num(f.height) + "\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(f.width / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
         "</text>\n";
    s += "<line x1=\"" + num(f.left) + "\" y1=\"" + num(f.py(f.y0)) + "\" x2=\"" + num(f.width - f.right) +
         "\" y2=\"" + num(f.py(f.y0)) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(f.left) + "\" y1=\"" + num(f.top) + "\" x2=\"" + num(f.left) + "\" y2=\"" +
         num(f.py(f.y0)) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = f.y0 + (f.y1 - f.y0) * i / 4.0;
        s += "<text x=\"" + num(f.left - 6) + "\" y=\"" + num(f.py(v) + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
             num(v) + "</text>\n";
    }
    s += "<text x=\"" + num(f.width / 2) + "\" y=\"" + num(f.height - 10) + "\" text-anchor=\"middle\" font-size=\"12\">" +
         escape(xlabel) + "</text>\n";
    s += "<text x=\"14\" y=\"" + num(f.height / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " +
         num(f.height / 2) + ")\">" + escape(ylabel) + "</text>\n";
    return s;
}

inline std::string open(const Frame& f)
{
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(f.width) + "\" height=\"" + num(f.height) +
           "\" viewBox=\"0 0 " + num(f.width) + " " + num(f.height) + "\">\n";
}

} // namespace detail

/// Line chart. The y range is fixed to [-1, 1] when `kappa_axis` is set,
/// otherwise fitted to the data.
inline std::string line_chart(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                              const std::string& ylabel, bool kappa_axis = true)
{
    require(!series.empty(), "svg: no series");
    detail::Frame f;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        require(s.x.size() == s.y.size(), "svg: series x/y length mismatch");
        for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
        for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    }
    if (xmin > xmax) xmin = 0, xmax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    f.x0 = xmin, f.x1 = xmax;
    if (kappa_axis) {
        f.y0 = std::min(0.0, std::floor(ymin * 10) / 10), f.y1 = 1.0;
    } else {
        if (ymin > ymax) ymin = 0, ymax = 1;
        if (ymax == ymin) ymax = ymin + 1;
        f.y0 = ymin, f.y1 = ymax;
    }
    std::string out = detail::open(f) + detail::axes(f, title, xlabel, ylabel);
    double legend_y = f.top + 10;
    for (const auto& s : series) {
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i) pts += detail::num(f.px(s.x[i])) + "," + detail::num(f.py(s.y[i])) + " ";
        out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        out += "<text x=\"" + detail::num(f.width - f.right - 4) + "\" y=\"" + detail::num(legend_y) +
               "\" text-anchor=\"end\" font-size=\"11\" fill=\"" + s.color + "\">" + detail::escape(s.label) + "</text>\n";
        legend_y += 14;
    }
    return out + "</svg>\n";
}

struct BoxStats {
    double min, q1, median, q3, max;
};

/// Quartiles by linear interpolation between order statistics.
inline BoxStats box_stats(std::vector<double> v)
{
    require(!v.empty(), "svg: box of no values");
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(v.size() - 1, lo + 1);
        return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
    };
    return {v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

struct BoxGroup {
    std::string label;
    std::vector<double> values;
};

inline std::string box_plot(const std::vector<BoxGroup>& groups, const std::string& title, const std::string& ylabel)
{
    require(!groups.empty(), "svg: no box groups");
    detail::Frame f;
    double ymin = 1e300, ymax = -1e300;
    for (const auto& g : groups)
        for (double v : g.values) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    if (ymin > ymax) ymin = 0, ymax = 1;
    const double pad = std::max(0.01, 0.1 * (ymax - ymin));
    f.y0 = ymin - pad, f.y1 = ymax + pad;
    f.x0 = 0, f.x1 = static_cast<double>(groups.size());
    std::string out = detail::open(f) + detail::axes(f, title, "component", ylabel);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const double cx = f.px(i + 0.5), half = 0.3 * (f.px(1) - f.px(0));
        out += "<text x=\"" + detail::num(cx) + "\" y=\"" + detail::num(f.py(f.y0) + 16) +
               "\" text-anchor=\"middle\" font-size=\"11\">" + detail::escape(groups[i].label) + "</text>\n";
        if (groups[i].values.empty()) continue;
        const BoxStats b = box_stats(groups[i].values);
        out += "<line x1=\"" + detail::num(cx) + "\" y1=\"" + detail::num(f.py(b.min)) + "\" x2=\"" + detail::num(cx) +
               "\" y2=\"" + detail::num(f.py(b.max)) + "\" stroke=\"black\"/>\n";
        out += "<rect x=\"" + detail::num(cx - half) + "\" y=\"" + detail::num(f.py(b.q3)) + "\" width=\"" +
               detail::num(2 * half) + "\" height=\"" + detail::num(std::max(1.0, f.py(b.q1) - f.py(b.q3))) +
               "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
        for (double v : {b.min, b.median, b.max})
            out += "<line x1=\"" + detail::num(cx - half) + "\" y1=\"" + detail::num(f.py(v)) + "\" x2=\"" +
                   detail::num(cx + half) + "\" y2=\"" + detail::num(f.py(v)) + "\" stroke=\"black\"/>\n";
    }
    return out + "</svg>\n";
}

} // namespace drgrade::svg
