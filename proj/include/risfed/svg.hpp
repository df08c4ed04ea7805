#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "risfed/core.hpp"
#include "risfed/io.hpp"

namespace risfed {

// Minimal static SVG emitters for the report plots. Output is fully
// deterministic: fixed canvas, fixed palette, no timestamps.
namespace svg {

struct Canvas {
    int width = 640, height = 420;
    int left = 70, right = 30, top = 40, bottom = 60;

    int plot_w() const { return width - left - right; }
    int plot_h() const { return height - top - bottom; }
    double x_at(double frac) const { return left + frac * plot_w(); }
    double y_at(double frac) const { return top + (1.0 - frac) * plot_h(); }
};

inline const char* palette(size_t i) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    return colors[i % 8];
}

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline void header(std::string& out, const Canvas& c, const std::string& title) {
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           std::to_string(c.width) + "\" height=\"" + std::to_string(c.height) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + std::to_string(c.width / 2) +
           "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">" +
           title + "</text>\n";
}

inline void axes(std::string& out, const Canvas& c, double y_lo, double y_hi,
                 const std::string& y_label) {
    out += "<line x1=\"" + std::to_string(c.left) + "\" y1=\"" + std::to_string(c.top) +
           "\" x2=\"" + std::to_string(c.left) + "\" y2=\"" +
           std::to_string(c.top + c.plot_h()) + "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + std::to_string(c.left) + "\" y1=\"" +
           std::to_string(c.top + c.plot_h()) + "\" x2=\"" +
           std::to_string(c.left + c.plot_w()) + "\" y2=\"" +
           std::to_string(c.top + c.plot_h()) + "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        double frac = tick / 4.0;
        double y = c.y_at(frac);
        out += "<text x=\"" + std::to_string(c.left - 8) + "\" y=\"" + num(y + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
               num(y_lo + frac * (y_hi - y_lo)) + "</text>\n";
        out += "<line x1=\"" + std::to_string(c.left - 4) + "\" y1=\"" + num(y) +
               "\" x2=\"" + std::to_string(c.left) + "\" y2=\"" + num(y) +
               "\" stroke=\"black\"/>\n";
    }
    out += "<text x=\"16\" y=\"" + std::to_string(c.top + c.plot_h() / 2) +
           "\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
           std::to_string(c.top + c.plot_h() / 2) + ")\" text-anchor=\"middle\">" +
           y_label + "</text>\n";
}

struct BoxStat {
    std::string label;
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

inline std::string box_plot(const std::string& title, const std::vector<BoxStat>& boxes,
                            double y_lo, double y_hi, const std::string& y_label) {
    Canvas c;
    std::string out;
    header(out, c, title);
    axes(out, c, y_lo, y_hi, y_label);
    double span = y_hi - y_lo > 0 ? y_hi - y_lo : 1.0;
    auto ypix = [&](double v) { return c.y_at((v - y_lo) / span); };
    double slot = static_cast<double>(c.plot_w()) / std::max<size_t>(boxes.size(), 1);
    for (size_t i = 0; i < boxes.size(); ++i) {
        const BoxStat& b = boxes[i];
        double cx = c.left + (i + 0.5) * slot;
        double half = slot * 0.22;
        const char* color = palette(i);
        out += "<line x1=\"" + num(cx) + "\" y1=\"" + num(ypix(b.min)) + "\" x2=\"" +
               num(cx) + "\" y2=\"" + num(ypix(b.max)) + "\" stroke=\"black\"/>\n";
        for (double w : {b.min, b.max})
            out += "<line x1=\"" + num(cx - half / 2) + "\" y1=\"" + num(ypix(w)) +
                   "\" x2=\"" + num(cx + half / 2) + "\" y2=\"" + num(ypix(w)) +
                   "\" stroke=\"black\"/>\n";
        out += "<rect x=\"" + num(cx - half) + "\" y=\"" + num(ypix(b.q3)) +
               "\" width=\"" + num(2 * half) + "\" height=\"" +
               num(std::max(1.0, ypix(b.q1) - ypix(b.q3))) + "\" fill=\"" + color +
               "\" fill-opacity=\"0.5\" stroke=\"black\"/>\n";
        out += "<line x1=\"" + num(cx - half) + "\" y1=\"" + num(ypix(b.median)) +
               "\" x2=\"" + num(cx + half) + "\" y2=\"" + num(ypix(b.median)) +
               "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + num(cx) + "\" y=\"" +
               std::to_string(c.top + c.plot_h() + 18) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
               b.label + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

struct BarGroup {
    std::string label;
    std::vector<double> values;  // one bar per series
};

inline std::string bar_chart(const std::string& title,
                             const std::vector<std::string>& series,
                             const std::vector<BarGroup>& groups, double y_hi,
                             const std::string& y_label) {
    Canvas c;
    std::string out;
    header(out, c, title);
    axes(out, c, 0.0, y_hi, y_label);
    double slot = static_cast<double>(c.plot_w()) / std::max<size_t>(groups.size(), 1);
    for (size_t g = 0; g < groups.size(); ++g) {
        double gx = c.left + g * slot;
        double bw = slot * 0.8 / std::max<size_t>(series.size(), 1);
        for (size_t s = 0; s < groups[g].values.size(); ++s) {
            double v = groups[g].values[s];
            double y = c.y_at(v / (y_hi > 0 ? y_hi : 1.0));
            out += "<rect x=\"" + num(gx + slot * 0.1 + s * bw) + "\" y=\"" + num(y) +
                   "\" width=\"" + num(bw * 0.9) + "\" height=\"" +
                   num(c.top + c.plot_h() - y) + "\" fill=\"" + palette(s) + "\"/>\n";
        }
        out += "<text x=\"" + num(gx + slot / 2) + "\" y=\"" +
               std::to_string(c.top + c.plot_h() + 18) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
               groups[g].label + "</text>\n";
    }
    for (size_t s = 0; s < series.size(); ++s) {
        double y = c.top + 14.0 * s;
        out += "<rect x=\"" + std::to_string(c.left + c.plot_w() - 150) + "\" y=\"" +
               num(y) + "\" width=\"10\" height=\"10\" fill=\"" + palette(s) + "\"/>\n";
        out += "<text x=\"" + std::to_string(c.left + c.plot_w() - 135) + "\" y=\"" +
               num(y + 9) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
               series[s] + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;  // (x, y), x ascending
    bool dashed = false;
};

inline std::string line_chart(const std::string& title, const std::vector<Series>& lines,
                              const std::string& x_label, const std::string& y_label) {
    Canvas c;
    double x_lo = 1e300, x_hi = -1e300, y_lo = 0.0, y_hi = -1e300;
    for (const auto& s : lines)
        for (auto [x, y] : s.points) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_hi = std::max(y_hi, y);
        }
    if (x_hi <= x_lo) x_hi = x_lo + 1.0;
    if (y_hi <= y_lo) y_hi = y_lo + 1.0;
    y_hi *= 1.05;

    Canvas cv;
    std::string out;
    header(out, cv, title);
    axes(out, cv, y_lo, y_hi, y_label);
    for (size_t s = 0; s < lines.size(); ++s) {
        std::string path;
        for (size_t i = 0; i < lines[s].points.size(); ++i) {
            auto [x, y] = lines[s].points[i];
            double px = cv.x_at((x - x_lo) / (x_hi - x_lo));
            double py = cv.y_at((y - y_lo) / (y_hi - y_lo));
            path += (i == 0 ? "M" : "L") + num(px) + " " + num(py);
            out += "<circle cx=\"" + num(px) + "\" cy=\"" + num(py) +
                   "\" r=\"3\" fill=\"" + palette(s) + "\"/>\n";
        }
        out += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" +
               std::string(palette(s)) + "\" stroke-width=\"1.5\"" +
               (lines[s].dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
        double ly = cv.top + 14.0 * s;
        out += "<rect x=\"" + std::to_string(cv.left + 8) + "\" y=\"" + num(ly) +
               "\" width=\"10\" height=\"10\" fill=\"" + palette(s) + "\"/>\n";
        out += "<text x=\"" + std::to_string(cv.left + 22) + "\" y=\"" + num(ly + 9) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + lines[s].label +
               "</text>\n";
    }
    for (int tick = 0; tick <= 4; ++tick) {
        double frac = tick / 4.0;
        double x = cv.x_at(frac);
        out += "<text x=\"" + num(x) + "\" y=\"" +
               std::to_string(cv.top + cv.plot_h() + 18) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
               num(x_lo + frac * (x_hi - x_lo)) + "</text>\n";
    }
    out += "<text x=\"" + std::to_string(cv.left + cv.plot_w() / 2) + "\" y=\"" +
           std::to_string(cv.height - 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           x_label + "</text>\n";
    out += "</svg>\n";
    return out;
}

}  // namespace svg
}  // namespace risfed
