#include "resnls/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "resnls/errors.hpp"

namespace resnls {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<ChartSeries>& series,
                      std::size_t width, std::size_t height) {
    if (series.empty()) {
        throw ContractError("chart needs at least one series");
    }
    double x_min = std::numeric_limits<double>::infinity();
    double x_max = -x_min, y_min = x_min, y_max = -x_min;
    for (const ChartSeries& s : series) {
        if (s.xs.size() != s.ys.size()) {
            throw ContractError("series '" + s.label + "' has " +
                                std::to_string(s.xs.size()) + " xs but " +
                                std::to_string(s.ys.size()) + " ys");
        }
        if (s.xs.empty()) {
            throw ContractError("series '" + s.label + "' is empty");
        }
        for (double v : s.xs) {
            x_min = std::min(x_min, v);
            x_max = std::max(x_max, v);
        }
        for (double v : s.ys) {
            y_min = std::min(y_min, v);
            y_max = std::max(y_max, v);
        }
    }
    if (x_min == x_max) {
        x_min -= 1.0;
        x_max += 1.0;
    }
    if (y_min == y_max) {
        y_min -= 1.0;
        y_max += 1.0;
    }
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const double ml = 70.0, mr = 20.0, mt = 40.0, mb = 50.0;
    const double w = static_cast<double>(width);
    const double h = static_cast<double>(height);
    const double plot_w = w - ml - mr;
    const double plot_h = h - mt - mb;
    auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * plot_w; };
    auto py = [&](double y) { return mt + (y_max - y) / (y_max - y_min) * plot_h; };

    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw DataError("cannot write chart to '" + path + "'");
    }
    std::fprintf(f,
                 "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%zu\" "
                 "height=\"%zu\" viewBox=\"0 0 %zu %zu\" "
                 "font-family=\"sans-serif\" font-size=\"12\">\n",
                 width, height, width, height);
    std::fprintf(f, "<rect width=\"%zu\" height=\"%zu\" fill=\"white\"/>\n",
                 width, height);
    std::fprintf(f,
                 "<text x=\"%.1f\" y=\"22\" text-anchor=\"middle\" "
                 "font-size=\"15\">%s</text>\n",
                 w / 2.0, escape(title).c_str());

    // gridlines and ticks, 5 intervals each way
    for (int i = 0; i <= 5; ++i) {
        const double xt = x_min + (x_max - x_min) * i / 5.0;
        const double yt = y_min + (y_max - y_min) * i / 5.0;
        std::fprintf(f,
                     "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                     "stroke=\"#dddddd\"/>\n",
                     px(xt), mt, px(xt), mt + plot_h);
        std::fprintf(f,
                     "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                     "stroke=\"#dddddd\"/>\n",
                     ml, py(yt), ml + plot_w, py(yt));
        std::fprintf(f,
                     "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\">"
                     "%s</text>\n",
                     px(xt), mt + plot_h + 18.0, fmt(xt).c_str());
        std::fprintf(f,
                     "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"end\">"
                     "%s</text>\n",
                     ml - 8.0, py(yt) + 4.0, fmt(yt).c_str());
    }
    std::fprintf(f,
                 "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                 "fill=\"none\" stroke=\"#333333\"/>\n",
                 ml, mt, plot_w, plot_h);
    std::fprintf(f,
                 "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s"
                 "</text>\n",
                 ml + plot_w / 2.0, h - 12.0, escape(x_label).c_str());
    std::fprintf(f,
                 "<text x=\"16\" y=\"%.1f\" text-anchor=\"middle\" "
                 "transform=\"rotate(-90 16 %.1f)\">%s</text>\n",
                 mt + plot_h / 2.0, mt + plot_h / 2.0, escape(y_label).c_str());

    for (std::size_t i = 0; i < series.size(); ++i) {
        const ChartSeries& s = series[i];
        const std::string color =
            s.color.empty() ? kPalette[i % 6] : s.color;
        std::fprintf(f,
                     "<polyline fill=\"none\" stroke=\"%s\" "
                     "stroke-width=\"1.5\" points=\"",
                     color.c_str());
        for (std::size_t j = 0; j < s.xs.size(); ++j) {
            std::fprintf(f, "%s%.2f,%.2f", j ? " " : "", px(s.xs[j]),
                         py(s.ys[j]));
        }
        std::fprintf(f, "\"/>\n");

        // legend row
        const double ly = mt + 14.0 + 16.0 * static_cast<double>(i);
        std::fprintf(f,
                     "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                     "stroke=\"%s\" stroke-width=\"2\"/>\n",
                     ml + plot_w - 150.0, ly, ml + plot_w - 126.0, ly,
                     color.c_str());
        std::fprintf(f, "<text x=\"%.1f\" y=\"%.1f\">%s</text>\n",
                     ml + plot_w - 120.0, ly + 4.0, escape(s.label).c_str());
    }
    std::fprintf(f, "</svg>\n");
    std::fclose(f);
}

}  // namespace resnls
