#pragma once

#include <string>
#include <vector>

namespace resnls {

struct ChartSeries {
    std::string label;
    std::string color;  // css color; empty picks from a default palette
    std::vector<double> xs;
    std::vector<double> ys;
};

// Writes a standalone SVG line chart: axes with ticks, one polyline per
// series, a legend. Output is deterministic for identical inputs.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<ChartSeries>& series,
                      std::size_t width = 860, std::size_t height = 480);

}  // namespace resnls
