#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "resnls/errors.hpp"
#include "resnls/svg.hpp"

using namespace resnls;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_of(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

ChartSeries ramp(const std::string& label, double slope) {
    ChartSeries s{label, "", {}, {}};
    for (int i = 0; i < 10; ++i) {
        s.xs.push_back(i);
        s.ys.push_back(slope * i);
    }
    return s;
}

}  // namespace

TEST_SUITE("svg") {

TEST_CASE("chart is a standalone svg with one polyline per series") {
    TempFile f("svg_two_series.svg");
    write_line_chart(f.path, "losses", "epoch", "mse",
                     {ramp("train", 1.0), ramp("test", 2.0)});
    const std::string svg = slurp(f.path);

    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("xmlns=\"http://www.w3.org/2000/svg\"") != std::string::npos);
    CHECK(count_of(svg, "<polyline") == 2);
    CHECK(svg.find(">losses</text>") != std::string::npos);
    CHECK(svg.find(">epoch</text>") != std::string::npos);
    CHECK(svg.find(">mse</text>") != std::string::npos);
    // legend rows carry the series labels
    CHECK(svg.find(">train</text>") != std::string::npos);
    CHECK(svg.find(">test</text>") != std::string::npos);
    // closing tag, so the document is well formed enough for a viewer
    CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("axis ticks cover the data range") {
    TempFile f("svg_ticks.svg");
    ChartSeries s{"s", "", {0, 50, 100}, {0, 5, 10}};
    write_line_chart(f.path, "t", "x", "y", {s});
    const std::string svg = slurp(f.path);
    // 6 tick labels per axis; the extremes of x show up verbatim
    CHECK(svg.find(">0</text>") != std::string::npos);
    CHECK(svg.find(">100</text>") != std::string::npos);
    CHECK(svg.find(">60</text>") != std::string::npos);
}

TEST_CASE("explicit series colors are used, missing ones come from a palette") {
    TempFile f("svg_colors.svg");
    ChartSeries custom = ramp("custom", 1.0);
    custom.color = "#123456";
    write_line_chart(f.path, "t", "x", "y", {custom, ramp("auto", 2.0)});
    const std::string svg = slurp(f.path);
    CHECK(svg.find("stroke=\"#123456\"") != std::string::npos);
    CHECK(svg.find("stroke=\"#d62728\"") != std::string::npos);
}

TEST_CASE("identical inputs write identical bytes") {
    TempFile a("svg_det_a.svg");
    TempFile b("svg_det_b.svg");
    const std::vector<ChartSeries> series = {ramp("one", 0.3),
                                              ramp("two", -1.7)};
    write_line_chart(a.path, "t", "x", "y", series);
    write_line_chart(b.path, "t", "x", "y", series);
    CHECK(slurp(a.path) == slurp(b.path));
}

TEST_CASE("flat and single-point series still produce a finite layout") {
    TempFile f("svg_flat.svg");
    ChartSeries flat{"flat", "", {0, 1, 2}, {4.0, 4.0, 4.0}};
    ChartSeries dot{"dot", "", {1}, {4.0}};
    write_line_chart(f.path, "t", "x", "y", {flat, dot});
    const std::string svg = slurp(f.path);
    CHECK(svg.find("nan") == std::string::npos);
    CHECK(svg.find("inf") == std::string::npos);
}

TEST_CASE("markup characters in labels are escaped") {
    TempFile f("svg_escape.svg");
    write_line_chart(f.path, "a < b & c > d", "x", "y", {ramp("s", 1.0)});
    const std::string svg = slurp(f.path);
    CHECK(svg.find("a &lt; b &amp; c &gt; d") != std::string::npos);
    CHECK(svg.find("a < b") == std::string::npos);
}

TEST_CASE("bad inputs are rejected before anything is written") {
    TempFile f("svg_reject.svg");
    CHECK_THROWS_AS(write_line_chart(f.path, "t", "x", "y", {}),
                    ContractError);
    ChartSeries lop{"lop", "", {1, 2, 3}, {1, 2}};
    CHECK_THROWS_AS(write_line_chart(f.path, "t", "x", "y", {lop}),
                    ContractError);
    ChartSeries hollow{"hollow", "", {}, {}};
    CHECK_THROWS_AS(write_line_chart(f.path, "t", "x", "y", {hollow}),
                    ContractError);
    std::ifstream probe(f.path);
    CHECK_FALSE(probe.good());

    CHECK_THROWS_AS(write_line_chart("/nonexistent-dir/x.svg", "t", "x", "y",
                                     {ramp("s", 1.0)}),
                    DataError);
}

}  // TEST_SUITE
