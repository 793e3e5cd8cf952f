#include "wake/svg.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

using wake::DivergenceRow;
using wake::LandscapeGrid;
using wake::PointXY;
using wake::svg::Series;

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

Series line_series(const std::string& label) {
  Series s;
  s.label = label;
  for (int i = 0; i < 5; ++i)
    s.points.push_back({1.0 + i, 0.5 * i - 1.0});
  return s;
}

TEST(SvgScalingTest, EmitsWellFormedStandaloneDocument) {
  const std::string doc =
      wake::svg::render_scaling({line_series("fit")}, "scaling law", "S / D",
                                "x* / D");
  EXPECT_EQ(doc.rfind("<?xml version=\"1.0\" encoding=\"UTF-8\"?>", 0), 0u);
  EXPECT_NE(doc.find("<svg"), std::string::npos);
  EXPECT_NE(doc.find("</svg>"), std::string::npos);
  EXPECT_NE(doc.find("scaling law"), std::string::npos);
  EXPECT_NE(doc.find("S / D"), std::string::npos);
  EXPECT_NE(doc.find("x* / D"), std::string::npos);
  EXPECT_EQ(count_of(doc, "<polyline"), 1u);
  EXPECT_EQ(count_of(doc, "<circle"), 5u);
}

TEST(SvgScalingTest, OutputIsByteDeterministic) {
  const std::vector<Series> series = {line_series("a"), line_series("b")};
  const std::string a =
      wake::svg::render_scaling(series, "t", "x", "y");
  const std::string b =
      wake::svg::render_scaling(series, "t", "x", "y");
  EXPECT_EQ(a, b);
}

TEST(SvgScalingTest, SeriesGetDistinctColorsAndLegendEntries) {
  Series s2;
  s2.label = "measured";
  for (int i = 0; i < 4; ++i) s2.points.push_back({2.0 + i, 1.0 + 0.3 * i});
  const std::string doc = wake::svg::render_scaling(
      {line_series("model"), s2}, "both", "x", "y");
  EXPECT_NE(doc.find("#1f77b4"), std::string::npos);
  EXPECT_NE(doc.find("#d62728"), std::string::npos);
  EXPECT_NE(doc.find("model"), std::string::npos);
  EXPECT_NE(doc.find("measured"), std::string::npos);
  EXPECT_EQ(count_of(doc, "<polyline"), 2u);
}

TEST(SvgScalingTest, SinglePointSeriesSkipsThePolyline) {
  Series s;
  s.label = "one";
  s.points.push_back({1.0, 2.0});
  const std::string doc = wake::svg::render_scaling({s}, "t", "x", "y");
  EXPECT_EQ(count_of(doc, "<polyline"), 0u);
  EXPECT_EQ(count_of(doc, "<circle"), 1u);
}

TEST(SvgScalingTest, MarkupCharactersAreEscaped) {
  Series s = line_series("u<2 & v>3");
  const std::string doc =
      wake::svg::render_scaling({s}, "a<b>c", "x&y", "y");
  EXPECT_EQ(doc.find("u<2"), std::string::npos);
  EXPECT_NE(doc.find("u&lt;2 &amp; v&gt;3"), std::string::npos);
  EXPECT_NE(doc.find("a&lt;b&gt;c"), std::string::npos);
  EXPECT_NE(doc.find("x&amp;y"), std::string::npos);
}

TEST(SvgScalingTest, RejectsEmptyInput) {
  EXPECT_THROW(wake::svg::render_scaling({}, "t", "x", "y"),
               std::invalid_argument);
  Series empty;
  empty.label = "none";
  EXPECT_THROW(wake::svg::render_scaling({empty}, "t", "x", "y"),
               std::invalid_argument);
}

LandscapeGrid small_grid() {
  LandscapeGrid g;
  g.spacings = {3.5, 5.0};
  g.stations = {0.5, 0.65, 0.8};
  g.values = {{0.41, 0.42, std::numeric_limits<double>::quiet_NaN()},
              {0.43, std::numeric_limits<double>::quiet_NaN(), 0.44}};
  return g;
}

TEST(SvgHeatmapTest, PaintsOneCellPerGridEntry) {
  const std::string doc =
      wake::svg::render_heatmap(small_grid(), "landscape", "x_p / D", "S / D");
  EXPECT_EQ(doc.rfind("<?xml", 0), 0u);
  // 6 cells plus the white background rectangle.
  EXPECT_EQ(count_of(doc, "<rect"), 7u);
  EXPECT_NE(doc.find("landscape"), std::string::npos);
}

TEST(SvgHeatmapTest, AbsentCellsUseTheNeutralFill) {
  const std::string doc =
      wake::svg::render_heatmap(small_grid(), "t", "x", "y");
  EXPECT_EQ(count_of(doc, "#dddddd"), 2u);
}

TEST(SvgHeatmapTest, IsDeterministicAndRejectsEmptyGrids) {
  const std::string a = wake::svg::render_heatmap(small_grid(), "t", "x", "y");
  const std::string b = wake::svg::render_heatmap(small_grid(), "t", "x", "y");
  EXPECT_EQ(a, b);
  EXPECT_THROW(wake::svg::render_heatmap(LandscapeGrid{}, "t", "x", "y"),
               std::invalid_argument);
}

TEST(SvgHeatmapTest, ConstantGridStillRenders) {
  LandscapeGrid g;
  g.spacings = {4.0};
  g.stations = {0.5, 0.65};
  g.values = {{0.3, 0.3}};
  const std::string doc = wake::svg::render_heatmap(g, "flat", "x", "y");
  EXPECT_NE(doc.find("</svg>"), std::string::npos);
}

TEST(SvgDivergenceTest, PlotsOneMarkerPerRow) {
  std::vector<DivergenceRow> rows;
  for (int i = 0; i < 7; ++i)
    rows.push_back({3.5 + i, 0.5, 2.0, 1.5 + 0.2 * i});
  const std::string doc = wake::svg::render_divergence(rows, "divergence");
  EXPECT_EQ(count_of(doc, "<circle"), 7u);
  EXPECT_NE(doc.find("|dx*| / D"), std::string::npos);
  EXPECT_THROW(wake::svg::render_divergence({}, "t"), std::invalid_argument);
}

}  // namespace
