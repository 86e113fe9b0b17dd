#include <gtest/gtest.h>

#include "blockforge/features.hpp"
#include "blockforge/render.hpp"

using namespace blockforge;

namespace {

int count(const std::string& text, const std::string& needle) {
  int n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::string group(const std::string& svg, const std::string& id) {
  const std::size_t start = svg.find("<g id=\"" + id + "\">");
  if (start == std::string::npos) return {};
  return svg.substr(start, svg.find("</g>", start) - start);
}

Placement square_at(double x, double z) { return make_placement(make_shape(ShapeKind::square), {x, z, 0.0}); }

}  // namespace

TEST(RenderAssembly, ElementClasses) {
  Task t;
  t.id = "r";
  t.targets = {{0.0, 2.4}, {1.0, 3.0}};
  t.obstacles = {{{3.0, 0.5}, 0.5}};
  t.shapes = {make_shape(ShapeKind::square)};
  const Assembly s{{square_at(0.0, 0.5), square_at(0.0, 1.5)}};
  const std::string svg = render_assembly_svg(t, s, {square_at(-2.0, 0.5)}, {40.0, "a & b"});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(count(svg, "class=\"block\""), 2);
  EXPECT_EQ(count(svg, "class=\"target\""), 2);
  EXPECT_EQ(count(svg, "class=\"obstacle\""), 1);
  EXPECT_EQ(count(svg, "class=\"highlight\""), 1);
  EXPECT_NE(svg.find("a &amp; b"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(RenderPsi, FivePanelsPerRowAndBlankEmptyState) {
  const int d = 16;
  PsiPanelRow row;
  row.step = 0;
  row.state = state_features({}, d);
  row.action = rasterize_action(square_at(0.0, 0.5), d);
  row.obstacles = FeatureImage(d);
  row.reward = FeatureImage(d, -0.5);
  row.psi = FeatureImage(d);
  row.psi.at(3, 4) = 2.0;
  PsiPanelRow second = row;
  second.step = 1;
  const std::string svg = render_psi_panels_svg({row, second}, "demo");
  for (const char* name : {"state", "action", "obstacles", "reward", "psi"}) {
    EXPECT_FALSE(group(svg, std::string("panel-") + name + "-0").empty()) << name;
    EXPECT_FALSE(group(svg, std::string("panel-") + name + "-1").empty()) << name;
  }
  EXPECT_EQ(count(group(svg, "panel-state-0"), "<rect"), 1);
  EXPECT_EQ(count(group(svg, "panel-obstacles-0"), "<rect"), 1);
  EXPECT_GT(count(group(svg, "panel-action-0"), "<rect"), 1);
  EXPECT_NE(svg.find("min=0.000 max=2.000"), std::string::npos);
}
