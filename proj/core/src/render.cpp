#include "blockforge/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace blockforge {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#b07aa1", "#76b7b2", "#edc948"};

// Blue-white-red ramp for signed values, white-to-black for binary masks.
std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int level = static_cast<int>(std::lround(t * 63.0));
  const double u = level / 63.0;
  int r, g, b;
  if (u < 0.5) {
    const double s = u / 0.5;
    r = static_cast<int>(std::lround(59 + s * (255 - 59)));
    g = static_cast<int>(std::lround(76 + s * (255 - 76)));
    b = static_cast<int>(std::lround(192 + s * (255 - 192)));
  } else {
    const double s = (u - 0.5) / 0.5;
    r = static_cast<int>(std::lround(255 + s * (180 - 255)));
    g = static_cast<int>(std::lround(255 + s * (4 - 255)));
    b = static_cast<int>(std::lround(255 + s * (38 - 255)));
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

// Pixel grid drawn as merged horizontal runs of equal colour. When `binary`
// is set, zero pixels are skipped and non-zero pixels are black.
void heatmap(std::ostringstream& out, const FeatureImage& img, double x0, double y0, double size, bool binary,
             double lo, double hi) {
  const int d = img.d();
  const double px = size / d;
  out << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(size) << "\" height=\"" << fmt(size)
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (int j = 0; j < d; ++j) {
    const double y = y0 + (d - 1 - j) * px;
    int i = 0;
    while (i < d) {
      const double v = img.at(i, j);
      if (binary && v == 0.0) {
        ++i;
        continue;
      }
      const std::string color = binary ? std::string("#111111") : heat_color((v - lo) / span);
      int k = i + 1;
      while (k < d) {
        const double w = img.at(k, j);
        const bool same = binary ? w != 0.0 : heat_color((w - lo) / span) == color;
        if (!same) break;
        ++k;
      }
      out << "<rect x=\"" << fmt(x0 + i * px) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt((k - i) * px)
          << "\" height=\"" << fmt(px) << "\" fill=\"" << color << "\"/>\n";
      i = k;
    }
  }
}

}  // namespace

std::string render_assembly_svg(const Task& task, const Assembly& assembly, const std::vector<Placement>& highlight,
                                const SvgOptions& options) {
  const ConstructionSpace sp;
  const double s = options.scale;
  const double margin = 10.0;
  const double header = options.title.empty() ? 0.0 : 24.0;
  const double w = (sp.x_max - sp.x_min) * s + 2 * margin;
  const double h = (sp.z_max - sp.z_min) * s + 2 * margin + header;
  auto X = [&](double x) { return margin + (x - sp.x_min) * s; };
  auto Z = [&](double z) { return h - margin - (z - sp.z_min) * s; };
  auto points = [&](const Polygon& poly) {
    std::string pts;
    for (const Vec2& v : poly) pts += fmt(X(v.x)) + "," + fmt(Z(v.z)) + " ";
    if (!pts.empty()) pts.pop_back();
    return pts;
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
      << "\" viewBox=\"0 0 " << fmt(w) << " " << fmt(h) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!options.title.empty()) {
    out << "<text x=\"" << fmt(margin) << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">"
        << escape(options.title) << "</text>\n";
  }
  out << "<rect class=\"space\" x=\"" << fmt(X(sp.x_min)) << "\" y=\"" << fmt(Z(sp.z_max)) << "\" width=\""
      << fmt((sp.x_max - sp.x_min) * s) << "\" height=\"" << fmt((sp.z_max - sp.z_min) * s)
      << "\" fill=\"none\" stroke=\"#bbb\"/>\n";
  out << "<line class=\"floor\" x1=\"" << fmt(X(sp.x_min)) << "\" y1=\"" << fmt(Z(0)) << "\" x2=\"" << fmt(X(sp.x_max))
      << "\" y2=\"" << fmt(Z(0)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  for (const Obstacle& o : task.obstacles) {
    out << "<polygon class=\"obstacle\" points=\"" << points(o.polygon()) << "\" fill=\"#9a9a9a\" stroke=\"#555\"/>\n";
  }
  for (std::size_t k = 0; k < assembly.placements.size(); ++k) {
    const Placement& p = assembly.placements[k];
    out << "<polygon class=\"block\" points=\"" << points(world_polygon(p)) << "\" fill=\""
        << kPalette[static_cast<std::size_t>(p.shape_id) % std::size(kPalette)]
        << "\" fill-opacity=\"0.85\" stroke=\"black\"/>\n";
  }
  for (const Placement& p : highlight) {
    out << "<polygon class=\"highlight\" points=\"" << points(world_polygon(p))
        << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" stroke-dasharray=\"5,3\"/>\n";
  }
  for (const Vec2& t : task.targets) {
    out << "<circle class=\"target\" cx=\"" << fmt(X(t.x)) << "\" cy=\"" << fmt(Z(t.z))
        << "\" r=\"5\" fill=\"#d62728\" stroke=\"white\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string render_psi_panels_svg(const std::vector<PsiPanelRow>& rows, const std::string& title) {
  const double size = 192.0;
  const double gap = 12.0;
  const double label = 16.0;
  const double header = 28.0;
  const char* names[] = {"state", "action", "obstacles", "reward", "psi"};
  const double w = 5 * size + 6 * gap;
  const double h = header + static_cast<double>(rows.size()) * (size + label + 2 * gap) + gap;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << fmt(gap) << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
      << escape(title.empty() ? std::string("successor features") : title) << "</text>\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const PsiPanelRow& row = rows[r];
    const double y0 = header + static_cast<double>(r) * (size + label + 2 * gap) + label;
    const FeatureImage* panels[] = {&row.state, &row.action, &row.obstacles, &row.reward, &row.psi};
    for (int c = 0; c < 5; ++c) {
      const double x0 = gap + c * (size + gap);
      const FeatureImage& img = *panels[c];
      out << "<g id=\"panel-" << names[c] << "-" << row.step << "\">\n";
      if (c == 3) {
        const double m = std::max(std::abs(img.min()), std::abs(img.max()));
        heatmap(out, img, x0, y0, size, false, -m, m);
      } else if (c == 4) {
        heatmap(out, img, x0, y0, size, false, img.min(), img.max());
      } else {
        heatmap(out, img, x0, y0, size, true, 0.0, 1.0);
      }
      out << "</g>\n";
      std::string caption = std::string(names[c]) + " t=" + std::to_string(row.step);
      if (c == 4) caption += " min=" + fmt(img.min()) + " max=" + fmt(img.max());
      out << "<text x=\"" << fmt(x0) << "\" y=\"" << fmt(y0 - 4) << "\" font-family=\"sans-serif\" font-size=\"11\">"
          << caption << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace blockforge
