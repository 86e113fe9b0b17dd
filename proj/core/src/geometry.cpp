#include "blockforge/geometry.hpp"

#include <algorithm>
#include <limits>

#include "blockforge/errors.hpp"

namespace blockforge {

double signed_area(const Polygon& poly) {
  double s = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    s += cross(poly[i], poly[(i + 1) % n]);
  }
  return 0.5 * s;
}

double area(const Polygon& poly) { return std::abs(signed_area(poly)); }

Vec2 centroid(const Polygon& poly) {
  const std::size_t n = poly.size();
  double a = 0.0;
  Vec2 c;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = poly[i];
    const Vec2 q = poly[(i + 1) % n];
    const double w = cross(p, q);
    a += w;
    c = c + w * (p + q);
  }
  return (1.0 / (3.0 * a)) * c;
}

bool is_convex_ccw(const Polygon& poly, double tol) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % n];
    const Vec2 c = poly[(i + 2) % n];
    if (cross(b - a, c - b) <= tol) return false;
  }
  return true;
}

Bounds bounds_of(const Polygon& poly) {
  Bounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
           std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Vec2& p : poly) {
    b.x_min = std::min(b.x_min, p.x);
    b.x_max = std::max(b.x_max, p.x);
    b.z_min = std::min(b.z_min, p.z);
    b.z_max = std::max(b.z_max, p.z);
  }
  return b;
}

double normalize_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double t = std::fmod(theta + std::numbers::pi, two_pi);
  if (t < 0.0) t += two_pi;
  t -= std::numbers::pi;
  if (t >= std::numbers::pi) t -= two_pi;
  return t;
}

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::square:
      return "square";
    case ShapeKind::trapezoid:
      return "trapezoid";
  }
  return "unknown";
}

ShapeKind shape_kind_from_string(std::string_view name) {
  if (name == "square") return ShapeKind::square;
  if (name == "trapezoid") return ShapeKind::trapezoid;
  throw InvalidShape("unknown shape kind '" + std::string(name) + "'");
}

namespace {

int rotational_symmetry(const Polygon& verts) {
  for (int k : {4, 3, 2}) {
    if (verts.size() % static_cast<std::size_t>(k) != 0) continue;
    const double step = 2.0 * std::numbers::pi / k;
    const bool maps = std::all_of(verts.begin(), verts.end(), [&](Vec2 v) {
      const Vec2 r = rotate(v, step);
      return std::any_of(verts.begin(), verts.end(),
                         [&](Vec2 w) { return norm(r - w) < 1e-9; });
    });
    if (maps) return k;
  }
  return 1;
}

double canonical_theta(double theta, int symmetry_order) {
  const double period = 2.0 * std::numbers::pi / symmetry_order;
  double t = theta - period * std::floor((theta + 0.5 * period) / period);
  if (t >= 0.5 * period - 1e-12) t -= period;
  return t;
}

}  // namespace

Shape make_shape(ShapeKind kind, const ShapeParams& params) {
  Shape s;
  s.kind = kind;
  s.params = params;
  switch (kind) {
    case ShapeKind::square: {
      if (!(params.side > 0.0)) throw InvalidShape("square side must be positive");
      const double h = 0.5 * params.side;
      s.vertices = {{-h, -h}, {h, -h}, {h, h}, {-h, h}};
      break;
    }
    case ShapeKind::trapezoid: {
      const double b = params.bottom;
      const double t = params.top;
      const double h = params.height;
      if (!(b > 0.0) || !(t > 0.0) || !(h > 0.0)) {
        throw InvalidShape("trapezoid dimensions must be positive");
      }
      // Centroid height above the bottom edge.
      const double yc = h * (b + 2.0 * t) / (3.0 * (b + t));
      s.vertices = {{-0.5 * b, -yc}, {0.5 * b, -yc}, {0.5 * t, h - yc}, {-0.5 * t, h - yc}};
      break;
    }
  }
  s.area = area(s.vertices);
  s.symmetry_order = rotational_symmetry(s.vertices);
  return s;
}

Placement make_placement(const Shape& shape, Pose pose, int shape_id) {
  pose.theta = canonical_theta(normalize_angle(pose.theta), shape.symmetry_order);
  return Placement{shape, pose, shape_id};
}

Polygon world_polygon(const Placement& p) {
  Polygon out;
  out.reserve(p.shape.vertices.size());
  const double c = std::cos(p.pose.theta);
  const double s = std::sin(p.pose.theta);
  for (const Vec2& v : p.shape.vertices) {
    out.push_back({c * v.x - s * v.z + p.pose.x, s * v.x + c * v.z + p.pose.z});
  }
  return out;
}

namespace {

// True if some edge normal of `a` separates the two polygons.
bool has_separating_axis(const Polygon& a, const Polygon& b, double tol) {
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 axis = normalized(perp_cw(a[(i + 1) % n] - a[i]));
    double a_min = std::numeric_limits<double>::infinity(), a_max = -a_min;
    double b_min = a_min, b_max = -a_min;
    for (const Vec2& p : a) {
      const double d = dot(p, axis);
      a_min = std::min(a_min, d);
      a_max = std::max(a_max, d);
    }
    for (const Vec2& p : b) {
      const double d = dot(p, axis);
      b_min = std::min(b_min, d);
      b_max = std::max(b_max, d);
    }
    if (a_max <= b_min + tol || b_max <= a_min + tol) return true;
  }
  return false;
}

}  // namespace

bool polygons_overlap(const Polygon& a, const Polygon& b, double tol) {
  return !has_separating_axis(a, b, tol) && !has_separating_axis(b, a, tol);
}

bool point_in_polygon(Vec2 pt, const Polygon& poly, double tol) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 e = poly[(i + 1) % n] - a;
    if (cross(e, pt - a) < -tol * norm(e)) return false;
  }
  return true;
}

bool point_strictly_inside(Vec2 pt, const Polygon& poly, double tol) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 e = poly[(i + 1) % n] - a;
    if (cross(e, pt - a) <= tol * norm(e)) return false;
  }
  return true;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

double polygon_distance(const Polygon& a, const Polygon& b) {
  if (polygons_overlap(a, b, 0.0)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  auto scan = [&best](const Polygon& pts, const Polygon& poly) {
    const std::size_t n = poly.size();
    for (const Vec2& p : pts) {
      for (std::size_t i = 0; i < n; ++i) {
        best = std::min(best, point_segment_distance(p, poly[i], poly[(i + 1) % n]));
      }
    }
  };
  scan(a, b);
  scan(b, a);
  return best;
}

Polygon axis_aligned_square(Vec2 center, double half_side) {
  return {{center.x - half_side, center.z - half_side},
          {center.x + half_side, center.z - half_side},
          {center.x + half_side, center.z + half_side},
          {center.x - half_side, center.z + half_side}};
}

std::vector<ContactSegment> contact_segments(const std::vector<Polygon>& blocks,
                                             const ConstructionSpace& space,
                                             const ContactTolerance& tol) {
  std::vector<ContactSegment> out;
  const double cos_tol = std::cos(tol.angle);

  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const Polygon& poly = blocks[j];
    const std::size_t n = poly.size();
    for (std::size_t e = 0; e < n; ++e) {
      const Vec2 q0 = poly[e];
      const Vec2 q1 = poly[(e + 1) % n];
      const Vec2 nb = normalized(perp_cw(q1 - q0));
      if (-nb.z < cos_tol) continue;
      if (std::abs(q0.z - space.z_min) > tol.gap || std::abs(q1.z - space.z_min) > tol.gap) {
        continue;
      }
      const double x0 = std::min(q0.x, q1.x);
      const double x1 = std::max(q0.x, q1.x);
      if (x1 - x0 < tol.min_length) continue;
      out.push_back({kFloor, static_cast<int>(j), {x0, space.z_min}, {x1, space.z_min}, {0.0, 1.0}});
    }
  }

  std::vector<Bounds> boxes;
  boxes.reserve(blocks.size());
  for (const Polygon& p : blocks) boxes.push_back(bounds_of(p));

  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (std::size_t j = i + 1; j < blocks.size(); ++j) {
      const Bounds& bi = boxes[i];
      const Bounds& bj = boxes[j];
      if (bi.x_max + tol.gap < bj.x_min || bj.x_max + tol.gap < bi.x_min ||
          bi.z_max + tol.gap < bj.z_min || bj.z_max + tol.gap < bi.z_min) {
        continue;
      }
      const Polygon& a = blocks[i];
      const Polygon& b = blocks[j];
      for (std::size_t ea = 0; ea < a.size(); ++ea) {
        const Vec2 a0 = a[ea];
        const Vec2 a1 = a[(ea + 1) % a.size()];
        const double len_a = norm(a1 - a0);
        const Vec2 ua = (1.0 / len_a) * (a1 - a0);
        const Vec2 na = perp_cw(ua);
        for (std::size_t eb = 0; eb < b.size(); ++eb) {
          const Vec2 b0 = b[eb];
          const Vec2 b1 = b[(eb + 1) % b.size()];
          const Vec2 nb = normalized(perp_cw(b1 - b0));
          if (-dot(na, nb) < cos_tol) continue;
          const double d0 = dot(b0 - a0, na);
          const double d1 = dot(b1 - a0, na);
          if (std::abs(d0) > tol.gap || std::abs(d1) > tol.gap) continue;
          const double t0 = dot(b0 - a0, ua);
          const double t1 = dot(b1 - a0, ua);
          const double lo = std::max(0.0, std::min(t0, t1));
          const double hi = std::min(len_a, std::max(t0, t1));
          if (hi - lo < tol.min_length) continue;
          out.push_back({static_cast<int>(i), static_cast<int>(j), a0 + lo * ua, a0 + hi * ua, na});
        }
      }
    }
  }
  return out;
}

std::vector<ContactSegment> contact_segments(const std::vector<Placement>& placements,
                                             const ConstructionSpace& space,
                                             const ContactTolerance& tol) {
  std::vector<Polygon> polys;
  polys.reserve(placements.size());
  for (const Placement& p : placements) polys.push_back(world_polygon(p));
  return contact_segments(polys, space, tol);
}

}  // namespace blockforge
