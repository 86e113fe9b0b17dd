#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace blockforge {

struct Vec2 {
  double x = 0.0;
  double z = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.z + b.z}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.z - b.z}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.z}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.z}; }
  friend Vec2 operator-(Vec2 a) { return {-a.x, -a.z}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.z * b.z; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.z - a.z * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.z); }
inline Vec2 normalized(Vec2 a) { return (1.0 / norm(a)) * a; }
inline Vec2 perp_cw(Vec2 a) { return {a.z, -a.x}; }  // outward normal of a CCW edge
inline Vec2 rotate(Vec2 p, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * p.x - s * p.z, s * p.x + c * p.z};
}

using Polygon = std::vector<Vec2>;

double signed_area(const Polygon& poly);
double area(const Polygon& poly);
Vec2 centroid(const Polygon& poly);
bool is_convex_ccw(const Polygon& poly, double tol = 1e-12);

struct Bounds {
  double x_min, x_max, z_min, z_max;
};
Bounds bounds_of(const Polygon& poly);

// Normalizes an angle to [-pi, pi).
double normalize_angle(double theta);

enum class ShapeKind { square, trapezoid };

std::string_view to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(std::string_view name);

// Dimensions in block-size units. Squares read `side`; trapezoids read
// `bottom`, `top` and `height` (isosceles).
struct ShapeParams {
  double side = 1.0;
  double bottom = 1.25;
  double top = 0.75;
  double height = 1.0;

  friend bool operator==(const ShapeParams&, const ShapeParams&) = default;
};

struct Shape {
  ShapeKind kind = ShapeKind::square;
  ShapeParams params;
  Polygon vertices;  // CCW, centroid at the local origin
  double area = 0.0;
  int symmetry_order = 1;  // n-fold rotational symmetry of the vertex set

  std::size_t face_count() const { return vertices.size(); }

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.kind == b.kind && a.params == b.params;
  }
};

// Throws InvalidShape on non-positive dimensions.
Shape make_shape(ShapeKind kind, const ShapeParams& params = {});

struct Pose {
  double x = 0.0;
  double z = 0.0;
  double theta = 0.0;
};

struct Placement {
  Shape shape;
  Pose pose;
  int shape_id = 0;  // index into the task's shape catalog
};

Placement make_placement(const Shape& shape, Pose pose, int shape_id = 0);

Polygon world_polygon(const Placement& p);

struct ConstructionSpace {
  double x_min = -5.0;
  double x_max = 5.0;
  double z_min = 0.0;
  double z_max = 10.0;
};

inline constexpr double kPointTol = 1e-9;
inline constexpr double kOverlapTol = 1e-9;

// True iff the interiors intersect with positive area; shared edges and
// touching vertices are not overlap.
bool polygons_overlap(const Polygon& a, const Polygon& b, double tol = kOverlapTol);

// Boundary inclusive within `tol`.
bool point_in_polygon(Vec2 pt, const Polygon& poly, double tol = kPointTol);

// Strictly inside: the point's distance to every edge exceeds `tol`.
bool point_strictly_inside(Vec2 pt, const Polygon& poly, double tol = kPointTol);

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

// Euclidean distance between two convex polygons; 0 when they touch or overlap.
double polygon_distance(const Polygon& a, const Polygon& b);

Polygon axis_aligned_square(Vec2 center, double half_side);

struct ContactTolerance {
  double gap = 1e-6;         // max separation of mated edges
  double angle = 1e-6;       // max deviation from anti-parallel, radians
  double min_length = 1e-4;  // shortest admissible contact segment
};

inline constexpr int kFloor = -1;

struct ContactSegment {
  int block_a = kFloor;  // lower index; kFloor for the ground
  int block_b = 0;
  Vec2 p0;
  Vec2 p1;
  Vec2 normal;  // unit, from block_a into block_b
};

// One segment per pair of anti-parallel, collinear touching edges (including
// the floor at z = space.z_min). Ordered floor contacts first, then block pairs
// (i, j) with i < j, then by edge index.
std::vector<ContactSegment> contact_segments(const std::vector<Polygon>& blocks,
                                             const ConstructionSpace& space,
                                             const ContactTolerance& tol = {});

std::vector<ContactSegment> contact_segments(const std::vector<Placement>& placements,
                                             const ConstructionSpace& space,
                                             const ContactTolerance& tol = {});

}  // namespace blockforge
