#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "blockforge/env.hpp"
#include "blockforge/features.hpp"
#include "blockforge/geometry.hpp"
#include "blockforge/learner.hpp"
#include "blockforge/nn.hpp"

// Reference implementations shared by the unit and acceptance tests, written
// against the definitions directly rather than the library's fast paths.
namespace blockforge::oracle {

// Centroid height of the default trapezoid above its base.
inline constexpr double kTrapYc = 0.4583333333333333;
// Friction coefficient at which the three-voussoir arch becomes stable,
// computed by tests/oracles/rbe_oracle.py.
inline constexpr double kArchCriticalMu = 0.434259;

inline std::vector<Polygon> arch(double xl = 0.0) {
  const Shape t = make_shape(ShapeKind::trapezoid);
  return {world_polygon(make_placement(t, {xl, kTrapYc, 0.0})),
          world_polygon(make_placement(t, {xl + 1.75, kTrapYc, 0.0})),
          world_polygon(make_placement(t, {xl + 0.875, 1.5 - kTrapYc, std::numbers::pi}))};
}

inline std::vector<Polygon> tower(const std::vector<double>& xs) {
  std::vector<Polygon> out;
  for (std::size_t k = 0; k < xs.size(); ++k) out.push_back(axis_aligned_square({xs[k], 0.5 + k}, 0.5));
  return out;
}

// Frictionless toppling rule: for every block k >= 1, the combined centroid
// of blocks k..n-1 lies over the contact between blocks k-1 and k. Returns 0
// for stable, 1 for unstable and -1 when some suffix lies within `margin` of
// a support edge.
inline int centroid_rule(const std::vector<double>& xs, double margin) {
  const int n = static_cast<int>(xs.size());
  for (int k = n - 1; k >= 1; --k) {
    double sum = 0.0;
    for (int j = k; j < n; ++j) sum += xs[j];
    const double c = sum / (n - k);
    const double lo = std::max(xs[k - 1], xs[k]) - 0.5;
    const double hi = std::min(xs[k - 1], xs[k]) + 0.5;
    const double inside = std::min(c - lo, hi - c);
    if (std::abs(inside) < margin) return -1;
    if (inside < 0.0) return 1;
  }
  return 0;
}

inline bool strictly_inside(double px, double pz, const Polygon& poly) {
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vec2 a = poly[k];
    const Vec2 b = poly[(k + 1) % poly.size()];
    const double len = std::hypot(b.x - a.x, b.z - a.z);
    if (((b.x - a.x) * (pz - a.z) - (b.z - a.z) * (px - a.x)) / len <= 1e-9) return false;
  }
  return true;
}

inline int pixel_count(const Placement& a, int d) {
  const Polygon poly = world_polygon(a);
  const double w = 10.0 / d;
  int n = 0;
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) n += strictly_inside(-5.0 + (i + 0.5) * w, (j + 0.5) * w, poly) ? 1 : 0;
  return n;
}

// Reward of placing `a` by looping over every pixel the block covers.
inline double reward(const Placement& a, const Task& t, double sigma, double c, int d) {
  const Polygon poly = world_polygon(a);
  const double w = 10.0 / d;
  std::vector<std::pair<int, int>> centers;
  std::vector<double> mass;
  for (const Vec2& p : t.targets) {
    const int ci = std::clamp(static_cast<int>(std::floor((p.x + 5.0) / w)), 0, d - 1);
    const int cj = std::clamp(static_cast<int>(std::floor(p.z / w)), 0, d - 1);
    double m = 0.0;
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) {
        const double r2 = double(i - ci) * (i - ci) + double(j - cj) * (j - cj);
        if (r2 <= 36.0 * sigma * sigma) m += std::exp(-r2 / (2 * sigma * sigma));
      }
    centers.push_back({ci, cj});
    mass.push_back(m);
  }
  double r = 0.0;
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) {
      if (!strictly_inside(-5.0 + (i + 0.5) * w, (j + 0.5) * w, poly)) continue;
      double v = -c;
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const double r2 = double(i - centers[k].first) * (i - centers[k].first) +
                          double(j - centers[k].second) * (j - centers[k].second);
        if (r2 <= 36.0 * sigma * sigma) v += std::exp(-r2 / (2 * sigma * sigma)) / mass[k];
      }
      r += v;
    }
  }
  return r;
}

// A single floor slot at x = 0 walled in by obstacles on both sides and
// capped by a ceiling: one placement fits, then nothing.
inline Task boxed_in_task() {
  std::vector<Obstacle> obs;
  for (double x : {-4.5, -4.05, -3.05, -2.05, -1.05}) obs.push_back({{x, 0.5}, 0.5});
  for (double x : {4.5, 4.05, 3.05, 2.05, 1.05}) obs.push_back({{x, 0.5}, 0.5});
  for (double x = -4.5; x <= 4.5; x += 1.0) obs.push_back({{x, 1.55}, 0.5});
  Task t;
  t.id = "boxed";
  t.targets = {{3.0, 5.0}};
  t.obstacles = std::move(obs);
  t.shapes = {make_shape(ShapeKind::square)};
  return t;
}

// Monte-Carlo successor features of a recorded episode, summed forward.
inline std::vector<FeatureImage> empirical_psi(const EpisodeRecord& ep, double gamma, int d) {
  std::vector<FeatureImage> out;
  for (std::size_t t = 0; t < ep.actions.size(); ++t) {
    FeatureImage psi(d);
    for (std::size_t k = t; k < ep.actions.size(); ++k) {
      FeatureImage phi = rasterize_action(ep.actions[k], d);
      phi.scale(std::pow(gamma, static_cast<double>(k - t)));
      psi += phi;
    }
    out.push_back(psi);
  }
  return out;
}

// Freshly initialised biases are zero, which puts every pre-activation fed by
// an all-zero input patch exactly on the leaky-ReLU kink where central
// differences see the mean of both slopes. Finite-difference checks run at
// parameters with random biases instead.
template <class T>
BasicParams<T> with_random_biases(BasicParams<T> p, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (const ParamSpec& s : parameter_manifest(p.arch)) {
    if (!s.name.ends_with(".bias")) continue;
    for (std::size_t i = 0; i < s.size(); ++i) p.values[s.offset + i] = static_cast<T>(n(rng));
  }
  return p;
}

}  // namespace blockforge::oracle
