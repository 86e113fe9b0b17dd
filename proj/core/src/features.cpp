#include "blockforge/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "blockforge/errors.hpp"

namespace blockforge {

double FeatureImage::sum() const {
  double s = 0.0;
  for (double v : px_) s += v;
  return s;
}

double FeatureImage::min() const { return px_.empty() ? 0.0 : *std::min_element(px_.begin(), px_.end()); }

double FeatureImage::max() const { return px_.empty() ? 0.0 : *std::max_element(px_.begin(), px_.end()); }

FeatureImage& FeatureImage::operator+=(const FeatureImage& o) {
  if (o.d_ != d_) throw ShapeError("feature image resolution mismatch");
  for (std::size_t k = 0; k < px_.size(); ++k) px_[k] += o.px_[k];
  return *this;
}

FeatureImage& FeatureImage::scale(double s) {
  for (double& v : px_) v *= s;
  return *this;
}

double inner(const FeatureImage& a, const FeatureImage& b) {
  if (a.d() != b.d()) throw ShapeError("feature image resolution mismatch");
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  double s = 0.0;
  for (std::size_t k = 0; k < pa.size(); ++k) s += pa[k] * pb[k];
  return s;
}

Vec2 pixel_center(int i, int j, int d, const ConstructionSpace& space) {
  const double wx = (space.x_max - space.x_min) / d;
  const double wz = (space.z_max - space.z_min) / d;
  return {space.x_min + (i + 0.5) * wx, space.z_min + (j + 0.5) * wz};
}

std::pair<int, int> pixel_of(Vec2 p, int d, const ConstructionSpace& space) {
  const int i = static_cast<int>(std::floor((p.x - space.x_min) / (space.x_max - space.x_min) * d));
  const int j = static_cast<int>(std::floor((p.z - space.z_min) / (space.z_max - space.z_min) * d));
  return {std::clamp(i, 0, d - 1), std::clamp(j, 0, d - 1)};
}

namespace {

void rasterize_into(const Polygon& poly, FeatureImage& img, double value) {
  const int d = img.d();
  const ConstructionSpace space;
  const Bounds b = bounds_of(poly);
  const double wx = (space.x_max - space.x_min) / d;
  const double wz = (space.z_max - space.z_min) / d;
  const int i0 = std::max(0, static_cast<int>(std::floor((b.x_min - space.x_min) / wx - 0.5)));
  const int i1 = std::min(d - 1, static_cast<int>(std::ceil((b.x_max - space.x_min) / wx - 0.5)));
  const int j0 = std::max(0, static_cast<int>(std::floor((b.z_min - space.z_min) / wz - 0.5)));
  const int j1 = std::min(d - 1, static_cast<int>(std::ceil((b.z_max - space.z_min) / wz - 0.5)));
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      if (point_strictly_inside(pixel_center(i, j, d, space), poly)) img.at(i, j) += value;
    }
  }
}

}  // namespace

FeatureImage rasterize_action(const Placement& a, int d) {
  if (d < kMinResolution) throw ShapeError("feature resolution must be at least 16");
  FeatureImage img(d);
  rasterize_into(world_polygon(a), img, 1.0);
  return img;
}

FeatureImage state_features(const Assembly& s, int d) {
  if (d < kMinResolution) throw ShapeError("feature resolution must be at least 16");
  FeatureImage img(d);
  for (const Placement& p : s.placements) rasterize_into(world_polygon(p), img, 1.0);
  return img;
}

TaskImage task_features(const Task& t, int d) {
  if (d < kMinResolution) throw ShapeError("feature resolution must be at least 16");
  TaskImage out{FeatureImage(d), FeatureImage(d)};
  for (const Obstacle& o : t.obstacles) {
    const Polygon sq = o.polygon();
    for (int j = 0; j < d; ++j) {
      for (int i = 0; i < d; ++i) {
        if (point_in_polygon(pixel_center(i, j, d), sq, 0.0)) out.obstacles.at(i, j) = 1.0;
      }
    }
  }
  for (const Vec2& target : t.targets) {
    const auto [i, j] = pixel_of(target, d);
    out.targets.at(i, j) = 1.0;
  }
  return out;
}

RewardField reward_field(const Task& t, double sigma_px, double c, int d) {
  if (!(sigma_px > 0.0) || !(c > 0.0)) throw Error("reward field needs sigma_px > 0 and C > 0");
  if (d < kMinResolution) throw ShapeError("feature resolution must be at least 16");
  RewardField rho{FeatureImage(d), sigma_px, c};
  const double cutoff = 6.0 * sigma_px;
  const int r = static_cast<int>(std::floor(cutoff));
  for (const Vec2& target : t.targets) {
    const auto [ci, cj] = pixel_of(target, d);
    FeatureImage g(d);
    double mass = 0.0;
    for (int j = std::max(0, cj - r); j <= std::min(d - 1, cj + r); ++j) {
      for (int i = std::max(0, ci - r); i <= std::min(d - 1, ci + r); ++i) {
        const double dist2 = double(i - ci) * (i - ci) + double(j - cj) * (j - cj);
        if (dist2 > cutoff * cutoff) continue;
        const double v = std::exp(-0.5 * dist2 / (sigma_px * sigma_px));
        g.at(i, j) = v;
        mass += v;
      }
    }
    g.scale(1.0 / mass);
    rho.field += g;
  }
  for (double& v : rho.field.pixels()) v -= c;
  return rho;
}

double reward(const Placement& a, const RewardField& rho) {
  return inner(rasterize_action(a, rho.field.d()), rho.field);
}

double reward(const Placement& a, const Task& t, const FeatureParams& params) {
  return reward(a, reward_field(t, params.sigma_px, params.reward_c, params.d));
}

PreparedTask prepare_task(const Task& t, const FeatureParams& params) {
  return {&t, task_features(t, params.d), reward_field(t, params.sigma_px, params.reward_c, params.d)};
}

void write_pgm(const FeatureImage& img, const std::filesystem::path& path, double lo, double hi) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const int d = img.d();
  out << "P5\n" << d << " " << d << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (int j = d - 1; j >= 0; --j) {
    for (int i = 0; i < d; ++i) {
      const double v = std::clamp((img.at(i, j) - lo) / span, 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
}

}  // namespace blockforge
