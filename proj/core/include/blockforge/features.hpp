#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "blockforge/env.hpp"
#include "blockforge/geometry.hpp"

namespace blockforge {

// d x d scalar grid over the construction space. Column i covers
// x = -5 + (i + 0.5) * 10 / d at its center; row j covers z = (j + 0.5) * 10 / d,
// with row 0 at the bottom. Storage is row-major: index = j * d + i.
class FeatureImage {
 public:
  FeatureImage() = default;
  explicit FeatureImage(int d, double fill = 0.0) : d_(d), px_(static_cast<std::size_t>(d) * d, fill) {}

  int d() const { return d_; }
  std::size_t size() const { return px_.size(); }
  double& at(int i, int j) { return px_[static_cast<std::size_t>(j) * d_ + i]; }
  double at(int i, int j) const { return px_[static_cast<std::size_t>(j) * d_ + i]; }
  std::vector<double>& pixels() { return px_; }
  const std::vector<double>& pixels() const { return px_; }

  double sum() const;
  double min() const;
  double max() const;
  FeatureImage& operator+=(const FeatureImage& o);
  FeatureImage& scale(double s);

  friend bool operator==(const FeatureImage&, const FeatureImage&) = default;

 private:
  int d_ = 0;
  std::vector<double> px_;
};

double inner(const FeatureImage& a, const FeatureImage& b);

inline constexpr int kMinResolution = 16;

Vec2 pixel_center(int i, int j, int d, const ConstructionSpace& space = {});
// Pixel containing a world point, clamped to the grid.
std::pair<int, int> pixel_of(Vec2 p, int d, const ConstructionSpace& space = {});

struct TaskImage {
  FeatureImage obstacles;
  FeatureImage targets;
};

struct RewardField {
  FeatureImage field;
  double sigma_px = 2.0;
  double c = 0.001;
};

struct FeatureParams {
  int d = 64;
  double sigma_px = 2.0;
  double reward_c = 0.001;
};

// 1 where the pixel center lies strictly inside the placement polygon.
FeatureImage rasterize_action(const Placement& a, int d);

FeatureImage state_features(const Assembly& s, int d);

TaskImage task_features(const Task& t, int d);

// Sum of unit-mass Gaussians (truncated at 6 sigma, centered on each target's
// pixel) minus the constant c everywhere.
RewardField reward_field(const Task& t, double sigma_px, double c, int d);

double reward(const Placement& a, const RewardField& rho);
double reward(const Placement& a, const Task& t, const FeatureParams& params);

// Task-dependent features computed once and shared read-only.
struct PreparedTask {
  const Task* task = nullptr;
  TaskImage xi;
  RewardField rho;
};

PreparedTask prepare_task(const Task& t, const FeatureParams& params);

// Binary PGM (P5) with the image scaled from [lo, hi] to [0, 255]; row 0 of
// the image becomes the bottom row of the file.
void write_pgm(const FeatureImage& img, const std::filesystem::path& path, double lo, double hi);

}  // namespace blockforge
