#pragma once

#include <vector>

#include "blockforge/geometry.hpp"

namespace blockforge {

struct RigidBody {
  double mass = 0.0;
  Vec2 centroid;
};

// A contact point carries a normal force f_n >= 0 and a tangential force f_t
// with |f_t| <= mu * f_n. The force acts on body_b along +normal and on
// body_a (unless it is the floor) with opposite sign.
struct ContactPoint {
  Vec2 position;
  Vec2 normal;
  Vec2 tangent;
  int body_a = kFloor;
  int body_b = 0;
};

struct EquilibriumModel {
  std::vector<RigidBody> bodies;
  std::vector<ContactPoint> points;
  double mu = 0.6;
  double gravity = 1.0;

  int force_variable_count() const { return 2 * static_cast<int>(points.size()); }
  int equation_count() const { return 3 * static_cast<int>(bodies.size()); }
  double total_weight() const;
};

struct StabilityVerdict {
  bool stable = true;
  double residual = 0.0;
};

inline constexpr double kStabilityTol = 1e-7;

struct StabilityOptions {
  double mu = 0.6;
  double gravity = 1.0;
  double density = 1.0;
  double tolerance = kStabilityTol;
  // Pulls every contact endpoint inward along its segment by this distance;
  // 0 reproduces plain rigid-block equilibrium.
  double support_margin = 0.0;
  ContactTolerance contact;
};

EquilibriumModel build_equilibrium_model(const std::vector<Polygon>& blocks,
                                         const std::vector<ContactSegment>& contacts, double mu,
                                         double gravity = 1.0, double density = 1.0,
                                         double support_margin = 0.0);

EquilibriumModel build_equilibrium_model(const std::vector<Placement>& assembly,
                                         const std::vector<ContactSegment>& contacts, double mu);

// Minimizes the total equilibrium slack; throws SolverFailure when the
// simplex hits its iteration limit.
StabilityVerdict solve_feasibility(const EquilibriumModel& model, double tolerance = kStabilityTol);

StabilityVerdict check_stability(const std::vector<Polygon>& blocks, const ConstructionSpace& space,
                                 const StabilityOptions& options);

// SolverFailure is reported as unstable.
bool is_stable(const std::vector<Placement>& assembly, const ConstructionSpace& space, double mu);
bool is_stable(const std::vector<Polygon>& blocks, const ConstructionSpace& space,
               const StabilityOptions& options);

}  // namespace blockforge
