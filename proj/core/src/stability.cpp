#include "blockforge/stability.hpp"

#include <cstdio>

#include "blockforge/errors.hpp"
#include "blockforge/lp.hpp"

namespace blockforge {

double EquilibriumModel::total_weight() const {
  double w = 0.0;
  for (const RigidBody& b : bodies) w += b.mass * gravity;
  return w;
}

EquilibriumModel build_equilibrium_model(const std::vector<Polygon>& blocks,
                                         const std::vector<ContactSegment>& contacts, double mu,
                                         double gravity, double density, double support_margin) {
  EquilibriumModel model;
  model.mu = mu;
  model.gravity = gravity;
  model.bodies.reserve(blocks.size());
  for (const Polygon& p : blocks) model.bodies.push_back({density * area(p), centroid(p)});

  model.points.reserve(2 * contacts.size());
  for (const ContactSegment& s : contacts) {
    Vec2 p0 = s.p0;
    Vec2 p1 = s.p1;
    if (support_margin > 0.0) {
      const double len = norm(p1 - p0);
      if (len <= 2.0 * support_margin) {
        const Vec2 mid = 0.5 * (p0 + p1);
        p0 = mid;
        p1 = mid;
      } else {
        const Vec2 u = (1.0 / len) * (p1 - p0);
        p0 = p0 + support_margin * u;
        p1 = p1 - support_margin * u;
      }
    }
    const Vec2 tangent{-s.normal.z, s.normal.x};
    model.points.push_back({p0, s.normal, tangent, s.block_a, s.block_b});
    model.points.push_back({p1, s.normal, tangent, s.block_a, s.block_b});
  }
  return model;
}

EquilibriumModel build_equilibrium_model(const std::vector<Placement>& assembly,
                                         const std::vector<ContactSegment>& contacts, double mu) {
  std::vector<Polygon> polys;
  polys.reserve(assembly.size());
  for (const Placement& p : assembly) polys.push_back(world_polygon(p));
  return build_equilibrium_model(polys, contacts, mu);
}

StabilityVerdict solve_feasibility(const EquilibriumModel& model, double tolerance) {
  const int rows = model.equation_count();
  if (rows == 0) return {true, 0.0};

  // Each contact force is a non-negative combination of the two friction cone
  // edges n + mu t and n - mu t, which is exactly f_n >= 0, |f_t| <= mu f_n.
  // Every equilibrium row gets a +/- slack pair; the objective is their sum.
  const int force_cols = 2 * static_cast<int>(model.points.size());
  const int cols = force_cols + 2 * rows;

  LinearProgram lp;
  lp.rows = rows;
  lp.cols = cols;
  lp.a.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  lp.b.assign(rows, 0.0);
  lp.c.assign(cols, 0.0);

  for (std::size_t i = 0; i < model.bodies.size(); ++i) {
    // Contact forces balance the weight: sum F = (0, m g).
    lp.b[3 * i + 1] = model.bodies[i].mass * model.gravity;
  }

  auto add_force = [&](int body, int col, Vec2 at, Vec2 dir, double sign) {
    const Vec2 r = at - model.bodies[body].centroid;
    lp.at(3 * body + 0, col) += sign * dir.x;
    lp.at(3 * body + 1, col) += sign * dir.z;
    lp.at(3 * body + 2, col) += sign * cross(r, dir);
  };

  for (std::size_t k = 0; k < model.points.size(); ++k) {
    const ContactPoint& cp = model.points[k];
    const Vec2 edges[2] = {cp.normal + model.mu * cp.tangent, cp.normal - model.mu * cp.tangent};
    for (int g = 0; g < 2; ++g) {
      const int col = static_cast<int>(2 * k) + g;
      add_force(cp.body_b, col, cp.position, edges[g], 1.0);
      if (cp.body_a != kFloor) add_force(cp.body_a, col, cp.position, edges[g], -1.0);
    }
  }

  std::vector<int> basis(rows);
  for (int r = 0; r < rows; ++r) {
    const int plus = force_cols + 2 * r;
    const int minus = plus + 1;
    lp.at(r, plus) = 1.0;
    lp.at(r, minus) = -1.0;
    lp.c[plus] = 1.0;
    lp.c[minus] = 1.0;
    // b >= 0 by construction, so the + slack starts basic.
    basis[r] = plus;
  }

  const LpSolution sol = solve_lp(lp, basis);
  if (sol.status != LpStatus::optimal) {
    throw SolverFailure("equilibrium LP did not reach optimality after " +
                        std::to_string(sol.iterations) + " iterations");
  }
  const double weight = model.total_weight();
  const double residual = weight > 0.0 ? std::max(0.0, sol.objective) / weight : 0.0;
  return {residual <= tolerance, residual};
}

StabilityVerdict check_stability(const std::vector<Polygon>& blocks, const ConstructionSpace& space,
                                 const StabilityOptions& options) {
  const auto contacts = contact_segments(blocks, space, options.contact);
  const auto model = build_equilibrium_model(blocks, contacts, options.mu, options.gravity,
                                             options.density, options.support_margin);
  return solve_feasibility(model, options.tolerance);
}

bool is_stable(const std::vector<Polygon>& blocks, const ConstructionSpace& space,
               const StabilityOptions& options) {
  try {
    return check_stability(blocks, space, options).stable;
  } catch (const SolverFailure& e) {
    std::fprintf(stderr, "blockforge: stability solve failed, treating as unstable: %s\n", e.what());
    return false;
  }
}

bool is_stable(const std::vector<Placement>& assembly, const ConstructionSpace& space, double mu) {
  std::vector<Polygon> polys;
  polys.reserve(assembly.size());
  for (const Placement& p : assembly) polys.push_back(world_polygon(p));
  StabilityOptions options;
  options.mu = mu;
  return is_stable(polys, space, options);
}

}  // namespace blockforge
