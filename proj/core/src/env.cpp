#include "blockforge/env.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "blockforge/errors.hpp"
#include "blockforge/parallel.hpp"

namespace blockforge {

void validate_task(const Task& task, const ConstructionSpace& space) {
  auto fail = [&](const std::string& field, const std::string& msg) {
    throw TaskParseError(task.id.empty() ? "<task>" : task.id, 0, field, msg);
  };
  if (task.targets.empty()) fail("targets", "at least one target is required");
  if (task.shapes.empty()) fail("shapes", "at least one shape is required");
  if (task.max_actions < 1) fail("max_actions", "must be positive");
  if (!(task.mu >= 0.0)) fail("mu", "must be non-negative");
  auto inside = [&](Vec2 p) {
    return p.x >= space.x_min && p.x <= space.x_max && p.z >= space.z_min && p.z <= space.z_max;
  };
  for (const Vec2& t : task.targets) {
    if (!inside(t)) fail("targets", "target outside the construction space");
  }
  for (const Obstacle& o : task.obstacles) {
    if (!(o.half_side > 0.0)) fail("obstacles", "half_side must be positive");
    for (const Vec2& v : o.polygon()) {
      if (!inside(v)) fail("obstacles", "obstacle outside the construction space");
    }
    for (const Vec2& t : task.targets) {
      if (point_in_polygon(t, o.polygon(), 0.0)) fail("targets", "target inside an obstacle");
    }
  }
}

Assembly with_placement(const Assembly& s, const Placement& a) {
  Assembly next = s;
  next.placements.push_back(a);
  return next;
}

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  // splitmix64 finalizer folded into a running hash
  v += 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (v ^ (v >> 31));
}

std::uint64_t quant(double v, double res) {
  return static_cast<std::uint64_t>(std::llround(v / res));
}

}  // namespace

std::uint64_t assembly_hash(const Assembly& s, double resolution) {
  std::uint64_t h = 0x51ed2701f3a5c7b9ULL;
  for (const Placement& p : s.placements) {
    h = mix(h, static_cast<std::uint64_t>(p.shape.kind));
    h = mix(h, quant(p.shape.params.side, resolution));
    h = mix(h, quant(p.shape.params.bottom, resolution));
    h = mix(h, quant(p.shape.params.top, resolution));
    h = mix(h, quant(p.shape.params.height, resolution));
    h = mix(h, quant(p.pose.x, resolution));
    h = mix(h, quant(p.pose.z, resolution));
    h = mix(h, quant(p.pose.theta, resolution));
  }
  return mix(h, s.placements.size());
}

std::string_view to_string(Terminal t) {
  switch (t) {
    case Terminal::none:
      return "none";
    case Terminal::success:
      return "success";
    case Terminal::max_actions:
      return "max_actions";
    case Terminal::dead_end:
      return "dead_end";
  }
  return "unknown";
}

std::string_view to_string(Invalidity r) {
  switch (r) {
    case Invalidity::none:
      return "none";
    case Invalidity::bounds:
      return "bounds";
    case Invalidity::overlap:
      return "overlap";
    case Invalidity::obstacle:
      return "obstacle";
    case Invalidity::floor:
      return "floor";
    case Invalidity::unstable:
      return "unstable";
  }
  return "unknown";
}

namespace {

struct StateGeometry {
  std::vector<Polygon> blocks;
  std::vector<Bounds> boxes;
  std::vector<Polygon> obstacles;
};

StateGeometry make_geometry(const Assembly& state, const Task& task) {
  StateGeometry g;
  g.blocks.reserve(state.size());
  for (const Placement& p : state.placements) {
    g.blocks.push_back(world_polygon(p));
    g.boxes.push_back(bounds_of(g.blocks.back()));
  }
  for (const Obstacle& o : task.obstacles) g.obstacles.push_back(o.polygon());
  return g;
}

Validity check_candidate(const StateGeometry& g, const Task& task, const Polygon& poly,
                         const ActionSpaceConfig& cfg) {
  const Bounds b = bounds_of(poly);
  const ConstructionSpace& sp = cfg.space;
  constexpr double eps = 1e-9;
  if (b.x_min < sp.x_min - eps || b.x_max > sp.x_max + eps || b.z_max > sp.z_max + eps) {
    return {false, Invalidity::bounds};
  }
  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    const Bounds& o = g.boxes[i];
    if (o.x_max <= b.x_min || b.x_max <= o.x_min || o.z_max <= b.z_min || b.z_max <= o.z_min) continue;
    if (polygons_overlap(poly, g.blocks[i])) return {false, Invalidity::overlap};
  }
  for (const Polygon& obs : g.obstacles) {
    if (polygon_distance(poly, obs) < kObstacleClearance) return {false, Invalidity::obstacle};
  }
  if (b.z_min < sp.z_min - eps) return {false, Invalidity::floor};

  std::vector<Polygon> blocks = g.blocks;
  blocks.push_back(poly);
  StabilityOptions opt;
  opt.mu = task.mu;
  opt.contact = cfg.contact;
  opt.support_margin = cfg.support_margin;
  if (!is_stable(blocks, sp, opt)) return {false, Invalidity::unstable};
  return {true, Invalidity::none};
}

double angle_of(Vec2 v) { return std::atan2(v.z, v.x); }

struct Keyed {
  std::tuple<int, long long, long long, long long> key;
  Placement placement;
};

}  // namespace

Validity is_valid_action(const Assembly& state, const Task& task, const Placement& a,
                         const ActionSpaceConfig& cfg) {
  return check_candidate(make_geometry(state, task), task, world_polygon(a), cfg);
}

std::vector<int> reached_targets(const Assembly& state, const Task& task) {
  std::vector<int> out;
  std::vector<Polygon> polys;
  polys.reserve(state.size());
  for (const Placement& p : state.placements) polys.push_back(world_polygon(p));
  for (std::size_t t = 0; t < task.targets.size(); ++t) {
    for (const Polygon& poly : polys) {
      if (point_in_polygon(task.targets[t], poly)) {
        out.push_back(static_cast<int>(t));
        break;
      }
    }
  }
  return out;
}

bool all_targets_reached(const Assembly& state, const Task& task) {
  return reached_targets(state, task).size() == task.targets.size();
}

std::vector<Placement> candidate_actions(const Assembly& state, const Task& task,
                                         const ActionSpaceConfig& cfg) {
  std::vector<Keyed> cands;
  const double res = cfg.dedupe_resolution;

  auto push = [&](const Shape& shape, int shape_id, Pose pose) {
    Placement p = make_placement(shape, pose, shape_id);
    // make_placement wraps theta into [-P/2, P/2) for the shape's symmetry
    // period P, so equal polygons share a key.
    cands.push_back({{shape_id, std::llround(p.pose.x / res), std::llround(p.pose.z / res),
                      std::llround(p.pose.theta / res)},
                     std::move(p)});
  };

  const ConstructionSpace& sp = cfg.space;
  const int n_shifts = std::max(1, cfg.shifts_per_face);

  for (std::size_t sid = 0; sid < task.shapes.size(); ++sid) {
    const Shape& shape = task.shapes[sid];
    const Polygon& lv = shape.vertices;
    const std::size_t nf = lv.size();

    // Floor placements: every face of the shape turned down onto z = z_min.
    for (std::size_t f = 0; f < nf; ++f) {
      const Vec2 nrm = perp_cw(lv[(f + 1) % nf] - lv[f]);
      const double theta = angle_of({0.0, -1.0}) - angle_of(nrm);
      double z_low = 0.0;
      bool first = true;
      for (const Vec2& v : lv) {
        const double z = rotate(v, theta).z;
        z_low = first ? z : std::min(z_low, z);
        first = false;
      }
      const double z = sp.z_min - z_low;
      const int steps = static_cast<int>(std::floor((sp.x_max - sp.x_min) / cfg.floor_step + 1e-9));
      for (int k = 0; k <= steps; ++k) {
        push(shape, static_cast<int>(sid), {sp.x_min + k * cfg.floor_step, z, theta});
      }
    }

    // Face mating against every edge of every placed block.
    for (const Placement& placed : state.placements) {
      const Polygon wp = world_polygon(placed);
      const std::size_t ne = wp.size();
      for (std::size_t e = 0; e < ne; ++e) {
        const Vec2 p0 = wp[e];
        const Vec2 p1 = wp[(e + 1) % ne];
        const double len_e = norm(p1 - p0);
        const Vec2 ue = (1.0 / len_e) * (p1 - p0);
        const Vec2 ne_out = perp_cw(ue);
        const Vec2 mid_e = 0.5 * (p0 + p1);
        for (std::size_t f = 0; f < nf; ++f) {
          const Vec2 v0 = lv[f];
          const Vec2 v1 = lv[(f + 1) % nf];
          const double len_f = norm(v1 - v0);
          const double theta = angle_of(-ne_out) - angle_of(perp_cw(v1 - v0));
          const Vec2 mid_f = rotate(0.5 * (v0 + v1), theta);
          const double span = std::min(len_e, len_f);
          const double max_shift = 0.5 * (len_e + len_f) - cfg.contact.min_length;
          for (int k = 0; k < n_shifts; ++k) {
            double s = n_shifts == 1 ? 0.0 : -0.5 * span + span * k / (n_shifts - 1);
            s = std::clamp(s, -max_shift, max_shift);
            const Vec2 t = mid_e + s * ue - mid_f;
            push(shape, static_cast<int>(sid), {t.x, t.z, theta});
          }
        }
      }
    }
  }

  std::stable_sort(cands.begin(), cands.end(),
                   [](const Keyed& a, const Keyed& b) { return a.key < b.key; });
  std::vector<Placement> out;
  out.reserve(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (i > 0 && cands[i].key == cands[i - 1].key) continue;
    out.push_back(std::move(cands[i].placement));
  }
  return out;
}

std::vector<Placement> enumerate_actions(const Assembly& state, const Task& task,
                                         const ActionSpaceConfig& cfg) {
  if (state.size() >= static_cast<std::size_t>(task.max_actions)) return {};
  if (all_targets_reached(state, task)) return {};

  std::vector<Placement> cands = candidate_actions(state, task, cfg);
  const StateGeometry g = make_geometry(state, task);
  std::vector<char> keep(cands.size(), 0);
  parallel_for(cands.size(), [&](std::size_t i) {
    keep[i] = check_candidate(g, task, world_polygon(cands[i]), cfg).valid ? 1 : 0;
  });
  std::vector<Placement> out;
  out.reserve(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (keep[i]) out.push_back(std::move(cands[i]));
  }
  return out;
}

StepOutcome step(const Assembly& state, const Task& task, const Placement& a,
                 const ActionSpaceConfig& cfg) {
  if (state.size() >= static_cast<std::size_t>(task.max_actions)) {
    throw IllegalAction("episode already ended: action limit reached");
  }
  if (all_targets_reached(state, task)) {
    throw IllegalAction("episode already ended: all targets reached");
  }
  const Validity v = is_valid_action(state, task, a, cfg);
  if (!v.valid) {
    throw IllegalAction("invalid placement (" + std::string(to_string(v.reason)) + ")");
  }

  StepOutcome out;
  out.next_state = with_placement(state, a);
  out.reached = reached_targets(out.next_state, task);
  if (out.reached.size() == task.targets.size()) {
    out.terminal = Terminal::success;
  } else if (out.next_state.size() >= static_cast<std::size_t>(task.max_actions)) {
    out.terminal = Terminal::max_actions;
  } else {
    out.next_actions = enumerate_actions(out.next_state, task, cfg);
    if (out.next_actions.empty()) out.terminal = Terminal::dead_end;
  }
  return out;
}

}  // namespace blockforge
