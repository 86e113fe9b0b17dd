#include "blockforge/closedloop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blockforge/errors.hpp"
#include "json.hpp"

namespace blockforge {

void NoiseModel::validate() const {
  if (!(sigma_xy >= 0.0) || !(sigma_theta >= 0.0)) throw Error("noise standard deviations must be non-negative");
  if (!(max_offset >= sigma_xy)) throw Error("max_offset must be at least sigma_xy");
}

ContactTolerance settle_tolerance(const NoiseModel& noise, const ContactTolerance& base) {
  if (noise.is_zero()) return base;
  // Two touching blocks can each carry up to three sigma of tilt.
  const double tilt = 6.0 * noise.sigma_theta;
  ContactTolerance t = base;
  t.angle = base.angle + tilt;
  t.gap = base.gap + 1.25 * std::sin(tilt);
  return t;
}

std::string_view to_string(FailureCause c) {
  switch (c) {
    case FailureCause::none:
      return "none";
    case FailureCause::collapse:
      return "collapse";
    case FailureCause::dead_end:
      return "dead_end";
    case FailureCause::max_actions:
      return "max_actions";
  }
  return "unknown";
}

namespace {

double truncated_normal(double sigma, double limit, Rng& rng) {
  if (sigma <= 0.0) return 0.0;
  std::normal_distribution<double> normal(0.0, sigma);
  while (true) {
    const double v = normal(rng);
    if (std::abs(v) <= limit) return v;
  }
}

Polygon translated(const Polygon& p, double dz) {
  Polygon out = p;
  for (Vec2& v : out) v.z += dz;
  return out;
}

// Downward distance from the vertices of `upper` to the edges of `lower`
// along vertical rays; infinity when no ray hits.
double ray_drop(const Polygon& upper, const Polygon& lower, bool reverse) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = lower.size();
  for (const Vec2& v : upper) {
    for (std::size_t e = 0; e < n; ++e) {
      const Vec2 a = lower[e];
      const Vec2 b = lower[(e + 1) % n];
      const double lo = std::min(a.x, b.x);
      const double hi = std::max(a.x, b.x);
      if (hi - lo < 1e-12 || v.x < lo - 1e-12 || v.x > hi + 1e-12) continue;
      const double z = a.z + (b.z - a.z) * (v.x - a.x) / (b.x - a.x);
      const double gap = reverse ? z - v.z : v.z - z;
      if (gap >= -1e-9) best = std::min(best, gap);
    }
  }
  return best;
}

}  // namespace

double drop_distance(const Polygon& poly, const std::vector<Polygon>& others, const ConstructionSpace& space) {
  const Bounds pb = bounds_of(poly);
  double t = pb.z_min - space.z_min;
  for (const Polygon& q : others) {
    const Bounds qb = bounds_of(q);
    if (qb.x_max <= pb.x_min + 1e-12 || pb.x_max <= qb.x_min + 1e-12) continue;
    if (polygons_overlap(poly, q)) return -1.0;
    if (qb.z_min >= pb.z_max) continue;
    // Vertices of poly falling onto q, and vertices of q rising into poly.
    t = std::min(t, ray_drop(poly, q, false));
    t = std::min(t, ray_drop(q, poly, true));
  }
  return t;
}

SettleResult perturb_and_settle(const Placement& intended, const Assembly& state, const Task& task,
                                const NoiseModel& noise, Rng& rng, const ActionSpaceConfig& cfg) {
  SettleResult res;
  res.actual = intended;
  if (noise.is_zero()) {
    res.attempts = 1;
    return res;
  }
  const ContactTolerance tol = settle_tolerance(noise, cfg.contact);
  const ConstructionSpace& sp = cfg.space;
  std::vector<Polygon> blocks;
  for (const Placement& p : state.placements) blocks.push_back(world_polygon(p));
  std::vector<Polygon> solids = blocks;
  std::vector<Polygon> obstacles;
  for (const Obstacle& o : task.obstacles) {
    obstacles.push_back(o.polygon());
    solids.push_back(obstacles.back());
  }
  const double lift = noise.max_offset + 1e-6;

  for (int attempt = 1; attempt <= 3; ++attempt) {
    res.attempts = attempt;
    const double dx = truncated_normal(noise.sigma_xy, noise.max_offset, rng);
    const double dz = truncated_normal(noise.sigma_xy, noise.max_offset, rng);
    const double dt = truncated_normal(noise.sigma_theta, 3.0 * noise.sigma_theta, rng);
    Placement p = make_placement(intended.shape,
                                 {intended.pose.x + dx, intended.pose.z + dz + lift, intended.pose.theta + dt},
                                 intended.shape_id);
    Polygon poly = world_polygon(p);
    const double drop = drop_distance(poly, solids, sp);
    if (drop < -1e-9) {
      res.actual = p;
      res.reason = "overlap";
      continue;
    }
    p.pose.z -= drop;
    poly = translated(poly, -drop);
    res.actual = p;
    const Bounds b = bounds_of(poly);
    if (b.x_min < sp.x_min - 1e-9 || b.x_max > sp.x_max + 1e-9 || b.z_max > sp.z_max + 1e-9) {
      res.reason = "bounds";
      continue;
    }
    if (std::any_of(blocks.begin(), blocks.end(), [&](const Polygon& q) { return polygons_overlap(poly, q); })) {
      res.reason = "overlap";
      continue;
    }
    if (std::any_of(obstacles.begin(), obstacles.end(),
                    [&](const Polygon& q) { return polygon_distance(poly, q) < kObstacleClearance; })) {
      res.reason = "obstacle";
      continue;
    }
    std::vector<Polygon> after = blocks;
    after.push_back(poly);
    StabilityOptions opt;
    opt.mu = task.mu;
    opt.contact = tol;
    opt.support_margin = cfg.support_margin;
    if (!is_stable(after, sp, opt)) {
      res.collapsed = true;
      res.reason = "unstable";
      return res;
    }
    res.reason.clear();
    return res;
  }
  res.collapsed = true;
  return res;
}

double EpisodeResult::avg_offset() const {
  if (offsets.empty()) return 0.0;
  double s = 0.0;
  for (double o : offsets) s += o;
  return s / static_cast<double>(offsets.size());
}

double EpisodeResult::max_offset() const {
  double m = 0.0;
  for (double o : offsets) m = std::max(m, o);
  return m;
}

EpisodeResult closed_loop_episode(const ApproximatorParams& params, const PreparedTask& task, const NoiseModel& noise,
                                  const ClosedLoopConfig& cfg, Rng& rng) {
  noise.validate();
  const Task& t = *task.task;
  ActionSpaceConfig acfg = cfg.actions;
  acfg.contact = settle_tolerance(noise, cfg.actions.contact);

  EpisodeResult res;
  res.task_id = t.id;
  Assembly state;
  std::vector<Placement> actions = enumerate_actions(state, t, acfg);
  if (actions.empty()) {
    res.failure = FailureCause::dead_end;
    return res;
  }
  for (int k = 0;; ++k) {
    const std::vector<double> q = action_values(params, state, task, actions);
    const std::size_t j = argmax_q(q);
    const Placement& intended = actions[j];

    SettleResult settled;
    std::optional<Placement> forced = cfg.execute ? cfg.execute(k, intended, state) : std::nullopt;
    if (forced) {
      settled.actual = *forced;
      settled.attempts = 1;
    } else {
      settled = perturb_and_settle(intended, state, t, noise, rng, acfg);
    }
    const double offset =
        std::hypot(settled.actual.pose.x - intended.pose.x, settled.actual.pose.z - intended.pose.z) / cfg.block_size;
    res.placements_intended.push_back(intended);
    res.placements_actual.push_back(settled.actual);
    res.offsets.push_back(offset);
    res.q_values.push_back(q[j]);
    res.attempts.push_back(settled.attempts);
    if (offset > cfg.divergence_threshold) res.diverged = true;
    if (settled.collapsed) {
      res.failure = FailureCause::collapse;
      return res;
    }
    state = with_placement(state, settled.actual);
    if (all_targets_reached(state, t)) {
      res.success = true;
      return res;
    }
    if (state.size() >= static_cast<std::size_t>(t.max_actions)) {
      res.failure = FailureCause::max_actions;
      return res;
    }
    actions = enumerate_actions(state, t, acfg);
    if (actions.empty()) {
      res.failure = FailureCause::dead_end;
      return res;
    }
  }
}

std::string step_log_jsonl(const EpisodeResult& r) {
  using nlohmann::json;
  auto pose = [](const Placement& p) {
    return json{{"shape", p.shape_id}, {"x", p.pose.x}, {"z", p.pose.z}, {"theta", p.pose.theta}};
  };
  std::string out;
  const std::size_t n = r.offsets.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::string termination = "none";
    if (k + 1 == n) termination = r.success ? "success" : std::string(to_string(r.failure));
    json rec = {{"task", r.task_id},
                {"step", k},
                {"intended", pose(r.placements_intended[k])},
                {"actual", pose(r.placements_actual[k])},
                {"offset", r.offsets[k]},
                {"q", r.q_values[k]},
                {"attempts", r.attempts[k]},
                {"termination", termination}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

}  // namespace blockforge
