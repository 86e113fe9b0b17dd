#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "blockforge/geometry.hpp"
#include "blockforge/stability.hpp"

namespace blockforge {

struct Obstacle {
  Vec2 center;
  double half_side = 0.5;

  Polygon polygon() const { return axis_aligned_square(center, half_side); }
};

struct Task {
  std::string id;
  std::vector<Vec2> targets;
  std::vector<Obstacle> obstacles;
  std::vector<Shape> shapes;
  int max_actions = 10;
  double mu = 0.6;
};

// Throws TaskParseError (line 0) if the task violates its invariants.
void validate_task(const Task& task, const ConstructionSpace& space = {});

struct Assembly {
  std::vector<Placement> placements;

  std::size_t size() const { return placements.size(); }
  bool empty() const { return placements.empty(); }
};

Assembly with_placement(const Assembly& s, const Placement& a);

// Hash of the quantized placement sequence; equal assemblies hash equal.
std::uint64_t assembly_hash(const Assembly& s, double resolution = 1e-6);

enum class Terminal { none, success, max_actions, dead_end };
std::string_view to_string(Terminal t);

struct StepOutcome {
  Assembly next_state;
  Terminal terminal = Terminal::none;
  std::vector<int> reached;  // sorted target indices covered by next_state
  // Feasible actions of next_state; empty when terminal.
  std::vector<Placement> next_actions;
};

struct ActionSpaceConfig {
  int shifts_per_face = 5;
  double floor_step = 0.25;
  double dedupe_resolution = 1e-3;
  ContactTolerance contact;
  double support_margin = 0.0;
  ConstructionSpace space;
};

enum class Invalidity { none, bounds, overlap, obstacle, floor, unstable };
std::string_view to_string(Invalidity r);

struct Validity {
  bool valid = true;
  Invalidity reason = Invalidity::none;
};

inline constexpr double kObstacleClearance = 1e-6;

Validity is_valid_action(const Assembly& state, const Task& task, const Placement& a,
                         const ActionSpaceConfig& cfg = {});

std::vector<int> reached_targets(const Assembly& state, const Task& task);
bool all_targets_reached(const Assembly& state, const Task& task);

// Candidates from floor poses and face mating, deduplicated, filtered by
// is_valid_action and returned in canonical (shape, x, z, theta) order.
// Returns an empty list once the state is terminal by success or length.
std::vector<Placement> enumerate_actions(const Assembly& state, const Task& task,
                                         const ActionSpaceConfig& cfg = {});

// Unfiltered candidate set (before validity filtering) in canonical order.
std::vector<Placement> candidate_actions(const Assembly& state, const Task& task,
                                         const ActionSpaceConfig& cfg = {});

// Throws IllegalAction for an invalid action or an already terminal state.
StepOutcome step(const Assembly& state, const Task& task, const Placement& a,
                 const ActionSpaceConfig& cfg = {});

}  // namespace blockforge
