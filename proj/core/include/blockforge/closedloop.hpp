#pragma once

#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blockforge/env.hpp"
#include "blockforge/learner.hpp"

namespace blockforge {

// Per-axis truncated Gaussian placement error. Translations are in units of
// the block size and truncated at max_offset; rotation is truncated at
// three standard deviations.
struct NoiseModel {
  double sigma_xy = 0.02;
  double sigma_theta = 0.5 * std::numbers::pi / 180.0;
  double max_offset = 0.09;
  std::uint64_t seed = 0;

  void validate() const;
  bool is_zero() const { return sigma_xy == 0.0 && sigma_theta == 0.0; }
};

// Contact tolerance wide enough to register a block resting on a face it
// was meant to mate with despite the sampled tilt.
ContactTolerance settle_tolerance(const NoiseModel& noise, const ContactTolerance& base = {});

enum class FailureCause { none, collapse, dead_end, max_actions };
std::string_view to_string(FailureCause c);

struct SettleResult {
  bool collapsed = false;
  Placement actual;
  int attempts = 0;
  std::string reason;  // why the last attempt failed, empty on success
};

// Samples a perturbed pose, drops the block vertically to its first
// contact, and retries with fresh noise (up to three attempts) when the
// result overlaps, leaves the construction space or touches an obstacle. An
// unstable settled assembly is a collapse.
SettleResult perturb_and_settle(const Placement& intended, const Assembly& state, const Task& task,
                                const NoiseModel& noise, Rng& rng, const ActionSpaceConfig& cfg = {});

// Vertical distance the polygon can fall before touching the floor, a
// block or an obstacle. Negative when it already intersects something.
double drop_distance(const Polygon& poly, const std::vector<Polygon>& others, const ConstructionSpace& space);

// Replaces the simulated execution of step `index`; returning nullopt falls
// back to perturb_and_settle.
using ExecutionOverride = std::function<std::optional<Placement>(int index, const Placement& intended,
                                                                 const Assembly& state)>;

struct ClosedLoopConfig {
  ActionSpaceConfig actions;
  double block_size = 1.0;
  double divergence_threshold = 0.05;
  ExecutionOverride execute;
};

struct EpisodeResult {
  std::string task_id;
  bool success = false;
  std::vector<Placement> placements_intended;
  std::vector<Placement> placements_actual;
  std::vector<double> offsets;
  std::vector<double> q_values;
  std::vector<int> attempts;
  FailureCause failure = FailureCause::none;
  bool diverged = false;  // some step's offset exceeded the divergence threshold

  double avg_offset() const;
  double max_offset() const;
};

EpisodeResult closed_loop_episode(const ApproximatorParams& params, const PreparedTask& task, const NoiseModel& noise,
                                  const ClosedLoopConfig& cfg, Rng& rng);

// One JSON object per executed step.
std::string step_log_jsonl(const EpisodeResult& r);

}  // namespace blockforge
