#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "blockforge/env.hpp"
#include "blockforge/features.hpp"
#include "blockforge/nn.hpp"

namespace blockforge {

using Rng = std::mt19937_64;

// Named sub-seed: a pure function of its arguments, so each consumer of
// randomness gets an independent stream regardless of scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t a = 0, std::uint64_t b = 0);

struct TrainingConfig {
  double gamma = 0.9;
  double learning_rate = 5e-4;
  int episodes = 50;
  int batch = 64;
  int n_policy_iter = 2;
  int n_optim_iter = 10;
  double epsilon_start = 0.2;
  double epsilon_end = 0.02;
  int epsilon_decay_episodes = 25;
  std::uint64_t seed = 0;
  std::size_t capacity = 50000;
  FeatureParams features;
  Architecture arch = Architecture::for_resolution(64);
  ActionSpaceConfig actions;

  void validate() const;
  // Linear decay from epsilon_start (episode 1) to epsilon_end.
  double epsilon(int episode) const;
};

struct Transition {
  Assembly state;
  Placement action;
  Assembly next_state;
  int task = 0;  // index into the training task list
  bool terminal = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  // Oldest first.
  const Transition& at(std::size_t i) const;
  // min(n, size()) distinct transitions chosen uniformly.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> items_;
};

double q_value(const FeatureImage& psi_out, const RewardField& rho);

// Index of the chosen action. With probability epsilon a uniform pick,
// otherwise the argmax of q (ties within 1e-12 go to the lower index).
// Throws IllegalAction on an empty list.
std::size_t select_action(const ApproximatorParams& params, const Assembly& state, const PreparedTask& task,
                          const std::vector<Placement>& actions, double epsilon, Rng& rng);
std::size_t argmax_q(const std::vector<double>& q);
std::vector<double> action_values(const ApproximatorParams& params, const Assembly& state, const PreparedTask& task,
                                  const std::vector<Placement>& actions);

// Memoizes next-state action sets and target-network regression targets.
// Targets are only valid for one target-parameter version; call
// reset_targets() whenever the target network changes.
class TargetCache {
 public:
  const std::vector<Placement>& actions(const Assembly& s, int task, const Task& t, const ActionSpaceConfig& cfg);
  const FeatureImage* target(std::uint64_t hash, int task);
  void store_target(std::uint64_t hash, int task, FeatureImage y);
  void reset_targets() { targets_.clear(); }
  std::size_t target_hits() const { return hits_; }

 private:
  struct Key {
    std::uint64_t hash;
    int task;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const { return k.hash ^ (static_cast<std::uint64_t>(k.task) * 0x9e3779b97f4a7c15ULL); }
  };
  std::unordered_map<Key, std::vector<Placement>, KeyHash> actions_;
  std::unordered_map<Key, FeatureImage, KeyHash> targets_;
  std::size_t hits_ = 0;
};

// Y = phi(A) for terminal transitions (including dead ends), otherwise
// phi(A) + gamma * Psi_target(S', A', T) with A' the target network's argmax.
std::vector<FeatureImage> bellman_targets(const std::vector<const Transition*>& batch,
                                          const ApproximatorParams& target_params, double gamma,
                                          const std::vector<PreparedTask>& tasks, const ActionSpaceConfig& cfg,
                                          TargetCache* cache = nullptr);

std::vector<NetInput> make_inputs(const std::vector<const Transition*>& batch, const std::vector<PreparedTask>& tasks,
                                  std::vector<FeatureImage>& storage);

// One Adam step on the batch; returns the loss before the step. Throws
// NumericalDivergence on a non-finite loss or parameters.
double optimize_step(ApproximatorParams& params, const std::vector<const Transition*>& batch,
                     const std::vector<FeatureImage>& targets, const std::vector<PreparedTask>& tasks, double lr,
                     AdamState& adam);

struct EpisodeRecord {
  std::string task_id;
  std::vector<Placement> actions;
  std::vector<double> rewards;
  std::vector<double> q_values;  // q of the chosen action at decision time
  Terminal terminal = Terminal::none;
  bool success = false;
  double cumulative_reward = 0.0;
  double discounted_return = 0.0;
  std::size_t blocks() const { return actions.size(); }
};

// Rolls out the epsilon-greedy policy from the empty assembly.
EpisodeRecord run_episode(const ApproximatorParams& params, const PreparedTask& task, const ActionSpaceConfig& cfg,
                          double gamma, double epsilon, Rng& rng);

std::vector<Transition> transitions_of(const EpisodeRecord& ep, int task);

struct MetricsRow {
  int episode = 0;
  int solved_count = 0;
  double mean_return = 0.0;  // undiscounted cumulative reward of the greedy policy
  double mean_blocks = 0.0;
  double mean_discounted_return = 0.0;
  double mean_loss = 0.0;
  double epsilon = 0.0;
  std::size_t transitions = 0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;
  std::string to_csv() const;
  static MetricsLog from_csv(const std::string& text);
};

struct TrainResult {
  ApproximatorParams params;
  ApproximatorParams best_params;
  int best_episode = 0;
  MetricsLog metrics;
};

using EpisodeCallback = std::function<void(const MetricsRow&, const ApproximatorParams&)>;

// Successor-feature Q-learning. Each episode rolls out the epsilon-greedy
// policy on every task into the replay buffer, then runs n_policy_iter
// rounds of n_optim_iter Adam steps, refreshing the target network at the
// start of each round. After each episode's updates the greedy policy is evaluated on every task to produce the
// metrics row; best_params is the first parameter set reaching the highest
// solved count (ties broken by return).
TrainResult train(const std::vector<Task>& tasks, const TrainingConfig& cfg, const EpisodeCallback& on_episode = {});

// Greedy rollouts on every task with the given parameters.
std::vector<EpisodeRecord> evaluate(const ApproximatorParams& params, const std::vector<Task>& tasks,
                                    const TrainingConfig& cfg);

}  // namespace blockforge
