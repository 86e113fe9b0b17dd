#include "blockforge/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "blockforge/errors.hpp"
#include "blockforge/parallel.hpp"

namespace blockforge {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  std::uint64_t s = splitmix(seed);
  s = splitmix(s ^ h);
  s = splitmix(s ^ a);
  return splitmix(s ^ b);
}

void TrainingConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("gamma must be in [0, 1]");
  if (!(learning_rate >= 0.0)) throw Error("learning rate must be non-negative");
  if (episodes < 0) throw Error("episodes must be non-negative");
  if (batch < 1 || n_policy_iter < 0 || n_optim_iter < 0) throw Error("batch and iteration counts must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0)) {
    throw Error("epsilon must be in [0, 1]");
  }
  if (capacity < 1) throw Error("replay capacity must be positive");
  if (arch.d != features.d) throw ShapeError("architecture d differs from the feature resolution");
  arch.validate();
}

double TrainingConfig::epsilon(int episode) const {
  const int span = epsilon_decay_episodes - 1;
  if (span <= 0) return epsilon_end;
  const double f = std::clamp(static_cast<double>(episode - 1) / span, 0.0, 1.0);
  return epsilon_start + (epsilon_end - epsilon_start) * f;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
}

const Transition& ReplayBuffer::at(std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  const std::size_t total = items_.size();
  n = std::min(n, total);
  // Partial Fisher-Yates over an index permutation.
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  std::vector<const Transition*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.push_back(&items_[idx[i]]);
  }
  return out;
}

double q_value(const FeatureImage& psi_out, const RewardField& rho) { return inner(psi_out, rho.field); }

std::size_t argmax_q(const std::vector<double>& q) {
  if (q.empty()) throw IllegalAction("no actions to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (q[i] > q[best] + 1e-12) best = i;
  }
  return best;
}

std::vector<double> action_values(const ApproximatorParams& params, const Assembly& state, const PreparedTask& task,
                                  const std::vector<Placement>& actions) {
  const int d = params.arch.d;
  std::vector<FeatureImage> phis;
  phis.reserve(actions.size());
  for (const Placement& a : actions) phis.push_back(rasterize_action(a, d));
  return candidate_q_values(params, state_features(state, d), task.xi, phis, task.rho);
}

namespace {

std::size_t choose(const ApproximatorParams& params, const Assembly& state, const PreparedTask& task,
                   const std::vector<Placement>& actions, double epsilon, Rng& rng, double* q_out) {
  if (actions.empty()) throw IllegalAction("dead end: no feasible actions");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (epsilon > 0.0 && unit(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
    if (q_out) *q_out = std::numeric_limits<double>::quiet_NaN();
    return pick(rng);
  }
  const std::vector<double> q = action_values(params, state, task, actions);
  const std::size_t best = argmax_q(q);
  if (q_out) *q_out = q[best];
  return best;
}

}  // namespace

std::size_t select_action(const ApproximatorParams& params, const Assembly& state, const PreparedTask& task,
                          const std::vector<Placement>& actions, double epsilon, Rng& rng) {
  return choose(params, state, task, actions, epsilon, rng, nullptr);
}

const std::vector<Placement>& TargetCache::actions(const Assembly& s, int task, const Task& t,
                                                   const ActionSpaceConfig& cfg) {
  const Key key{assembly_hash(s), task};
  auto it = actions_.find(key);
  if (it != actions_.end()) return it->second;
  if (actions_.size() >= 20000) actions_.clear();
  return actions_.emplace(key, enumerate_actions(s, t, cfg)).first->second;
}

const FeatureImage* TargetCache::target(std::uint64_t hash, int task) {
  auto it = targets_.find({hash, task});
  if (it == targets_.end()) return nullptr;
  ++hits_;
  return &it->second;
}

void TargetCache::store_target(std::uint64_t hash, int task, FeatureImage y) {
  targets_.insert_or_assign(Key{hash, task}, std::move(y));
}

std::vector<FeatureImage> bellman_targets(const std::vector<const Transition*>& batch,
                                          const ApproximatorParams& target_params, double gamma,
                                          const std::vector<PreparedTask>& tasks, const ActionSpaceConfig& cfg,
                                          TargetCache* cache) {
  const int d = target_params.arch.d;
  std::vector<FeatureImage> out;
  out.reserve(batch.size());
  for (const Transition* t : batch) {
    const PreparedTask& task = tasks.at(static_cast<std::size_t>(t->task));
    FeatureImage y = rasterize_action(t->action, d);
    if (t->terminal || gamma == 0.0) {
      out.push_back(std::move(y));
      continue;
    }
    const std::uint64_t hash = assembly_hash(t->next_state);
    const FeatureImage* cached = cache ? cache->target(hash, t->task) : nullptr;
    FeatureImage psi_next;
    if (cached) {
      psi_next = *cached;
    } else {
      std::vector<Placement> local;
      const std::vector<Placement>& acts =
          cache ? cache->actions(t->next_state, t->task, *task.task, cfg)
                : (local = enumerate_actions(t->next_state, *task.task, cfg));
      if (acts.empty()) {
        out.push_back(std::move(y));
        continue;
      }
      const std::size_t j = argmax_q(action_values(target_params, t->next_state, task, acts));
      psi_next = forward_psi(target_params, state_features(t->next_state, d), rasterize_action(acts[j], d), task.xi);
      if (cache) cache->store_target(hash, t->task, psi_next);
    }
    auto& yp = y.pixels();
    const auto& pp = psi_next.pixels();
    for (std::size_t k = 0; k < yp.size(); ++k) yp[k] += gamma * pp[k];
    out.push_back(std::move(y));
  }
  return out;
}

std::vector<NetInput> make_inputs(const std::vector<const Transition*>& batch, const std::vector<PreparedTask>& tasks,
                                  std::vector<FeatureImage>& storage) {
  if (batch.empty()) return {};
  const int d = tasks.at(static_cast<std::size_t>(batch.front()->task)).rho.field.d();
  storage.clear();
  storage.reserve(2 * batch.size());
  std::vector<NetInput> inputs;
  inputs.reserve(batch.size());
  for (const Transition* t : batch) {
    storage.push_back(state_features(t->state, d));
    storage.push_back(rasterize_action(t->action, d));
    inputs.push_back({&storage[storage.size() - 2], &storage.back(), &tasks.at(static_cast<std::size_t>(t->task)).xi});
  }
  return inputs;
}

double optimize_step(ApproximatorParams& params, const std::vector<const Transition*>& batch,
                     const std::vector<FeatureImage>& targets, const std::vector<PreparedTask>& tasks, double lr,
                     AdamState& adam) {
  std::vector<FeatureImage> storage;
  const std::vector<NetInput> inputs = make_inputs(batch, tasks, storage);
  std::vector<float> grad;
  const double loss = loss_and_gradient(params, inputs, targets, &grad);
  if (!std::isfinite(loss)) throw NumericalDivergence("non-finite loss (" + std::to_string(loss) + ")");
  adam_update(params.values, grad, lr, adam);
  if (!params.all_finite()) throw NumericalDivergence("non-finite parameters after the Adam step");
  return loss;
}

EpisodeRecord run_episode(const ApproximatorParams& params, const PreparedTask& task, const ActionSpaceConfig& cfg,
                          double gamma, double epsilon, Rng& rng) {
  const Task& t = *task.task;
  EpisodeRecord rec;
  rec.task_id = t.id;
  Assembly state;
  std::vector<Placement> actions = enumerate_actions(state, t, cfg);
  if (actions.empty()) {
    rec.terminal = Terminal::dead_end;
    return rec;
  }
  double discount = 1.0;
  while (true) {
    double q = 0.0;
    const std::size_t idx = choose(params, state, task, actions, epsilon, rng, &q);
    const Placement a = actions[idx];
    StepOutcome out = step(state, t, a, cfg);
    const double r = reward(a, task.rho);
    rec.actions.push_back(a);
    rec.rewards.push_back(r);
    rec.q_values.push_back(q);
    rec.cumulative_reward += r;
    rec.discounted_return += discount * r;
    discount *= gamma;
    state = std::move(out.next_state);
    if (out.terminal != Terminal::none) {
      rec.terminal = out.terminal;
      rec.success = out.terminal == Terminal::success;
      return rec;
    }
    actions = std::move(out.next_actions);
  }
}

std::vector<Transition> transitions_of(const EpisodeRecord& ep, int task) {
  std::vector<Transition> out;
  Assembly state;
  for (std::size_t k = 0; k < ep.actions.size(); ++k) {
    Transition t;
    t.state = state;
    t.action = ep.actions[k];
    t.next_state = with_placement(state, ep.actions[k]);
    t.task = task;
    t.terminal = k + 1 == ep.actions.size() && ep.terminal != Terminal::none;
    state = t.next_state;
    out.push_back(std::move(t));
  }
  return out;
}

std::string MetricsLog::to_csv() const {
  std::ostringstream out;
  out << "episode,solved_count,mean_return,mean_blocks,mean_discounted_return,mean_loss,epsilon,transitions\n";
  char buf[256];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%zu\n", r.episode, r.solved_count, r.mean_return,
                  r.mean_blocks, r.mean_discounted_return, r.mean_loss, r.epsilon, r.transitions);
    out << buf;
  }
  return out.str();
}

MetricsLog MetricsLog::from_csv(const std::string& text) {
  MetricsLog log;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    MetricsRow r;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf,%lf,%zu", &r.episode, &r.solved_count, &r.mean_return,
                    &r.mean_blocks, &r.mean_discounted_return, &r.mean_loss, &r.epsilon, &r.transitions) != 8) {
      throw Error("malformed metrics row: " + line);
    }
    log.rows.push_back(r);
  }
  return log;
}

namespace {

std::vector<EpisodeRecord> rollouts(const ApproximatorParams& params, const std::vector<PreparedTask>& prepared,
                                    const TrainingConfig& cfg, double epsilon, std::string_view stream, int episode) {
  std::vector<EpisodeRecord> records(prepared.size());
  parallel_for(prepared.size(), [&](std::size_t i) {
    Rng rng(derive_seed(cfg.seed, stream, static_cast<std::uint64_t>(episode), i));
    records[i] = run_episode(params, prepared[i], cfg.actions, cfg.gamma, epsilon, rng);
  });
  return records;
}

std::vector<PreparedTask> prepare_all(const std::vector<Task>& tasks, const FeatureParams& fp) {
  std::vector<PreparedTask> prepared;
  prepared.reserve(tasks.size());
  for (const Task& t : tasks) prepared.push_back(prepare_task(t, fp));
  return prepared;
}

}  // namespace

std::vector<EpisodeRecord> evaluate(const ApproximatorParams& params, const std::vector<Task>& tasks,
                                    const TrainingConfig& cfg) {
  if (params.arch.d != cfg.features.d) throw ShapeError("parameters were trained at a different resolution");
  return rollouts(params, prepare_all(tasks, cfg.features), cfg, 0.0, "eval", 0);
}

TrainResult train(const std::vector<Task>& tasks, const TrainingConfig& cfg, const EpisodeCallback& on_episode) {
  cfg.validate();
  if (tasks.empty()) throw Error("training needs at least one task");
  TrainResult res;
  res.params = init_params<float>(derive_seed(cfg.seed, "init"), cfg.arch);
  res.best_params = res.params;
  if (cfg.episodes == 0) return res;

  const std::vector<PreparedTask> prepared = prepare_all(tasks, cfg.features);
  ReplayBuffer buffer(cfg.capacity);
  AdamState adam;
  TargetCache cache;
  Rng replay_rng(derive_seed(cfg.seed, "replay"));
  ApproximatorParams& params = res.params;
  int best_solved = -1;
  double best_return = -std::numeric_limits<double>::infinity();

  for (int ep = 1; ep <= cfg.episodes; ++ep) {
    const double eps = cfg.epsilon(ep);
    const std::vector<EpisodeRecord> behaviour = rollouts(params, prepared, cfg, eps, "rollout", ep);
    for (std::size_t i = 0; i < behaviour.size(); ++i) {
      for (Transition& t : transitions_of(behaviour[i], static_cast<int>(i))) buffer.push(std::move(t));
    }

    double loss_sum = 0.0;
    int loss_count = 0;
    for (int pi = 0; pi < cfg.n_policy_iter && buffer.size() > 0; ++pi) {
      const ApproximatorParams target = params;
      cache.reset_targets();
      for (int oi = 0; oi < cfg.n_optim_iter; ++oi) {
        const std::vector<const Transition*> batch = buffer.sample(static_cast<std::size_t>(cfg.batch), replay_rng);
        const std::vector<FeatureImage> y = bellman_targets(batch, target, cfg.gamma, prepared, cfg.actions, &cache);
        try {
          loss_sum += optimize_step(params, batch, y, prepared, cfg.learning_rate, adam);
        } catch (const NumericalDivergence& e) {
          throw NumericalDivergence(std::string(e.what()) + " at episode " + std::to_string(ep) +
                                    ", policy iteration " + std::to_string(pi + 1) + ", step " +
                                    std::to_string(oi + 1));
        }
        ++loss_count;
      }
    }

    const std::vector<EpisodeRecord> greedy = rollouts(params, prepared, cfg, 0.0, "eval", ep);
    MetricsRow row;
    row.episode = ep;
    for (const EpisodeRecord& r : greedy) {
      row.solved_count += r.success ? 1 : 0;
      row.mean_return += r.cumulative_reward;
      row.mean_discounted_return += r.discounted_return;
      row.mean_blocks += static_cast<double>(r.blocks());
    }
    const double n = static_cast<double>(greedy.size());
    row.mean_return /= n;
    row.mean_discounted_return /= n;
    row.mean_blocks /= n;
    row.mean_loss = loss_count ? loss_sum / loss_count : 0.0;
    row.epsilon = eps;
    row.transitions = buffer.size();
    res.metrics.rows.push_back(row);

    if (row.solved_count > best_solved || (row.solved_count == best_solved && row.mean_return > best_return + 1e-12)) {
      best_solved = row.solved_count;
      best_return = row.mean_return;
      res.best_params = params;
      res.best_episode = ep;
    }
    if (on_episode) on_episode(row, params);
  }
  return res;
}

}  // namespace blockforge
