#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "blockforge/checkpoint.hpp"
#include "blockforge/closedloop.hpp"
#include "blockforge/errors.hpp"
#include "blockforge/learner.hpp"
#include "blockforge/parallel.hpp"
#include "blockforge/render.hpp"
#include "blockforge/task_io.hpp"
#include "json.hpp"

#ifndef BLOCKFORGE_GIT_DESCRIBE
#define BLOCKFORGE_GIT_DESCRIBE "unknown"
#endif

namespace blockforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string tasks = "tasks";
  std::string task_ids;
  std::uint64_t seed = 0;
  int d = 64;
  double sigma_px = 2.0;
  double reward_c = 0.001;
  double mu = 0.6;
  int shifts = 5;
  std::string out;

  CLI::Option* d_opt = nullptr;
  CLI::Option* sigma_opt = nullptr;
  CLI::Option* c_opt = nullptr;
  CLI::Option* mu_opt = nullptr;
  CLI::Option* shifts_opt = nullptr;
};

void add_common(CLI::App& app, Common& c) {
  app.add_option("--tasks", c.tasks, "directory of task files")->capture_default_str();
  app.add_option("--task-ids", c.task_ids, "comma-separated subset of task ids");
  app.add_option("--seed", c.seed, "root random seed")->capture_default_str();
  c.d_opt = app.add_option("--d", c.d, "feature image resolution")->capture_default_str();
  c.sigma_opt = app.add_option("--sigma-px", c.sigma_px, "reward Gaussian sigma in pixels")->capture_default_str();
  c.c_opt = app.add_option("--reward-c", c.reward_c, "per-pixel material cost C")->capture_default_str();
  c.mu_opt = app.add_option("--mu", c.mu, "override every task's friction coefficient");
  c.shifts_opt = app.add_option("--shifts", c.shifts, "shifts per mated face (odd)")->capture_default_str();
  app.add_option("--out", c.out, "output directory (must be new or empty)");
}

// Returns an exit code when parsing ends the command (help or error).
std::optional<int> parse(CLI::App& app, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << app.get_name() << ": " << e.what() << "\nrun with --help for usage\n";
    return kExitUsage;
  }
  return std::nullopt;
}

struct UsageError : Error {
  using Error::Error;
};

std::vector<Task> load_tasks(const Common& c) {
  std::vector<Task> tasks;
  try {
    tasks = load_task_dir(c.tasks);
  } catch (const TaskParseError& e) {
    throw UsageError(e.what());
  }
  if (!c.task_ids.empty()) {
    std::vector<std::string> wanted;
    std::stringstream ss(c.task_ids);
    for (std::string id; std::getline(ss, id, ',');) {
      if (!id.empty()) wanted.push_back(id);
    }
    std::vector<Task> picked;
    for (const std::string& id : wanted) {
      auto it = std::find_if(tasks.begin(), tasks.end(), [&](const Task& t) { return t.id == id; });
      if (it == tasks.end()) throw UsageError("unknown task id '" + id + "'");
      picked.push_back(*it);
    }
    tasks = std::move(picked);
  }
  if (tasks.empty()) throw UsageError("no tasks found in " + c.tasks);
  if (c.mu_opt->count() > 0) {
    if (!(c.mu >= 0.0)) throw UsageError("--mu must be non-negative");
    for (Task& t : tasks) t.mu = c.mu;
  }
  return tasks;
}

void check_shifts(const Common& c) {
  if (c.shifts < 1 || c.shifts % 2 == 0) throw UsageError("--shifts must be a positive odd number");
}

void prepare_out(const std::string& dir) {
  if (dir.empty()) return;
  const fs::path p(dir);
  if (fs::exists(p)) {
    if (!fs::is_directory(p)) throw UsageError("--out " + dir + " exists and is not a directory");
    if (!fs::is_empty(p)) throw UsageError("--out " + dir + " is not empty; refusing to overwrite a previous run");
  }
  fs::create_directories(p);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

std::string now_iso() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json task_list(const std::vector<Task>& tasks) {
  json ids = json::array();
  for (const Task& t : tasks) ids.push_back(t.id);
  return ids;
}

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                    const json& config, std::uint64_t seed, const std::vector<Task>& tasks, const std::string& tasks_dir,
                    double seconds, const std::vector<std::string>& outputs) {
  const json m = {{"command", command},
                  {"args", args},
                  {"config", config},
                  {"seed", seed},
                  {"tasks_dir", tasks_dir},
                  {"tasks", task_list(tasks)},
                  {"git_describe", BLOCKFORGE_GIT_DESCRIBE},
                  {"started_at", now_iso()},
                  {"wall_clock_seconds", seconds},
                  {"threads", worker_count()},
                  {"outputs", outputs}};
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Loads the checkpoint and applies feature/action overrides given on the
// command line.
Checkpoint load_for(const std::string& path, const Common& c) {
  std::optional<int> want;
  if (c.d_opt->count() > 0) want = c.d;
  Checkpoint ck = load_checkpoint(path, want);
  if (c.sigma_opt->count() > 0) ck.config.features.sigma_px = c.sigma_px;
  if (c.c_opt->count() > 0) ck.config.features.reward_c = c.reward_c;
  if (c.shifts_opt->count() > 0) ck.config.actions.shifts_per_face = c.shifts;
  return ck;
}

template <class Fn>
int guarded(std::ostream& err, const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError& e) {
    err << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << name << ": checkpoint error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const NumericalDivergence& e) {
    err << name << ": numerical divergence: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << name << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int cmd_train(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Train the successor-feature policy on a task set", "blockforge train");
  Common c;
  add_common(app, c);
  TrainingConfig cfg;
  bool quiet = false;
  app.add_option("--episodes", cfg.episodes, "training episodes")->capture_default_str();
  app.add_option("--gamma", cfg.gamma, "discount factor")->capture_default_str();
  app.add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
  app.add_option("--batch", cfg.batch, "replay batch size")->capture_default_str();
  app.add_option("--epsilon-start", cfg.epsilon_start, "initial exploration rate")->capture_default_str();
  app.add_option("--epsilon-end", cfg.epsilon_end, "final exploration rate")->capture_default_str();
  app.add_option("--epsilon-episodes", cfg.epsilon_decay_episodes, "episodes of linear epsilon decay")
      ->capture_default_str();
  app.add_option("--policy-iters", cfg.n_policy_iter, "policy iterations per episode")->capture_default_str();
  app.add_option("--optim-iters", cfg.n_optim_iter, "optimisation steps per policy iteration")->capture_default_str();
  app.add_option("--capacity", cfg.capacity, "replay buffer capacity")->capture_default_str();
  app.add_flag("--quiet", quiet, "suppress per-episode lines");
  if (auto code = parse(app, args, out, err)) return *code;

  return guarded(err, "train", [&]() -> int {
    const auto t0 = std::chrono::steady_clock::now();
    if (c.out.empty()) throw UsageError("--out is required");
    check_shifts(c);
    cfg.seed = c.seed;
    cfg.features = {c.d, c.sigma_px, c.reward_c};
    try {
      cfg.arch = Architecture::for_resolution(c.d);
      cfg.actions.shifts_per_face = c.shifts;
      cfg.validate();
      if (!(c.sigma_px > 0.0) || !(c.reward_c > 0.0)) throw Error("--sigma-px and --reward-c must be positive");
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    const std::vector<Task> tasks = load_tasks(c);
    prepare_out(c.out);
    const fs::path dir(c.out);

    MetricsLog progress;
    auto on_episode = [&](const MetricsRow& r, const ApproximatorParams& params) {
      progress.rows.push_back(r);
      write_file(dir / "metrics.csv", progress.to_csv());
      save_checkpoint(params, cfg, dir / "checkpoint.bfsf");
      if (!quiet) {
        out << "episode " << r.episode << " solved " << r.solved_count << "/" << tasks.size() << " return "
            << fixed(r.mean_return) << " blocks " << fixed(r.mean_blocks, 2) << " loss " << fixed(r.mean_loss, 6)
            << " epsilon " << fixed(r.epsilon, 3) << " [" << fixed(seconds_since(t0), 1) << " s]" << std::endl;
      }
    };
    TrainResult res;
    try {
      res = train(tasks, cfg, on_episode);
    } catch (const NumericalDivergence& e) {
      write_file(dir / "divergence.txt", std::string(e.what()) + "\n" + progress.to_csv());
      throw;
    }
    save_checkpoint(res.params, cfg, dir / "checkpoint.bfsf");
    save_checkpoint(res.best_params, cfg, dir / "checkpoint_best.bfsf");
    write_file(dir / "metrics.csv", res.metrics.to_csv());
    json config = json::parse(config_to_json(cfg));
    config["best_episode"] = res.best_episode;
    write_manifest(dir, "train", args, config, cfg.seed, tasks, c.tasks, seconds_since(t0),
                   {"checkpoint.bfsf", "checkpoint_best.bfsf", "metrics.csv"});
    out << "wrote " << (dir / "checkpoint.bfsf").string() << " (best episode " << res.best_episode << ")\n";
    return kExitOk;
  });
}

int cmd_eval(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Greedy evaluation of a checkpoint on a task set", "blockforge eval");
  Common c;
  add_common(app, c);
  std::string checkpoint;
  bool render = false;
  app.add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  app.add_flag("--render", render, "write one SVG per task into --out");
  if (auto code = parse(app, args, out, err)) return *code;

  return guarded(err, "eval", [&]() -> int {
    const auto t0 = std::chrono::steady_clock::now();
    check_shifts(c);
    if (render && c.out.empty()) throw UsageError("--render needs --out");
    const std::vector<Task> tasks = load_tasks(c);
    const Checkpoint ck = load_for(checkpoint, c);
    prepare_out(c.out);
    const std::vector<EpisodeRecord> records = evaluate(ck.params, tasks, ck.config);

    std::ostringstream csv;
    csv << "task,solved,return,discounted_return,blocks,terminal\n";
    int solved = 0;
    double ret = 0.0;
    double blocks = 0.0;
    std::vector<std::string> outputs;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const EpisodeRecord& r = records[i];
      solved += r.success ? 1 : 0;
      ret += r.cumulative_reward;
      blocks += static_cast<double>(r.blocks());
      out << r.task_id << " solved=" << (r.success ? 1 : 0) << " return=" << fixed(r.cumulative_reward)
          << " blocks=" << r.blocks() << " terminal=" << to_string(r.terminal) << "\n";
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%d,%.9g,%.9g,%zu,%s\n", r.task_id.c_str(), r.success ? 1 : 0,
                    r.cumulative_reward, r.discounted_return, r.blocks(), std::string(to_string(r.terminal)).c_str());
      csv << buf;
      if (render) {
        SvgOptions opt;
        opt.title = r.task_id + (r.success ? " solved" : " unsolved") + ", " + std::to_string(r.blocks()) + " blocks";
        write_file(fs::path(c.out) / (r.task_id + ".svg"), render_assembly_svg(tasks[i], {r.actions}, {}, opt));
        outputs.push_back(r.task_id + ".svg");
      }
    }
    const double n = static_cast<double>(records.size());
    out << "solved " << solved << "/" << records.size() << " mean_return " << fixed(ret / n) << " mean_blocks "
        << fixed(blocks / n, 2) << "\n";
    if (!c.out.empty()) {
      write_file(fs::path(c.out) / "eval.csv", csv.str());
      outputs.push_back("eval.csv");
      json config = json::parse(config_to_json(ck.config));
      config["checkpoint"] = checkpoint;
      write_manifest(c.out, "eval", args, config, c.seed, tasks, c.tasks, seconds_since(t0), outputs);
    }
    return kExitOk;
  });
}

int cmd_noise_sweep(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Closed-loop construction under placement noise", "blockforge noise-sweep");
  Common c;
  add_common(app, c);
  std::string checkpoint;
  std::vector<double> sigmas = {0.01, 0.02, 0.05};
  int trials = 5;
  double sigma_theta_deg = 0.5;
  double max_offset = 0.09;
  app.add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  app.add_option("--noise-sigma", sigmas, "placement noise levels (fraction of block size)")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--trials", trials, "noise seeds per task and level")->capture_default_str();
  app.add_option("--sigma-theta-deg", sigma_theta_deg, "rotation noise in degrees (off when sigma is 0)")
      ->capture_default_str();
  app.add_option("--max-offset", max_offset, "truncation of the translation noise")->capture_default_str();
  if (auto code = parse(app, args, out, err)) return *code;

  return guarded(err, "noise-sweep", [&]() -> int {
    const auto t0 = std::chrono::steady_clock::now();
    check_shifts(c);
    if (trials < 1) throw UsageError("--trials must be positive");
    std::vector<NoiseModel> levels;
    for (double s : sigmas) {
      NoiseModel nm;
      nm.sigma_xy = s;
      nm.sigma_theta = s > 0.0 ? sigma_theta_deg * std::numbers::pi / 180.0 : 0.0;
      nm.max_offset = max_offset;
      nm.seed = c.seed;
      try {
        nm.validate();
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      levels.push_back(nm);
    }
    const std::vector<Task> tasks = load_tasks(c);
    const Checkpoint ck = load_for(checkpoint, c);
    prepare_out(c.out);

    std::vector<PreparedTask> prepared;
    for (const Task& t : tasks) prepared.push_back(prepare_task(t, ck.config.features));
    ClosedLoopConfig cl;
    cl.actions = ck.config.actions;

    const std::size_t nt = tasks.size();
    const std::size_t per_level = nt * static_cast<std::size_t>(trials);
    std::vector<EpisodeResult> results(levels.size() * per_level);
    parallel_for(results.size(), [&](std::size_t job) {
      const std::size_t li = job / per_level;
      const std::size_t ti = (job % per_level) / static_cast<std::size_t>(trials);
      const std::size_t trial = job % static_cast<std::size_t>(trials);
      Rng rng(derive_seed(levels[li].seed, "closed-loop", trial, ti));
      results[job] = closed_loop_episode(ck.params, prepared[ti], levels[li], cl, rng);
    });

    std::ostringstream sweep;
    std::ostringstream summary;
    std::ostringstream steps;
    sweep << "task,sigma_xy,successes,trials,success_rate,avg_offset,max_offset,diverged\n";
    summary << "sigma_xy,successes,trials,success_rate,avg_offset,max_offset\n";
    char buf[256];
    for (std::size_t li = 0; li < levels.size(); ++li) {
      const double s = levels[li].sigma_xy;
      int level_success = 0;
      double level_sum = 0.0;
      double level_max = 0.0;
      std::size_t level_steps = 0;
      out << "sigma_xy " << s << "\n";
      for (std::size_t ti = 0; ti < nt; ++ti) {
        int success = 0;
        int diverged = 0;
        double sum = 0.0;
        double mx = 0.0;
        std::size_t count = 0;
        for (int trial = 0; trial < trials; ++trial) {
          const EpisodeResult& r = results[li * per_level + ti * static_cast<std::size_t>(trials) + trial];
          success += r.success ? 1 : 0;
          diverged += r.diverged ? 1 : 0;
          for (double o : r.offsets) {
            sum += o;
            mx = std::max(mx, o);
          }
          count += r.offsets.size();
          std::istringstream lines(step_log_jsonl(r));
          for (std::string line; std::getline(lines, line);) {
            json rec = json::parse(line);
            rec["sigma_xy"] = s;
            rec["trial"] = trial;
            steps << rec.dump() << "\n";
          }
        }
        const double avg = count ? sum / static_cast<double>(count) : 0.0;
        std::snprintf(buf, sizeof buf, "%s,%.6g,%d,%d,%.6g,%.12g,%.12g,%d\n", tasks[ti].id.c_str(), s, success, trials,
                      static_cast<double>(success) / trials, avg, mx, diverged);
        sweep << buf;
        out << "  " << tasks[ti].id << " " << success << "/" << trials << " avg " << fixed(avg) << " max "
            << fixed(mx) << (diverged ? " diverged" : "") << "\n";
        level_success += success;
        level_sum += sum;
        level_max = std::max(level_max, mx);
        level_steps += count;
      }
      const int total = static_cast<int>(per_level);
      const double level_avg = level_steps ? level_sum / static_cast<double>(level_steps) : 0.0;
      std::snprintf(buf, sizeof buf, "%.6g,%d,%d,%.6g,%.12g,%.12g\n", s, level_success, total,
                    static_cast<double>(level_success) / total, level_avg, level_max);
      summary << buf;
      out << "  total " << level_success << "/" << total << " avg " << fixed(level_avg) << " max " << fixed(level_max)
          << "\n";
    }
    if (!c.out.empty()) {
      const fs::path dir(c.out);
      write_file(dir / "sweep.csv", sweep.str());
      write_file(dir / "summary.csv", summary.str());
      write_file(dir / "steps.jsonl", steps.str());
      json config = json::parse(config_to_json(ck.config));
      config["checkpoint"] = checkpoint;
      config["noise_sigma"] = sigmas;
      config["trials"] = trials;
      config["sigma_theta_deg"] = sigma_theta_deg;
      config["max_offset"] = max_offset;
      write_manifest(dir, "noise-sweep", args, config, c.seed, tasks, c.tasks, seconds_since(t0),
                     {"sweep.csv", "summary.csv", "steps.jsonl"});
    }
    return kExitOk;
  });
}

int cmd_render_psi(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Render state, action, obstacles, reward and predicted successor features", "blockforge render-psi");
  Common c;
  add_common(app, c);
  std::string checkpoint;
  std::string task_id;
  int steps = 10;
  app.add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  app.add_option("--task", task_id, "task id")->required();
  app.add_option("--steps", steps, "greedy steps to render")->capture_default_str();
  if (auto code = parse(app, args, out, err)) return *code;

  return guarded(err, "render-psi", [&]() -> int {
    const auto t0 = std::chrono::steady_clock::now();
    if (c.out.empty()) throw UsageError("--out is required");
    if (steps < 1) throw UsageError("--steps must be positive");
    c.task_ids = task_id;
    const std::vector<Task> tasks = load_tasks(c);
    const Checkpoint ck = load_for(checkpoint, c);
    prepare_out(c.out);
    const Task& task = tasks.front();
    const PreparedTask prepared = prepare_task(task, ck.config.features);
    const int d = ck.params.arch.d;

    std::vector<PsiPanelRow> rows;
    std::vector<std::string> outputs;
    Assembly state;
    std::vector<Placement> actions = enumerate_actions(state, task, ck.config.actions);
    for (int k = 0; k < steps && !actions.empty(); ++k) {
      const std::size_t j = argmax_q(action_values(ck.params, state, prepared, actions));
      PsiPanelRow row;
      row.step = k;
      row.state = state_features(state, d);
      row.action = rasterize_action(actions[j], d);
      row.obstacles = prepared.xi.obstacles;
      row.reward = prepared.rho.field;
      row.psi = forward_psi(ck.params, row.state, row.action, prepared.xi);
      const std::string pgm = "psi_" + task.id + "_step" + std::to_string(k) + ".pgm";
      write_pgm(row.psi, fs::path(c.out) / pgm, row.psi.min(), row.psi.max());
      outputs.push_back(pgm);
      rows.push_back(std::move(row));
      const StepOutcome next = step(state, task, actions[j], ck.config.actions);
      state = next.next_state;
      if (next.terminal != Terminal::none) break;
      actions = next.next_actions;
    }
    const std::string svg = "psi_" + task.id + ".svg";
    write_file(fs::path(c.out) / svg, render_psi_panels_svg(rows, task.id));
    outputs.insert(outputs.begin(), svg);
    json config = json::parse(config_to_json(ck.config));
    config["checkpoint"] = checkpoint;
    config["task"] = task_id;
    config["steps"] = steps;
    write_manifest(c.out, "render-psi", args, config, c.seed, tasks, c.tasks, seconds_since(t0), outputs);
    out << "wrote " << (fs::path(c.out) / svg).string() << " (" << rows.size() << " steps)\n";
    return kExitOk;
  });
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  static const char* usage =
      "usage: blockforge <command> [flags]\n"
      "commands:\n"
      "  train        train a policy (writes checkpoint, metrics.csv, manifest.json)\n"
      "  eval         greedy evaluation of a checkpoint\n"
      "  noise-sweep  closed-loop construction under placement noise\n"
      "  render-psi   render successor-feature panels for one task\n"
      "run 'blockforge <command> --help' for the flags of a command\n";
  if (args.empty()) {
    err << usage;
    return kExitUsage;
  }
  const std::string& cmd = args.front();
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  if (cmd == "train") return cmd_train(rest, out, err);
  if (cmd == "eval") return cmd_eval(rest, out, err);
  if (cmd == "noise-sweep") return cmd_noise_sweep(rest, out, err);
  if (cmd == "render-psi") return cmd_render_psi(rest, out, err);
  if (cmd == "--help" || cmd == "-h" || cmd == "help") {
    out << usage;
    return kExitOk;
  }
  err << "unknown command '" << cmd << "'\n" << usage;
  return kExitUsage;
}

}  // namespace blockforge::cli
