#include <benchmark/benchmark.h>

#include <numbers>
#include <random>

#include "blockforge/env.hpp"
#include "blockforge/learner.hpp"
#include "blockforge/stability.hpp"
#include "blockforge/task_io.hpp"

using namespace blockforge;

namespace {

std::vector<Polygon> random_polygons(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> x(-3.0, 3.0);
  std::uniform_real_distribution<double> th(-std::numbers::pi, std::numbers::pi);
  const Shape sq = make_shape(ShapeKind::square);
  const Shape trap = make_shape(ShapeKind::trapezoid);
  std::vector<Polygon> out;
  for (int k = 0; k < n; ++k) out.push_back(world_polygon(make_placement(k % 2 ? sq : trap, {x(rng), x(rng) + 4.0, th(rng)})));
  return out;
}

Assembly greedy_assembly(const Task& t, int blocks) {
  Assembly s;
  std::vector<Placement> actions = enumerate_actions(s, t);
  while (!actions.empty() && static_cast<int>(s.size()) < blocks) {
    const StepOutcome o = step(s, t, actions[actions.size() / 2]);
    s = o.next_state;
    actions = o.next_actions;
  }
  return s;
}

}  // namespace

static void BM_PolygonOverlap(benchmark::State& state) {
  const auto polys = random_polygons(256, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(polygons_overlap(polys[i % 256], polys[(i * 7 + 3) % 256]));
    ++i;
  }
}
BENCHMARK(BM_PolygonOverlap);

static void BM_StabilityTower(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<Polygon> blocks;
  for (int k = 0; k < n; ++k) blocks.push_back(axis_aligned_square({0.1 * (k % 3), 0.5 + k}, 0.5));
  const ConstructionSpace sp;
  StabilityOptions opt;
  for (auto _ : state) benchmark::DoNotOptimize(is_stable(blocks, sp, opt));
}
BENCHMARK(BM_StabilityTower)->Arg(2)->Arg(5)->Arg(10);

static void BM_EnumerateActions(benchmark::State& state) {
  const std::vector<Task> tasks = load_task_dir(BLOCKFORGE_TASKS_DIR);
  const Task& t = tasks[12];
  const Assembly s = greedy_assembly(t, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(enumerate_actions(s, t));
  state.counters["blocks"] = static_cast<double>(s.size());
}
BENCHMARK(BM_EnumerateActions)->Arg(0)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);

static void BM_ForwardPsi(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const auto params = init_params<float>(1, Architecture::for_resolution(d));
  const FeatureImage psi(d);
  FeatureImage phi(d);
  phi.at(d / 2, 2) = 1.0;
  const TaskImage xi{FeatureImage(d), FeatureImage(d)};
  for (auto _ : state) benchmark::DoNotOptimize(forward_psi(params, psi, phi, xi));
}
BENCHMARK(BM_ForwardPsi)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_ActionValues(benchmark::State& state) {
  const std::vector<Task> tasks = load_task_dir(BLOCKFORGE_TASKS_DIR);
  const PreparedTask pt = prepare_task(tasks[0], {});
  const auto params = init_params<float>(1, Architecture::for_resolution(64));
  const Assembly s = greedy_assembly(tasks[0], 2);
  const auto actions = enumerate_actions(s, tasks[0]);
  for (auto _ : state) benchmark::DoNotOptimize(action_values(params, s, pt, actions));
  state.counters["actions"] = static_cast<double>(actions.size());
}
BENCHMARK(BM_ActionValues)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
