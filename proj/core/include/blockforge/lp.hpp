#pragma once

#include <optional>
#include <vector>

namespace blockforge {

// minimize c^T x  subject to  A x = b,  x >= 0.
// A is dense row-major, rows x cols.
struct LinearProgram {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;

  double& at(int r, int col) { return a[static_cast<std::size_t>(r) * cols + col]; }
  double at(int r, int col) const { return a[static_cast<std::size_t>(r) * cols + col]; }
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

struct LpSolution {
  LpStatus status = LpStatus::optimal;
  double objective = 0.0;
  std::vector<double> x;
  int iterations = 0;
};

struct SimplexOptions {
  double pivot_tol = 1e-11;
  double cost_tol = 1e-11;
  int max_iterations = 0;  // 0: 50 * (rows + cols)
};

// Dense tableau simplex with Bland's rule (deterministic, cycle-free).
// `initial_basis`, when given, must name one column per row forming a
// feasible identity basis; otherwise a phase-1 with artificials is run.
LpSolution solve_lp(const LinearProgram& lp, const std::optional<std::vector<int>>& initial_basis = {},
                    const SimplexOptions& options = {});

}  // namespace blockforge
