#include "blockforge/lp.hpp"

#include <cmath>
#include <limits>

namespace blockforge {

namespace {

// Tableau: rows 0..m-1 constraints, row m objective (reduced costs), last
// column the right-hand side.
class Tableau {
 public:
  Tableau(int m, int n) : m_(m), n_(n), t_(static_cast<std::size_t>(m + 1) * (n + 1), 0.0), basis_(m, -1) {}

  double& at(int r, int c) { return t_[static_cast<std::size_t>(r) * (n_ + 1) + c]; }
  double& rhs(int r) { return at(r, n_); }
  int rows() const { return m_; }
  int cols() const { return n_; }
  std::vector<int>& basis() { return basis_; }

  void pivot(int pr, int pc) {
    const double inv = 1.0 / at(pr, pc);
    for (int c = 0; c <= n_; ++c) at(pr, c) *= inv;
    at(pr, pc) = 1.0;
    for (int r = 0; r <= m_; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (int c = 0; c <= n_; ++c) at(r, c) -= f * at(pr, c);
      at(r, pc) = 0.0;
    }
    basis_[pr] = pc;
  }

  // Loads reduced costs for `cost` given the current basis.
  void price(const std::vector<double>& cost) {
    for (int c = 0; c <= n_; ++c) at(m_, c) = c < n_ ? cost[c] : 0.0;
    for (int r = 0; r < m_; ++r) {
      const double cb = cost[basis_[r]];
      if (cb == 0.0) continue;
      for (int c = 0; c <= n_; ++c) at(m_, c) -= cb * at(r, c);
    }
  }

  // Runs simplex iterations on columns [0, usable). Returns status.
  LpStatus iterate(int usable, const SimplexOptions& opt, int max_iter, int& iterations) {
    while (true) {
      int enter = -1;
      for (int c = 0; c < usable; ++c) {
        if (at(m_, c) < -opt.cost_tol) {
          enter = c;
          break;
        }
      }
      if (enter < 0) return LpStatus::optimal;
      if (iterations >= max_iter) return LpStatus::iteration_limit;

      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int r = 0; r < m_; ++r) {
        const double a = at(r, enter);
        if (a <= opt.pivot_tol) continue;
        const double ratio = rhs(r) / a;
        if (ratio < best - 1e-15 || (std::abs(ratio - best) <= 1e-15 && basis_[r] < basis_[leave])) {
          best = ratio;
          leave = r;
        }
      }
      if (leave < 0) return LpStatus::unbounded;
      pivot(leave, enter);
      ++iterations;
    }
  }

 private:
  int m_;
  int n_;
  std::vector<double> t_;
  std::vector<int> basis_;
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const std::optional<std::vector<int>>& initial_basis,
                    const SimplexOptions& options) {
  const int m = lp.rows;
  const int n = lp.cols;
  LpSolution sol;
  sol.x.assign(n, 0.0);
  if (m == 0) {
    // Unconstrained apart from x >= 0.
    for (int c = 0; c < n; ++c) {
      if (lp.c[c] < 0.0) {
        sol.status = LpStatus::unbounded;
        return sol;
      }
    }
    return sol;
  }

  const int max_iter = options.max_iterations > 0 ? options.max_iterations : 50 * (m + n);
  const bool phase1 = !initial_basis.has_value();
  const int total = phase1 ? n + m : n;

  Tableau t(m, total);
  for (int r = 0; r < m; ++r) {
    const double sign = lp.b[r] < 0.0 ? -1.0 : 1.0;
    for (int c = 0; c < n; ++c) t.at(r, c) = sign * lp.at(r, c);
    t.rhs(r) = sign * lp.b[r];
    if (phase1) {
      t.at(r, n + r) = 1.0;
      t.basis()[r] = n + r;
    }
  }

  if (phase1) {
    std::vector<double> aux(total, 0.0);
    for (int r = 0; r < m; ++r) aux[n + r] = 1.0;
    t.price(aux);
    const LpStatus s = t.iterate(total, options, max_iter, sol.iterations);
    if (s == LpStatus::iteration_limit) {
      sol.status = s;
      return sol;
    }
    if (-t.at(m, total) > 1e-9) {
      sol.status = LpStatus::infeasible;
      return sol;
    }
    // Drive any artificial still basic (at zero) out of the basis.
    for (int r = 0; r < m; ++r) {
      if (t.basis()[r] < n) continue;
      for (int c = 0; c < n; ++c) {
        if (std::abs(t.at(r, c)) > options.pivot_tol) {
          t.pivot(r, c);
          break;
        }
      }
    }
  } else {
    // Caller-supplied identity basis; rows whose b was sign-flipped must not
    // be used with it, so the caller is expected to pass b >= 0.
    t.basis() = *initial_basis;
  }

  std::vector<double> cost(total, 0.0);
  for (int c = 0; c < n; ++c) cost[c] = lp.c[c];
  t.price(cost);
  const LpStatus s = t.iterate(n, options, max_iter, sol.iterations);
  sol.status = s;
  if (s != LpStatus::optimal) return sol;

  for (int r = 0; r < m; ++r) {
    const int c = t.basis()[r];
    if (c < n) sol.x[c] = t.rhs(r);
  }
  double obj = 0.0;
  for (int c = 0; c < n; ++c) obj += lp.c[c] * sol.x[c];
  sol.objective = obj;
  return sol;
}

}  // namespace blockforge
