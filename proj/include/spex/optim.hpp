#pragma once

#include <functional>
#include <vector>

namespace spex {

struct OptimResult {
  std::vector<double> x;
  double value = 0.0;       // minimized objective
  int evaluations = 0;
  bool converged = false;
};

struct NelderMeadOptions {
  double x_tol = 1e-9;
  double f_tol = 1e-12;
  int max_evals = 20000;
  double initial_step = 0.2;
  int restarts = 2;  // re-run from the incumbent until no improvement
};

// Derivative-free simplex minimization. The objective may return +inf
// to reject infeasible points (the simplex then contracts away).
OptimResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                        std::vector<double> x0, NelderMeadOptions opts = {});

// Multi-start wrapper: runs nelder_mead from each start, keeps the best.
OptimResult nelder_mead_multistart(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<std::vector<double>>& starts, NelderMeadOptions opts = {});

// 1-D maximization on [lo, hi] by golden-section with parabolic refinement.
struct Brent1dResult {
  double x = 0.0;
  double value = 0.0;  // maximized objective
  int evaluations = 0;
};
Brent1dResult brent_maximize(const std::function<double(double)>& f, double lo,
                             double hi, double x_tol = 1e-10, int max_iter = 200);

// Root of monotone-bracketed f on [lo, hi] (f(lo), f(hi) opposite signs).
double bisect(const std::function<double(double)>& f, double lo, double hi,
              double x_tol = 1e-12, int max_iter = 200);

}  // namespace spex
