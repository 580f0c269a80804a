#include "spex/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace spex {

namespace {

OptimResult nelder_mead_once(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x0,
                             const NelderMeadOptions& opts, int& evals) {
  const std::size_t n = x0.size();
  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;

  std::vector<std::vector<double>> simplex(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) {
    double step = opts.initial_step * std::max(1.0, std::abs(x0[i]));
    simplex[i + 1][i] += step;
  }
  std::vector<double> fv(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    fv[i] = f(simplex[i]);
    ++evals;
  }

  OptimResult res;
  while (evals < opts.max_evals) {
    std::vector<std::size_t> order(n + 1);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order[0], worst = order[n], second = order[n - 1];

    double spread = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      spread = std::max(spread, std::abs(simplex[worst][i] - simplex[best][i]));
    if (spread < opts.x_tol &&
        std::abs(fv[worst] - fv[best]) < opts.f_tol * (1.0 + std::abs(fv[best]))) {
      res.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t k = 0; k <= n; ++k) {
      if (k == worst) continue;
      for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[k][i] / static_cast<double>(n);
    }

    auto blend = [&](double t) {
      std::vector<double> p(n);
      for (std::size_t i = 0; i < n; ++i)
        p[i] = centroid[i] + t * (centroid[i] - simplex[worst][i]);
      return p;
    };

    auto xr = blend(alpha);
    double fr = f(xr);
    ++evals;
    if (fr < fv[order[0]]) {
      auto xe = blend(gamma);
      double fe = f(xe);
      ++evals;
      if (fe < fr) {
        simplex[worst] = std::move(xe);
        fv[worst] = fe;
      } else {
        simplex[worst] = std::move(xr);
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      simplex[worst] = std::move(xr);
      fv[worst] = fr;
    } else {
      bool outside = fr < fv[worst];
      auto xc = blend(outside ? rho : -rho);
      double fc = f(xc);
      ++evals;
      if (fc < (outside ? fr : fv[worst])) {
        simplex[worst] = std::move(xc);
        fv[worst] = fc;
      } else {
        for (std::size_t k = 0; k <= n; ++k) {
          if (k == best) continue;
          for (std::size_t i = 0; i < n; ++i)
            simplex[k][i] = simplex[best][i] + sigma * (simplex[k][i] - simplex[best][i]);
          fv[k] = f(simplex[k]);
          ++evals;
        }
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  res.x = simplex[best];
  res.value = fv[best];
  return res;
}

}  // namespace

OptimResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                        std::vector<double> x0, NelderMeadOptions opts) {
  if (x0.empty()) throw std::invalid_argument("nelder_mead: empty start");
  int evals = 0;
  OptimResult best = nelder_mead_once(f, x0, opts, evals);
  // restart from the incumbent with a smaller simplex; guards against
  // premature collapse on non-smooth objectives like the check loss
  for (int r = 0; r < opts.restarts && evals < opts.max_evals; ++r) {
    NelderMeadOptions o = opts;
    o.initial_step = opts.initial_step * std::pow(0.25, r + 1);
    OptimResult next = nelder_mead_once(f, best.x, o, evals);
    if (next.value < best.value - opts.f_tol) {
      best = std::move(next);
    } else {
      if (next.value < best.value) best = std::move(next);
      break;
    }
  }
  best.evaluations = evals;
  best.converged = true;
  return best;
}

OptimResult nelder_mead_multistart(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<std::vector<double>>& starts, NelderMeadOptions opts) {
  if (starts.empty()) throw std::invalid_argument("nelder_mead_multistart: no starts");
  OptimResult best;
  best.value = std::numeric_limits<double>::infinity();
  int total_evals = 0;
  for (const auto& s : starts) {
    OptimResult r = nelder_mead(f, s, opts);
    total_evals += r.evaluations;
    if (r.value < best.value) best = std::move(r);
  }
  best.evaluations = total_evals;
  return best;
}

Brent1dResult brent_maximize(const std::function<double(double)>& f, double lo,
                             double hi, double x_tol, int max_iter) {
  if (!(lo < hi)) throw std::invalid_argument("brent_maximize: empty interval");
  auto g = [&](double x) { return -f(x); };
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x = a + invphi * (b - a), w = x, v = x;
  double fx = g(x), fw = fx, fv = fx;
  int evals = 1;
  double d = 0.0, e = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const double m = 0.5 * (a + b);
    const double tol = x_tol * (1.0 + std::abs(x));
    if (std::abs(x - m) <= 2.0 * tol - 0.5 * (b - a)) break;
    double u;
    bool parabolic = false;
    if (std::abs(e) > tol) {
      // parabolic fit through (x, w, v)
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0) p = -p;
      q = std::abs(q);
      if (std::abs(p) < std::abs(0.5 * q * e) && p > q * (a - x) && p < q * (b - x)) {
        e = d;
        d = p / q;
        u = x + d;
        if (u - a < 2 * tol || b - u < 2 * tol) d = (x < m) ? tol : -tol;
        parabolic = true;
      }
    }
    if (!parabolic) {
      e = (x < m) ? b - x : a - x;
      d = (1.0 - invphi) * e;
    }
    u = (std::abs(d) >= tol) ? x + d : x + ((d > 0) ? tol : -tol);
    const double fu = g(u);
    ++evals;
    if (fu <= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return {x, -fx, evals};
}

double bisect(const std::function<double(double)>& f, double lo, double hi,
              double x_tol, int max_iter) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0) == (fhi > 0))
    throw std::invalid_argument("bisect: endpoints do not bracket a root");
  for (int i = 0; i < max_iter && hi - lo > x_tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace spex
