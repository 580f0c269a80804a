#pragma once

#include <optional>
#include <vector>

#include "spex/marginal.hpp"
#include "spex/simulate.hpp"

namespace spex {

// A_{t,S}(T): critical temperature somewhere on the site set under year-t
// marginal conditions.
struct EventSpec {
  double t_critical = 30.0;  // degC
  int year = 2020;
};

// level exceeded by daily values with probability 1/(92 * period_years)
double marginal_return_level(const MarginalSlice& slice, Eigen::Index s,
                             double period_years);

// per-site Pareto-scale critical level T^P(t,s) = 1/(1 - F_{t,s}(T));
// +inf where T lies beyond the upper endpoint (site can never exceed)
std::vector<double> threshold_on_pareto(const MarginalSlice& slice, double t_critical);

// ensures the marginal-extremes restriction T >= max_s u(s)
void validate_event(const MarginalSlice& slice, double t_critical);

struct EventEstimate {
  double prob = 0.0;
  double se = 0.0;
  double return_period_years = 0.0;  // 1 / (92 prob)
  double coverage = 0.0;             // E_o(C; t, T)
  double coverage_se = 0.0;
  double coverage_given_event = 0.0; // E_o{C | A}
  double b_scaling = 0.0;
  bool unscaled_fallback = false;    // b <= v_r, fell back to b = v_r
  std::size_t hits = 0;              // fields satisfying A among the m L
};

struct EventOptions {
  int n_batches = 50;                // profile batches for the MC SE
  std::optional<double> b_override;  // evaluate at a forced scaling
};

// Importance-sampling estimator over the m x L (profile, auxiliary risk)
// grid: P = (1/(b m L)) sum_i sum_j 1{exists s: r_j b w_i(s) > T^P(s)}.
// The factor 1/b carries both Pr{r > v_r} = 1/v_r and the extra scaling,
// since b = v_r b_A. Coverage shares the same pass; the identity
// E_o(C) = E_o{C|A} Pr{A} holds exactly in the estimator.
EventEstimate estimate_event(const SimBatch& batch,
                             const std::vector<double>& t_pareto, double v_r,
                             EventOptions opts = {});

// spec-named wrappers
inline EventEstimate prob_event(const SimBatch& batch,
                                const std::vector<double>& t_pareto, double v_r,
                                EventOptions opts = {}) {
  return estimate_event(batch, t_pareto, v_r, opts);
}
inline EventEstimate expected_coverage(const SimBatch& batch,
                                       const std::vector<double>& t_pareto,
                                       double v_r, EventOptions opts = {}) {
  return estimate_event(batch, t_pareto, v_r, opts);
}

struct ChiDataScale {
  double h = 0.0;
  double conditional = 0.0;    // chi_o(h; A_{t,S}(T))
  double unconditional = 0.0;  // chi_o(h; T, t)
  std::size_t n_pairs = 0;
  bool empty_conditioning = false;
};

// Data-scale dependence measures on pairs at distance h +- bin_width/2.
// Works on the Pareto scale: data-scale exceedance of T is equivalent to
// Pareto-scale exceedance of T^P through the monotone marginal transform.
std::vector<ChiDataScale> chi_data_scale(const SimBatch& batch,
                                         const std::vector<double>& t_pareto,
                                         double v_r,
                                         const std::vector<double>& h_grid,
                                         double bin_width_km = 20.0);

}  // namespace spex
