#pragma once

#include "spex/marginal.hpp"
#include "spex/panel.hpp"

namespace spex {

// Probability integral transforms through the composite marginal model.
// Missingness passes through bit-identically; missing values stay NaN.

// F_{t,s}(x) per entry; output scale = uniform
Panel to_uniform(const Panel& data, const MarginalModel& model);

// X^P = 1/(1 - F_{t,s}(x)); errors listing entries where F >= 1
Panel to_pareto(const Panel& data, const MarginalModel& model);

// pointwise unit-uniform -> unit-Pareto and back
Panel uniform_to_pareto(const Panel& uniform);
Panel pareto_to_uniform(const Panel& pareto);

// x = F^{-1}_{t,s}(exp(-1/y)) for Frechet-scale y > 0; analytic GPD
// quantile above u(s), spline inversion below
double from_frechet(double y, const SiteMarginal& site);

// inverse PIT of a whole uniform panel (block bootstrap back-transform)
Panel from_uniform(const Panel& uniform, const MarginalModel& model);

}  // namespace spex
