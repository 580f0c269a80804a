#pragma once

namespace spex {

// Bounded Matern variogram: alpha is the sill, phi the range (km), nu the
// smoothness. gamma(0) = 0 and gamma(h) -> alpha as h -> infinity.
struct VariogramParams {
  double alpha = 1.0;
  double phi = 100.0;
  double nu = 1.0;
};

double matern_variogram(double h, const VariogramParams& v);

// Pairwise extremal dependence implied by the log-Gaussian construction:
// chi(h) = 2 - 2 Phi(sqrt(gamma(h)/2)). Strictly positive for bounded
// variograms (asymptotic dependence at all distances).
double chi_isotropic(double h, const VariogramParams& v);
double chi_from_gamma(double gamma);

}  // namespace spex
