#include "spex/variogram.hpp"

#include <cmath>
#include <stdexcept>

#include "spex/stats.hpp"

namespace spex {

double matern_variogram(double h, const VariogramParams& v) {
  if (h < 0.0) throw std::domain_error("matern_variogram: negative distance");
  if (!(v.alpha > 0.0 && v.phi > 0.0 && v.nu > 0.0))
    throw std::domain_error("matern_variogram: parameters must be positive");
  if (h == 0.0) return 0.0;
  const double x = 2.0 * std::sqrt(v.nu) * h / v.phi;
  // K_nu underflows for large arguments; the correlation term is then 0
  if (x > 600.0) return v.alpha;
  const double corr = std::pow(x, v.nu) * std::pow(2.0, 1.0 - v.nu) /
                      std::tgamma(v.nu) * std::cyl_bessel_k(v.nu, x);
  return v.alpha * (1.0 - std::min(corr, 1.0));
}

double chi_from_gamma(double gamma) {
  return 2.0 - 2.0 * norm_cdf(std::sqrt(std::max(gamma, 0.0) / 2.0));
}

double chi_isotropic(double h, const VariogramParams& v) {
  return chi_from_gamma(matern_variogram(h, v));
}

}  // namespace spex
