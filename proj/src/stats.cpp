#include "spex/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spex {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

// Acklam's rational approximation, then one Halley refinement
double norm_quantile_raw(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > 1 - plow) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

}  // namespace

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("norm_quantile: p outside (0,1)");
  double x = norm_quantile_raw(p);
  // Halley step on norm_cdf(x) - p
  const double e = norm_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

double quantile_type7_sorted(std::span<const double> s, double tau) {
  if (s.empty()) throw std::invalid_argument("quantile: empty sample");
  if (s.size() == 1) return s[0];
  const double h = (static_cast<double>(s.size()) - 1.0) * tau;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  const double w = h - static_cast<double>(lo);
  return s[lo] + w * (s[hi] - s[lo]);
}

double quantile_type7(std::vector<double> data, double tau) {
  std::sort(data.begin(), data.end());
  return quantile_type7_sorted(data, tau);
}

double mean(std::span<const double> x) {
  return pairwise_sum(x) / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / (static_cast<double>(x.size()) - 1.0));
}

double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const auto half = x.size() / 2;
  return pairwise_sum(x.subspan(0, half)) + pairwise_sum(x.subspan(half));
}

KsResult ks_uniform(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const auto n = u.size();
  if (n == 0) throw std::invalid_argument("ks_uniform: empty sample");
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = u[i];
    const double lo = static_cast<double>(i) / static_cast<double>(n);
    const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
    d = std::max({d, f - lo, hi - f});
  }
  // asymptotic Kolmogorov distribution with Stephens' small-sample adjustment
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return {d, std::clamp(p, 0.0, 1.0)};
}

}  // namespace spex
