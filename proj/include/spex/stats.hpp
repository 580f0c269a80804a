#pragma once

#include <span>
#include <vector>

namespace spex {

double norm_cdf(double x);
// inverse standard normal CDF, |error| < 1e-13 after one Halley step
double norm_quantile(double p);

// type-7 (linear interpolation) sample quantile; data need not be sorted
double quantile_type7(std::vector<double> data, double tau);
// same, data already sorted ascending
double quantile_type7_sorted(std::span<const double> sorted, double tau);

double mean(std::span<const double> x);
double sample_sd(std::span<const double> x);

// numerically careful sum with a deterministic reduction order
double pairwise_sum(std::span<const double> x);

// two-sided Kolmogorov-Smirnov test against U(0,1)
struct KsResult {
  double statistic;
  double p_value;
};
KsResult ks_uniform(std::vector<double> u);

}  // namespace spex
