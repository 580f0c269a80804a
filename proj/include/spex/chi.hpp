#pragma once

#include <cstdint>
#include <vector>

#include "spex/panel.hpp"

namespace spex {

struct PairChi {
  int site_i = 0;
  int site_j = 0;
  double h = 0.0;        // km
  double chi = 0.0;      // 2 joint / (cond_i + cond_j)
  long n_joint = 0;
  long n_cond = 0;       // cond_i + cond_j
  long n_coobserved = 0;
  double boot_var = 0.0;
};

struct ChiBin {
  double h_lo = 0.0, h_hi = 0.0, h_mid = 0.0;  // h_mid = weighted mean distance
  double chi = 0.0;                            // inverse-variance weighted mean
  double ci_lo = 0.0, ci_hi = 0.0;             // percentile bootstrap
  double boot_var = 0.0;                       // variance of the bin estimate
  std::size_t n_pairs = 0;
};

struct ChiCloud {
  double p = 0.9;
  std::vector<PairChi> pairs;      // retained pairs only
  std::vector<ChiBin> bins;        // equal pair counts
  std::size_t n_excluded = 0;      // pairs with zero conditioning exceedances
  // bins x replicates, populated when ChiOptions::keep_replicates is set
  std::vector<std::vector<double>> bin_replicates;
};

struct ChiOptions {
  int n_bins = 30;
  int n_boot = 500;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  // restrict to pairs with at least this many co-observed days
  long min_coobserved = 50;
  bool keep_replicates = false;
};

// Empirical pairwise extremal dependence of a Pareto-scale panel at level
// p: exceedances of v_p = 1/(1-p) counted over days where both sites are
// observed. Bootstrap resamples whole summers (years) with replacement.
ChiCloud chi_empirical(const Panel& pareto, double p, ChiOptions opts = {});

void save_chi(const ChiCloud& cloud, const std::string& pair_path,
              const std::string& bin_path);

}  // namespace spex
