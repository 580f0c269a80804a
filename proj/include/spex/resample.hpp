#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "spex/gpd.hpp"
#include "spex/panel.hpp"

namespace spex {

struct BootstrapPlan {
  int block_length = 5;  // days; must not exceed a summer
  int n_replicates = 500;
  std::uint64_t seed = 1;
};

// Vector temporal block bootstrap of a uniform-scale panel: whole
// cross-sections resampled in within-summer blocks, the source missingness
// mask re-imposed bit-identically. Cells observed in the target but missing
// in the sampled row are filled with fresh U(0,1) draws (the uniform
// marginal is exact; only cross-site dependence at those cells is lost).
Panel block_bootstrap_replicate(const Panel& uniform, const BootstrapPlan& plan,
                                int replicate);

// Two-step bias correction: shift every replicate shape by
// (full xi - mean replicate xi), then re-estimate the scale coefficients at
// the shifted shape. The refit callback owns the replicate data sets.
struct BiasCorrectResult {
  std::vector<ObsTailFit> corrected;
  double shift = 0.0;
  std::size_t n_dropped = 0;  // replicates whose re-fit diverged
};

BiasCorrectResult bias_correct(
    const std::vector<ObsTailFit>& boot_fits, const ObsTailFit& full_fit,
    const std::function<ObsTailFit(std::size_t replicate, double xi_fixed)>& refit);

// Cross-validation folds over observed (t, s) entries.
enum class FoldKind { k90, st };

struct FoldSpec {
  FoldKind kind = FoldKind::k90;
  int n_folds = 90;
  Eigen::MatrixXi assignment;  // time x site; -1 where unobserved
  std::size_t n_empty_merged = 0;
  std::vector<int> site_cluster;  // ST only
};

struct FoldOptions {
  std::uint64_t seed = 1;
  int n_folds = 90;      // k90
  int n_clusters = 30;   // ST spatial clusters
  int n_temporal = 3;    // ST temporal groups (every n-th week)
};

FoldSpec make_folds(const Panel& panel, FoldKind kind, FoldOptions opts = {});

// ---- scoring -------------------------------------------------------------

// predicted quantile / cdf of the fitted marginal pipeline at (t, s)
using QuantileFn =
    std::function<double(const DayIndex&, Eigen::Index, double tau)>;
using CdfFn = std::function<double(const DayIndex&, Eigen::Index, double x)>;

struct ScoreResult {
  double rmse = 0.0;
  double crps = 0.0;
  std::size_t n_quantiles = 0;  // (t,s,tau) comparisons behind the RMSE
  std::size_t n_scored = 0;     // observations behind the CRPS
};

struct ScoreOptions {
  std::size_t min_site_year_obs = 10;
  // CRPS integration grid: tau 0.001..0.999 step 0.002 plus tail points
  double tau_step = 0.002;
  int n_tail_points = 20;
};

// RMSE over (site, year, tau) of type-7 empirical site-year quantiles vs
// predicted quantiles at the held-out entries, and CRPS averaged over the
// held-out observations. Empirical quantiles use the ordered data of the
// whole site-year in `panel`; `held` flags which entries are scored.
// Site-years with fewer than min_site_year_obs observations are skipped.
ScoreResult score(const Panel& panel, const Mask& held, const QuantileFn& quantile,
                  const CdfFn& cdf, const std::vector<double>& taus,
                  ScoreOptions opts = {});

// numeric CRPS of one predictive distribution against one observation
double crps_quadrature(const std::function<double(double)>& quantile,
                       const std::function<double(double)>& cdf, double y,
                       double tau_step = 0.002, int n_tail_points = 20);

}  // namespace spex
