#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spex/body.hpp"
#include "spex/covariates.hpp"
#include "spex/gpd.hpp"
#include "spex/interp.hpp"
#include "spex/panel.hpp"

namespace spex {

// Fixed-in-time threshold u(s) = beta0 + beta1 u_c(s), a tau=0.9 ALD fit
// of station values on the mapped climate 0.9-quantile.
struct ThresholdField {
  double beta0 = 0.0;
  double beta1 = 1.0;
  double u(double u_c) const { return beta0 + beta1 * u_c; }
};

ThresholdField fit_threshold(const Panel& station, const std::vector<double>& u_c);

// Spatial covariates of the marginal model resolved at a set of evaluation
// sites (stations use the nearest grid site's climate values).
struct SpatialCovariates {
  Eigen::MatrixXd q_c;           // site x body-tau
  std::vector<double> u_c;       // climate 0.9 quantile
  std::vector<double> sigma_c;   // climate GPD scale (empty before fit-tail)
  std::vector<double> coast;     // km
};

SpatialCovariates map_spatial_covariates(const std::vector<SiteMeta>& eval_sites,
                                         const Panel& grid,
                                         const std::vector<double>& tau_grid,
                                         const ClimTailFit* clim = nullptr);

// One site's composite distribution at a fixed time (Eq-5 shape: spline
// body below u, GPD tail above, glued by lambda = 1 - F_body(u)).
struct SiteMarginal {
  MonotoneCubic qspline;  // tau -> quantile
  double u = 0.0;
  double lambda = 0.1;
  GpdParams tail;

  double cdf(double x) const;       // in [1e-12, 1]; 1 only beyond the endpoint
  double survival(double x) const;  // 1 - cdf, precise deep in the tail
  double quantile(double p) const;
  // inverse by survival probability; keeps precision when s is tiny
  double quantile_from_survival(double s) const;
  double upper_endpoint() const;
};

struct MarginalSlice {
  DayIndex t;
  std::vector<SiteMarginal> site;
  int lambda_clamped = 0;  // count of sites where lambda left [1e-6, 0.5]
};

// Everything needed to evaluate F_{t,s}: body + threshold + obs tail fit +
// resolved covariates at the evaluation sites.
struct MarginalModel {
  BodyModel body;
  ThresholdField threshold;
  ClimTailFit clim;
  ObsTailFit obs;
  std::vector<SiteMeta> sites;
  SpatialCovariates sc;
  CovariateSeries cov;

  MarginalSlice at(DayIndex t) const;
  MarginalSlice at_year(int year) const;  // representative summer conditions
  MarginalSlice at_covariates(DayIndex t, const CovariateRow& row) const;

  double lambda(DayIndex t, Eigen::Index s) const;
  double cdf(DayIndex t, Eigen::Index s, double x) const;
  double quantile(DayIndex t, Eigen::Index s, double p) const;
};

// exceedance rate lambda(t,s) = 1 - F_body(u(s)); clamped to [1e-6, 0.5]
double exceedance_rate(const MonotoneCubic& qspline, double u, bool* clamped = nullptr);

// tail.json round trip: threshold coefficients, per-site u and sigma_c,
// theta, xi, model id
struct TailArtifact {
  ThresholdField threshold;
  ClimTailFit clim;
  ObsTailFit obs;
  std::vector<std::string> grid_site_ids;
  std::vector<double> station_u;          // diagnostics
  std::vector<std::string> station_ids;
};

void save_tail(const TailArtifact& t, const std::string& path);
TailArtifact load_tail(const std::string& path);

}  // namespace spex
