#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace spex {

struct GpdParams {
  double sigma = 1.0;
  double xi = 0.0;
};

// H(y; sigma, xi) = 1 - (1 + xi y / sigma)_+^(-1/xi), exponential limit at xi=0
double gpd_cdf(double y, const GpdParams& p);
double gpd_logpdf(double y, const GpdParams& p);  // -inf outside support
double gpd_quantile(double q, const GpdParams& p);
// inverse by survival probability; exact deep in the tail where 1 - q rounds
double gpd_quantile_from_survival(double sv, const GpdParams& p);
double gpd_upper_endpoint(const GpdParams& p);    // +inf when xi >= 0

struct GpdFitOptions {
  double xi_lo = -0.9;
  double xi_hi = 0.9;
  double xi_tol = 1e-6;
  double pll_tol = 1e-9;
  int max_sweeps = 200;
  std::size_t min_excesses = 30;
};

// Climate-grid fit: per-site scale, shared shape, alternating sequence of
// 1-D optimizations (golden section + parabolic refinement).
struct ClimTailFit {
  std::vector<double> sigma;   // per site
  double xi = 0.0;
  double pll = 0.0;
  int sweeps = 0;
  bool converged = false;
  std::vector<double> xi_trace;
};

ClimTailFit fit_clim_gpd(const std::vector<std::vector<double>>& excesses,
                         GpdFitOptions opts = {});

// shared-shape pseudo-log-likelihood, used by the fitter and its tests
double clim_pll(const std::vector<std::vector<double>>& excesses,
                const std::vector<double>& sigma, double xi);

// Observational fit: log sigma_o linear in covariates, models M0-M2.
enum class ObsModel { M0, M1, M2 };
// Link applied to the climate scale covariate. Table resolves to the
// published per-model forms: log for M0/M1, identity for M2.
enum class ClimLink { table, log_link, identity };

std::string to_string(ObsModel m);
ObsModel obs_model_from_string(const std::string& s);
std::string to_string(ClimLink l);
ClimLink clim_link_from_string(const std::string& s);
bool resolve_log_clim(ObsModel m, ClimLink l);

// design row for log sigma_o given site/time covariate values
std::vector<double> obs_design_row(ObsModel m, bool log_clim, double sigma_c,
                                   double coast_dist, double m_i);
std::vector<std::string> obs_design_names(ObsModel m, bool log_clim);

struct ObsTailFit {
  ObsModel model = ObsModel::M0;
  bool log_clim = true;
  std::vector<double> theta;
  double xi = 0.0;
  double pll = 0.0;
  std::vector<std::string> covariate_spec;

  double log_sigma(const std::vector<double>& design_row) const;
};

struct ObsFitOptions {
  double xi_lo = -0.9;
  double xi_hi = 0.9;
  double max_condition = 1e8;
  std::size_t min_excesses = 30;
};

// Maximizes the pseudo-log-likelihood over (theta, xi). Pass xi_fixed to
// re-estimate theta at a frozen shape (bootstrap bias correction), and
// theta_init to warm-start from a nested model.
ObsTailFit fit_obs_gpd(const Eigen::MatrixXd& X, const std::vector<double>& y,
                       ObsModel model, bool log_clim, ObsFitOptions opts = {},
                       const std::vector<double>* theta_init = nullptr,
                       const double* xi_fixed = nullptr);

double obs_pll(const Eigen::MatrixXd& X, const std::vector<double>& y,
               const std::vector<double>& theta, double xi);

}  // namespace spex
