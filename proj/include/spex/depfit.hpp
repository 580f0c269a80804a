#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spex/chi.hpp"
#include "spex/covariates.hpp"
#include "spex/panel.hpp"
#include "spex/variogram.hpp"

namespace spex {

// Mean of the Pareto-scale values over the observed sites of one day.
// Empty when fewer than min_observed sites report.
std::optional<double> risk_value(const Eigen::VectorXd& values,
                                 const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>& observed,
                                 int min_observed);

struct RiskSample {
  std::vector<double> risks;   // one per retained day
  std::size_t n_excluded = 0;  // days under min_observed
};

RiskSample risk_sample(const Panel& pareto, int min_observed);

// empirical 0.8 quantile of the risk sample (type 7)
struct RiskThreshold {
  double v_r = 0.0;
  std::size_t n_exceed = 0;
  std::size_t n_total = 0;
};
RiskThreshold risk_threshold(const std::vector<double>& risks,
                             double level = 0.8);

struct TimeVarFit {
  double a0 = 0.0;  // log alpha at m_i = 0
  double a1 = 0.0;  // per-unit-M^I log-linear trend in alpha
  double ci_lo = 0.0, ci_hi = 0.0;
  bool significant = false;
};

struct DependenceModel {
  VariogramParams vario;
  double v_r = 1.0;
  std::string risk_kind = "mean_observed";
  double p_fit = 0.9;
  double objective = 0.0;   // weighted squared error at the optimum
  bool oversmooth = false;  // fitted nu > 10
  std::optional<TimeVarFit> time_var;
};

struct DepFitOptions {
  int n_bins = 30;
  int n_boot = 500;
  std::uint64_t seed = 1;
  int min_observed = 10;
  double risk_level = 0.8;
};

// weighted least squares of binned empirical chi against the Brown-Resnick
// pairwise form chi(h) = 2 - 2 Phi(sqrt(gamma_mat(h)/2))
VariogramParams fit_variogram_to_bins(const std::vector<ChiBin>& bins,
                                      double* objective = nullptr,
                                      bool* oversmooth = nullptr);

DependenceModel fit_dependence(const Panel& pareto, double p_fit,
                               DepFitOptions opts = {},
                               const CovariateSeries* time_covariate = nullptr);

void save_dependence(const DependenceModel& m, const std::string& path);
DependenceModel load_dependence(const std::string& path);

}  // namespace spex
