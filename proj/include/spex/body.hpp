#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "spex/ald.hpp"
#include "spex/covariates.hpp"
#include "spex/interp.hpp"
#include "spex/panel.hpp"

namespace spex {

// Table-1 model rows for the quantile-regression location
enum class BodySpec { base, clim, clim_mi };

std::string to_string(BodySpec s);
BodySpec body_spec_from_string(const std::string& s);
std::vector<std::string> body_covariate_names(BodySpec s);

// default tau grid: 0.01, 0.05..0.95 step 0.05, 0.99
std::vector<double> default_tau_grid();

struct BodyModel {
  std::vector<double> tau_grid;
  std::vector<AldFit> fits;  // one per tau, shared covariate spec
  BodySpec spec = BodySpec::clim_mi;

  // quantile knots at one (t,s); q_c_row is that site's climate quantile
  // per tau-grid entry (ignored for the base spec)
  std::vector<double> quantile_knots(const Eigen::VectorXd& q_c_row,
                                     double m_i) const;
  // tau -> quantile interpolant; throws on crossing knots
  MonotoneCubic spline(const Eigen::VectorXd& q_c_row, double m_i) const;
};

// training references used to validate the non-crossing invariant
struct BodyTraining {
  const Panel* panel = nullptr;
  const Eigen::MatrixXd* q_c = nullptr;  // site x tau
  const CovariateSeries* cov = nullptr;
};

// Assembles the model; with training data present, checks that predicted
// quantiles increase strictly in tau at every observed (t,s) and names the
// offending (t, s, tau) otherwise.
BodyModel build_body(std::vector<AldFit> fits,
                     std::optional<BodyTraining> training = std::nullopt);

// design matrix/response over observed entries for one tau fit
void body_design(const Panel& panel, const Eigen::MatrixXd& q_c,
                 const CovariateSeries& cov, BodySpec spec, std::size_t tau_idx,
                 Eigen::MatrixXd& X, Eigen::VectorXd& y);

// fits the full tau grid (parallel across taus)
BodyModel fit_body(const Panel& panel, const Eigen::MatrixXd& q_c,
                   const CovariateSeries& cov, BodySpec spec,
                   std::vector<double> tau_grid = default_tau_grid());

void save_body(const BodyModel& model, const std::string& path);
BodyModel load_body(const std::string& path);

}  // namespace spex
