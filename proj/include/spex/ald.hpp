#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace spex {

// check function rho_tau(z) = {tau - 1(z<0)} z
double check_loss(double z, double tau);

struct AldFit {
  double tau = 0.5;
  std::vector<double> betas;     // aligned with covariate_spec
  double log_psi = 0.0;          // scale, intercept-only
  std::vector<std::string> covariate_spec;
  std::size_t n_obs = 0;
  double loglik = 0.0;

  double location(const Eigen::VectorXd& x) const;  // q = beta' x
};

// ALD maximum likelihood = check-loss minimization over the location
// coefficients, with psi profiled out as the mean check loss.
// X rows are design vectors (first column should be the intercept).
AldFit fit_ald(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
               std::vector<std::string> covariate_spec = {});

double ald_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const AldFit& fit);

}  // namespace spex
