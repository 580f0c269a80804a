#include "spex/ald.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "spex/optim.hpp"
#include "spex/stats.hpp"

namespace spex {

double check_loss(double z, double tau) {
  return (tau - (z < 0.0 ? 1.0 : 0.0)) * z;
}

double AldFit::location(const Eigen::VectorXd& x) const {
  double q = 0.0;
  for (std::size_t j = 0; j < betas.size(); ++j) q += betas[j] * x(static_cast<Eigen::Index>(j));
  return q;
}

namespace {

double mean_check_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const std::vector<double>& beta, double tau) {
  const Eigen::Index n = X.rows();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double q = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j) q += beta[static_cast<std::size_t>(j)] * X(i, j);
    acc += check_loss(y(i) - q, tau);
  }
  return acc / static_cast<double>(n);
}

}  // namespace

AldFit fit_ald(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
               std::vector<std::string> covariate_spec) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("fit_ald: tau outside (0,1)");
  if (X.rows() != y.size()) throw std::invalid_argument("fit_ald: X/y size mismatch");
  if (X.rows() < 50)
    throw std::runtime_error("fit_ald: need at least 50 observations, got " +
                             std::to_string(X.rows()));
  const auto p = static_cast<std::size_t>(X.cols());

  // centre the non-intercept columns: the optimizer then works in a
  // well-conditioned parametrization, folded back below
  Eigen::MatrixXd Xc = X;
  Eigen::VectorXd offsets = Eigen::VectorXd::Zero(X.cols());
  for (Eigen::Index j = 1; j < X.cols(); ++j) {
    offsets(j) = X.col(j).mean();
    Xc.col(j).array() -= offsets(j);
  }

  auto objective = [&](const std::vector<double>& beta) {
    return mean_check_loss(Xc, y, beta, tau);
  };

  // start at the marginal tau-quantile with zero slopes, plus spread-scaled
  // perturbations of the intercept
  std::vector<double> yv(y.data(), y.data() + y.size());
  const double q0 = quantile_type7(yv, tau);
  const double spread = std::max(1e-3, sample_sd(yv));
  std::vector<std::vector<double>> starts;
  for (double shift : {0.0, -0.5 * spread, 0.5 * spread}) {
    std::vector<double> b(p, 0.0);
    b[0] = q0 + shift;
    starts.push_back(std::move(b));
  }

  NelderMeadOptions opts;
  opts.x_tol = 1e-10;
  opts.f_tol = 1e-13;
  opts.restarts = 4;
  opts.initial_step = 0.25 * spread;
  OptimResult r = nelder_mead_multistart(objective, starts, opts);
  if (!r.converged || !std::isfinite(r.value)) {
    std::ostringstream msg;
    msg << "fit_ald: optimizer failed at tau=" << tau << ", last iterate (";
    for (std::size_t j = 0; j < r.x.size(); ++j)
      msg << (j ? ", " : "") << r.x[j];
    msg << "), objective " << r.value;
    throw std::runtime_error(msg.str());
  }

  AldFit fit;
  fit.tau = tau;
  fit.betas = r.x;
  for (Eigen::Index j = 1; j < X.cols(); ++j)
    fit.betas[0] -= fit.betas[static_cast<std::size_t>(j)] * offsets(j);
  fit.log_psi = std::log(std::max(r.value, 1e-300));
  fit.covariate_spec = std::move(covariate_spec);
  fit.n_obs = static_cast<std::size_t>(X.rows());
  fit.loglik = ald_loglik(X, y, fit);
  return fit;
}

double ald_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const AldFit& fit) {
  const double psi = std::exp(fit.log_psi);
  const double n = static_cast<double>(X.rows());
  const double loss = mean_check_loss(X, y, fit.betas, fit.tau) * n;
  return n * std::log(fit.tau * (1.0 - fit.tau)) - n * fit.log_psi - loss / psi;
}

}  // namespace spex
