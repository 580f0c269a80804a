#pragma once

#include <unistd.h>

#include <Eigen/Core>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "spex/ald.hpp"
#include "spex/body.hpp"
#include "spex/marginal.hpp"
#include "spex/panel.hpp"
#include "spex/rng.hpp"
#include "spex/synth.hpp"

namespace spex::test {

// scratch directory unique to a test, removed on destruction
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("spex_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

// MarginalModel assembled from the generator's true parameters; the truth
// lies in the model class, so no fitting is involved.
inline MarginalModel truth_marginal(const SynthData& d,
                                    const std::vector<double>& tau_grid) {
  MarginalModel m;

  std::vector<AldFit> fits;
  for (double tau : tau_grid) {
    AldFit f;
    f.tau = tau;
    f.betas = {d.spec.beta0, d.spec.beta1, d.spec.beta2};
    f.covariate_spec = body_covariate_names(BodySpec::clim_mi);
    f.n_obs = 1;
    fits.push_back(std::move(f));
  }
  m.body = build_body(std::move(fits));

  const double mi_mid = 0.5 * (d.spec.mi_start + d.spec.mi_end);
  m.threshold.beta0 = d.spec.beta0 + d.spec.beta2 * mi_mid;
  m.threshold.beta1 = d.spec.beta1;

  m.clim.sigma = d.sigma_c;
  m.clim.xi = d.spec.xi_c;
  m.clim.converged = true;

  m.obs.model = d.spec.tail_model;
  m.obs.log_clim = d.spec.tail_log_clim;
  m.obs.theta = d.spec.theta;
  m.obs.xi = d.spec.xi_o;
  m.obs.covariate_spec = obs_design_names(d.spec.tail_model, d.spec.tail_log_clim);

  m.sites = d.station.sites;
  m.cov = d.cov;

  // spatial covariates straight from the truth (climate composite quantiles)
  const auto n = static_cast<Eigen::Index>(d.station.sites.size());
  m.sc.q_c.resize(n, static_cast<Eigen::Index>(tau_grid.size()));
  m.sc.u_c.resize(static_cast<std::size_t>(n));
  m.sc.sigma_c.resize(static_cast<std::size_t>(n));
  m.sc.coast.resize(static_cast<std::size_t>(n));
  for (Eigen::Index s = 0; s < n; ++s) {
    const int g = d.nearest_grid[static_cast<std::size_t>(s)];
    for (std::size_t k = 0; k < tau_grid.size(); ++k)
      m.sc.q_c(s, static_cast<Eigen::Index>(k)) =
          clim_truth_quantile(d, g, tau_grid[k]);
    m.sc.u_c[static_cast<std::size_t>(s)] = d.u_c[static_cast<std::size_t>(g)];
    m.sc.sigma_c[static_cast<std::size_t>(s)] = d.sigma_c[static_cast<std::size_t>(g)];
    m.sc.coast[static_cast<std::size_t>(s)] =
        d.station.sites[static_cast<std::size_t>(s)].coast_dist;
  }
  return m;
}

// direct joint 2-parameter GPD maximum likelihood, the independent oracle
// for the alternating fitter (simple profile grid + polish)
inline GpdParams direct_gpd_mle(const std::vector<double>& y) {
  double ymax = 0.0, mean_y = 0.0;
  for (double v : y) {
    ymax = std::max(ymax, v);
    mean_y += v / static_cast<double>(y.size());
  }
  auto nll = [&](double log_sigma, double xi) {
    const double sigma = std::exp(log_sigma);
    if (xi < -0.99 || xi > 0.99) return 1e300;
    double acc = 0.0;
    if (std::abs(xi) < 1e-10) {
      for (double v : y) acc += log_sigma + v / sigma;
      return acc;
    }
    for (double v : y) {
      const double z = 1.0 + xi * v / sigma;
      if (z <= 0.0) return 1e300;
      acc += log_sigma + (1.0 / xi + 1.0) * std::log(z);
    }
    return acc;
  };
  // coarse grid then coordinate polish
  double best_ls = std::log(mean_y), best_xi = 0.0, best = nll(best_ls, best_xi);
  for (double xi = -0.45; xi <= 0.45; xi += 0.01) {
    for (double ls = std::log(mean_y) - 1.0; ls <= std::log(mean_y) + 1.0; ls += 0.02) {
      const double v = nll(ls, xi);
      if (v < best) {
        best = v;
        best_ls = ls;
        best_xi = xi;
      }
    }
  }
  double step_l = 0.01, step_x = 0.005;
  for (int it = 0; it < 200; ++it) {
    bool improved = false;
    for (double dl : {-step_l, step_l})
      for (double dx : {-step_x, 0.0, step_x}) {
        const double v = nll(best_ls + dl, best_xi + dx);
        if (v < best - 1e-13) {
          best = v;
          best_ls += dl;
          best_xi += dx;
          improved = true;
        }
      }
    for (double dx : {-step_x, step_x}) {
      const double v = nll(best_ls, best_xi + dx);
      if (v < best - 1e-13) {
        best = v;
        best_xi += dx;
        improved = true;
      }
    }
    if (!improved) {
      step_l *= 0.25;
      step_x *= 0.25;
      if (step_l < 1e-10) break;
    }
  }
  return {std::exp(best_ls), best_xi};
}

}  // namespace spex::test
