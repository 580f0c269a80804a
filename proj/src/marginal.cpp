#include "spex/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "spex/ald.hpp"

namespace spex {

ThresholdField fit_threshold(const Panel& station, const std::vector<double>& u_c) {
  if (u_c.size() != static_cast<std::size_t>(station.n_sites()))
    throw std::invalid_argument("fit_threshold: u_c size mismatch");
  std::vector<double> ys;
  std::vector<double> xs;
  for (Eigen::Index t = 0; t < station.n_times(); ++t)
    for (Eigen::Index s = 0; s < station.n_sites(); ++s)
      if (station.observed(t, s)) {
        ys.push_back(station.values(t, s));
        xs.push_back(u_c[static_cast<std::size_t>(s)]);
      }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(ys.size()), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    X(static_cast<Eigen::Index>(i), 0) = 1.0;
    X(static_cast<Eigen::Index>(i), 1) = xs[i];
    y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  // degenerate covariate (all u_c equal) reduces to an intercept fit
  const bool degenerate =
      *std::max_element(xs.begin(), xs.end()) -
          *std::min_element(xs.begin(), xs.end()) < 1e-12;
  ThresholdField f;
  if (degenerate) {
    AldFit fit = fit_ald(X.leftCols(1), y, 0.9, {"1"});
    f.beta0 = fit.betas[0];
    f.beta1 = 0.0;
  } else {
    AldFit fit = fit_ald(X, y, 0.9, {"1", "u_c"});
    f.beta0 = fit.betas[0];
    f.beta1 = fit.betas[1];
  }
  return f;
}

SpatialCovariates map_spatial_covariates(const std::vector<SiteMeta>& eval_sites,
                                         const Panel& grid,
                                         const std::vector<double>& tau_grid,
                                         const ClimTailFit* clim) {
  SpatialCovariates sc;
  const Eigen::MatrixXd grid_q = empirical_quantiles(grid, tau_grid);
  const Eigen::MatrixXd grid_u = empirical_quantiles(grid, {0.9});
  const auto nearest = nearest_sites(eval_sites, grid.sites);

  const auto n = static_cast<Eigen::Index>(eval_sites.size());
  sc.q_c.resize(n, static_cast<Eigen::Index>(tau_grid.size()));
  sc.u_c.resize(eval_sites.size());
  sc.coast.resize(eval_sites.size());
  if (clim) sc.sigma_c.resize(eval_sites.size());
  for (std::size_t i = 0; i < eval_sites.size(); ++i) {
    const auto g = static_cast<Eigen::Index>(nearest[i]);
    sc.q_c.row(static_cast<Eigen::Index>(i)) = grid_q.row(g);
    sc.u_c[i] = grid_u(g, 0);
    sc.coast[i] = eval_sites[i].coast_dist;
    if (clim) sc.sigma_c[i] = clim->sigma[static_cast<std::size_t>(g)];
  }
  return sc;
}

double exceedance_rate(const MonotoneCubic& qspline, double u, bool* clamped) {
  const double tau_u = qspline.inverse(u, 1e-12);
  double lambda = 1.0 - tau_u;
  const bool out = lambda < 1e-6 || lambda > 0.5;
  if (clamped) *clamped = out;
  return std::clamp(lambda, 1e-6, 0.5);
}

double SiteMarginal::cdf(double x) const {
  if (x <= u)
    return std::clamp(std::min(qspline.inverse(x, 1e-12), 1.0 - lambda), 1e-12, 1.0);
  return 1.0 - lambda * (1.0 - gpd_cdf(x - u, tail));
}

double SiteMarginal::survival(double x) const {
  if (x <= u) return 1.0 - cdf(x);
  return lambda * (1.0 - gpd_cdf(x - u, tail));
}

double SiteMarginal::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("SiteMarginal::quantile: p outside (0,1)");
  if (p <= 1.0 - lambda) return qspline(p);
  return u + gpd_quantile(1.0 - (1.0 - p) / lambda, tail);
}

double SiteMarginal::quantile_from_survival(double s) const {
  if (!(s > 0.0 && s < 1.0))
    throw std::domain_error("SiteMarginal::quantile_from_survival: s outside (0,1)");
  if (s >= lambda) return qspline(1.0 - s);
  return u + gpd_quantile_from_survival(s / lambda, tail);
}

double SiteMarginal::upper_endpoint() const {
  return u + gpd_upper_endpoint(tail);
}

MarginalSlice MarginalModel::at_covariates(DayIndex t, const CovariateRow& row) const {
  if (sc.sigma_c.size() != sites.size())
    throw std::logic_error("MarginalModel: spatial covariates lack sigma_c (tail not fitted)");
  MarginalSlice slice;
  slice.t = t;
  slice.site.resize(sites.size());
  for (std::size_t s = 0; s < sites.size(); ++s) {
    SiteMarginal& sm = slice.site[s];
    try {
      sm.qspline = body.spline(sc.q_c.row(static_cast<Eigen::Index>(s)).transpose(), row.m_i);
    } catch (const std::exception& e) {
      throw std::runtime_error("marginal slice at year " + std::to_string(t.year) +
                               ", site " + sites[s].id + ": " + e.what());
    }
    sm.u = threshold.u(sc.u_c[s]);
    bool clamped = false;
    sm.lambda = exceedance_rate(sm.qspline, sm.u, &clamped);
    if (clamped) ++slice.lambda_clamped;
    const auto design =
        obs_design_row(obs.model, obs.log_clim, sc.sigma_c[s], sc.coast[s], row.m_i);
    sm.tail.sigma = std::exp(obs.log_sigma(design));
    sm.tail.xi = obs.xi;
  }
  return slice;
}

MarginalSlice MarginalModel::at(DayIndex t) const {
  return at_covariates(t, cov.at(t));
}

MarginalSlice MarginalModel::at_year(int year) const {
  return at_covariates(DayIndex{year, 45}, cov.at_year(year));
}

double MarginalModel::lambda(DayIndex t, Eigen::Index s) const {
  return at(t).site[static_cast<std::size_t>(s)].lambda;
}

double MarginalModel::cdf(DayIndex t, Eigen::Index s, double x) const {
  return at(t).site[static_cast<std::size_t>(s)].cdf(x);
}

double MarginalModel::quantile(DayIndex t, Eigen::Index s, double p) const {
  return at(t).site[static_cast<std::size_t>(s)].quantile(p);
}

void save_tail(const TailArtifact& t, const std::string& path) {
  nlohmann::json j;
  j["threshold"] = {{"beta0", t.threshold.beta0}, {"beta1", t.threshold.beta1}};
  j["clim"] = {{"xi", t.clim.xi},
               {"sigma", t.clim.sigma},
               {"site_ids", t.grid_site_ids},
               {"sweeps", t.clim.sweeps},
               {"pll", t.clim.pll}};
  j["obs"] = {{"model", to_string(t.obs.model)},
              {"log_clim", t.obs.log_clim},
              {"theta", t.obs.theta},
              {"xi", t.obs.xi},
              {"pll", t.obs.pll},
              {"covariate_spec", t.obs.covariate_spec}};
  j["station_u"] = t.station_u;
  j["station_ids"] = t.station_ids;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

TailArtifact load_tail(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  TailArtifact t;
  t.threshold.beta0 = j.at("threshold").at("beta0").get<double>();
  t.threshold.beta1 = j.at("threshold").at("beta1").get<double>();
  t.clim.xi = j.at("clim").at("xi").get<double>();
  t.clim.sigma = j.at("clim").at("sigma").get<std::vector<double>>();
  t.clim.sweeps = j.at("clim").at("sweeps").get<int>();
  t.clim.pll = j.at("clim").at("pll").get<double>();
  t.clim.converged = true;
  t.grid_site_ids = j.at("clim").at("site_ids").get<std::vector<std::string>>();
  t.obs.model = obs_model_from_string(j.at("obs").at("model").get<std::string>());
  t.obs.log_clim = j.at("obs").at("log_clim").get<bool>();
  t.obs.theta = j.at("obs").at("theta").get<std::vector<double>>();
  t.obs.xi = j.at("obs").at("xi").get<double>();
  t.obs.pll = j.at("obs").at("pll").get<double>();
  t.obs.covariate_spec =
      j.at("obs").at("covariate_spec").get<std::vector<std::string>>();
  t.station_u = j.at("station_u").get<std::vector<double>>();
  t.station_ids = j.at("station_ids").get<std::vector<std::string>>();
  return t;
}

}  // namespace spex
