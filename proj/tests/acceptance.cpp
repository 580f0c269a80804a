// Acceptance suite: one pass/fail line per criterion, exit 1 on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "spex/body.hpp"
#include "spex/chi.hpp"
#include "spex/depfit.hpp"
#include "spex/gpd.hpp"
#include "spex/resample.hpp"
#include "spex/risk.hpp"
#include "spex/simulate.hpp"
#include "spex/stats.hpp"
#include "spex/synth.hpp"
#include "spex/transform.hpp"
#include "spex/variogram.hpp"

using namespace spex;

namespace {

struct Criterion {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. single-site GPD recovery through the alternating fitter
Criterion criterion1() {
  Criterion c;
  Rng rng(101);
  const GpdParams truth{2.0, -0.15};
  const auto y = sample_gpd(20000, truth, rng);

  const auto t0 = std::chrono::steady_clock::now();
  ClimTailFit fit = fit_clim_gpd({y});
  const double elapsed = seconds_since(t0);

  c.require(std::abs(fit.sigma[0] - truth.sigma) / truth.sigma < 0.05,
            "sigma " + fmt(fit.sigma[0]) + " outside 5% of 2");
  c.require(std::abs(fit.xi - truth.xi) < 0.03,
            "xi " + fmt(fit.xi) + " outside 0.03 of -0.15");
  c.require(elapsed < 5.0, "runtime " + fmt(elapsed) + " s >= 5 s");
  c.detail = "sigma=" + fmt(fit.sigma[0]) + " xi=" + fmt(fit.xi) + " t=" +
             fmt(elapsed) + "s" + (c.detail.empty() ? "" : " | " + c.detail);
  return c;
}

// 2. alternating climate fit across 50 sites with a shared shape
Criterion criterion2() {
  Criterion c;
  Rng rng(102);
  const double xi_true = -0.15;
  std::vector<std::vector<double>> excesses;
  std::vector<double> sigma_true;
  for (int s = 0; s < 50; ++s) {
    const double sigma = 1.0 + 2.0 * (s / 49.0);
    sigma_true.push_back(sigma);
    excesses.push_back(sample_gpd(3000, {sigma, xi_true}, rng));
  }
  ClimTailFit fit = fit_clim_gpd(excesses);
  c.require(fit.converged, "no convergence");
  c.require(fit.sweeps <= 200, "sweeps " + std::to_string(fit.sweeps) + " > 200");
  c.require(std::abs(fit.xi - xi_true) < 0.02,
            "xi " + fmt(fit.xi) + " outside 0.02 of -0.15");
  double worst = 0.0;
  for (int s = 0; s < 50; ++s)
    worst = std::max(worst, std::abs(fit.sigma[static_cast<std::size_t>(s)] -
                                     sigma_true[static_cast<std::size_t>(s)]) /
                                sigma_true[static_cast<std::size_t>(s)]);
  c.require(worst < 0.05, "worst per-site sigma error " + fmt(worst) + " >= 5%");
  c.detail = "xi=" + fmt(fit.xi) + " worst_sigma_rel=" + fmt(worst) + " sweeps=" +
             std::to_string(fit.sweeps) + (c.detail.empty() ? "" : " | " + c.detail);
  return c;
}

// 3. covariate GPD recovery (M1) and the nested-likelihood ladder
Criterion criterion3() {
  Criterion c;
  Rng rng(103);
  const int n = 50000;
  const std::vector<double> theta_true{0.2, 1.0, 0.5};
  const double xi_true = -0.15;

  Eigen::MatrixXd X1(n, 3);
  std::vector<double> y(n);
  std::vector<double> sigma_c_col(n), coast_col(n), mi_col(n);
  for (int i = 0; i < n; ++i) {
    const double sigma_c = rng.uniform(0.8, 3.0);
    const double coast = rng.uniform(5.0, 200.0);
    const double m_i = rng.uniform(-1.0, 1.0);
    sigma_c_col[static_cast<std::size_t>(i)] = sigma_c;
    coast_col[static_cast<std::size_t>(i)] = coast;
    mi_col[static_cast<std::size_t>(i)] = m_i;
    const auto row = obs_design_row(ObsModel::M1, true, sigma_c, coast, m_i);
    for (int j = 0; j < 3; ++j) X1(i, j) = row[static_cast<std::size_t>(j)];
    const double ls = theta_true[0] * row[0] + theta_true[1] * row[1] +
                      theta_true[2] * row[2];
    y[static_cast<std::size_t>(i)] = gpd_quantile(rng.uniform(), {std::exp(ls), xi_true});
  }
  ObsTailFit m1 = fit_obs_gpd(X1, y, ObsModel::M1, true);
  for (int j = 0; j < 3; ++j)
    c.require(std::abs(m1.theta[static_cast<std::size_t>(j)] -
                       theta_true[static_cast<std::size_t>(j)]) < 0.05,
              "theta" + std::to_string(j) + "=" +
                  fmt(m1.theta[static_cast<std::size_t>(j)]) + " off by >= 0.05");
  c.require(std::abs(m1.xi - xi_true) < 0.05, "xi " + fmt(m1.xi) + " off by >= 0.05");

  // nested ladder under the log link, warm-started upward; checked on the
  // synthetic data set above and on a year-block resample of it
  auto ladder_holds = [&](const std::vector<int>& rows) -> bool {
    const auto nn = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd X0(nn, 2), Xm1(nn, 3), Xm2(nn, 5);
    std::vector<double> yy(rows.size());
    for (Eigen::Index i = 0; i < nn; ++i) {
      const auto r = static_cast<std::size_t>(rows[static_cast<std::size_t>(i)]);
      yy[static_cast<std::size_t>(i)] = y[r];
      const auto r0 = obs_design_row(ObsModel::M0, true, sigma_c_col[r], coast_col[r], mi_col[r]);
      const auto r1 = obs_design_row(ObsModel::M1, true, sigma_c_col[r], coast_col[r], mi_col[r]);
      const auto r2 = obs_design_row(ObsModel::M2, true, sigma_c_col[r], coast_col[r], mi_col[r]);
      for (int j = 0; j < 2; ++j) X0(i, j) = r0[static_cast<std::size_t>(j)];
      for (int j = 0; j < 3; ++j) Xm1(i, j) = r1[static_cast<std::size_t>(j)];
      for (int j = 0; j < 5; ++j) Xm2(i, j) = r2[static_cast<std::size_t>(j)];
    }
    ObsTailFit f0 = fit_obs_gpd(X0, yy, ObsModel::M0, true);
    std::vector<double> w1 = {f0.theta[0], f0.theta[1], 0.0};
    ObsTailFit f1 = fit_obs_gpd(Xm1, yy, ObsModel::M1, true, {}, &w1);
    // M2 log-link design is (1, ln sigma_c, ln C, m_i, ln C * m_i)
    std::vector<double> w2 = {f1.theta[0], f1.theta[1], 0.0, f1.theta[2], 0.0};
    ObsTailFit f2 = fit_obs_gpd(Xm2, yy, ObsModel::M2, true, {}, &w2);
    const bool ok = f2.pll >= f1.pll - 1e-6 && f1.pll >= f0.pll - 1e-6;
    if (!ok)
      c.detail += " [pll M0=" + fmt(f0.pll) + " M1=" + fmt(f1.pll) +
                  " M2=" + fmt(f2.pll) + "]";
    return ok;
  };

  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  c.require(ladder_holds(all), "nested pll ordering fails on synthetic data");

  Rng boot_rng(1003);
  std::vector<int> resample(n);
  for (auto& r : resample) r = static_cast<int>(boot_rng.below(n));
  c.require(ladder_holds(resample), "nested pll ordering fails on a bootstrap resample");

  c.detail = "theta=(" + fmt(m1.theta[0]) + "," + fmt(m1.theta[1]) + "," +
             fmt(m1.theta[2]) + ") xi=" + fmt(m1.xi) +
             (c.detail.empty() ? "" : " | " + c.detail);
  return c;
}

// 4. ALD quantile regression
Criterion criterion4() {
  Criterion c;
  Rng rng(104);
  {
    const int n = 100000;
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(n, 1);
    Eigen::VectorXd yv(n);
    for (int i = 0; i < n; ++i) yv(i) = rng.normal();
    AldFit fit = fit_ald(X, yv, 0.5, {"1"});
    c.require(std::abs(fit.betas[0]) < 0.02,
              "median intercept " + fmt(fit.betas[0]) + " outside 0.02");
    c.detail = "b0=" + fmt(fit.betas[0]);
  }
  {
    // Table-1 covariate form: q_tau = b0 + b1 q_c + b2 m_i
    const int n = 60000;
    const double tau = 0.8;
    const std::vector<double> beta{1.0, 0.7, 1.2};
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd yv(n);
    const double z_tau = norm_quantile(tau);
    for (int i = 0; i < n; ++i) {
      const double qc = rng.uniform(-6.0, 6.0);
      const double mi = rng.uniform(-1.0, 1.0);
      X(i, 0) = 1.0;
      X(i, 1) = qc;
      X(i, 2) = mi;
      yv(i) = beta[0] + beta[1] * qc + beta[2] * mi + (rng.normal() - z_tau);
    }
    AldFit fit = fit_ald(X, yv, tau, {"1", "q_c", "m_i"});
    for (int j = 0; j < 3; ++j)
      c.require(std::abs(fit.betas[static_cast<std::size_t>(j)] -
                         beta[static_cast<std::size_t>(j)]) < 0.05,
                "beta" + std::to_string(j) + "=" +
                    fmt(fit.betas[static_cast<std::size_t>(j)]) + " off by >= 0.05");
    c.detail += " beta=(" + fmt(fit.betas[0]) + "," + fmt(fit.betas[1]) + "," +
                fmt(fit.betas[2]) + ")";
  }
  return c;
}

// 5. composite CDF: continuity, round trip, PIT uniformity across seeds
Criterion criterion5() {
  Criterion c;
  SynthSpec spec;
  spec.n_stations = 15;
  spec.n_years = 10;
  spec.missing_rate = 0.2;
  spec.seed = 105;
  SynthData d = generate(spec);

  // fit the full marginal pipeline on the synthetic data
  const auto taus = default_tau_grid();
  const SpatialCovariates sc_fit = map_spatial_covariates(d.station.sites, d.grid, taus);
  BodyModel body = fit_body(d.station, sc_fit.q_c, d.cov, BodySpec::clim_mi, taus);

  const Eigen::MatrixXd u_c_grid = empirical_quantiles(d.grid, {0.9});
  std::vector<std::vector<double>> excesses(static_cast<std::size_t>(d.grid.n_sites()));
  for (Eigen::Index s = 0; s < d.grid.n_sites(); ++s)
    for (Eigen::Index t = 0; t < d.grid.n_times(); ++t) {
      const double yv = d.grid.values(t, s) - u_c_grid(s, 0);
      if (yv > 0.0) excesses[static_cast<std::size_t>(s)].push_back(yv);
    }
  ClimTailFit clim = fit_clim_gpd(excesses);

  const auto nearest = nearest_sites(d.station.sites, d.grid.sites);
  std::vector<double> u_c_station;
  for (auto g : nearest) u_c_station.push_back(u_c_grid(g, 0));
  ThresholdField thr = fit_threshold(d.station, u_c_station);

  std::vector<double> yy;
  std::vector<std::vector<double>> rows;
  for (Eigen::Index t = 0; t < d.station.n_times(); ++t) {
    const double m_i = d.cov.at(d.station.times[static_cast<std::size_t>(t)]).m_i;
    for (Eigen::Index s = 0; s < d.station.n_sites(); ++s) {
      if (!d.station.observed(t, s)) continue;
      const double excess =
          d.station.values(t, s) - thr.u(u_c_station[static_cast<std::size_t>(s)]);
      if (excess <= 0.0) continue;
      yy.push_back(excess);
      rows.push_back(obs_design_row(
          ObsModel::M1, true,
          clim.sigma[static_cast<std::size_t>(nearest[static_cast<std::size_t>(s)])],
          d.station.sites[static_cast<std::size_t>(s)].coast_dist, m_i));
    }
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < 3; ++j)
      X(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  ObsTailFit obs = fit_obs_gpd(X, yy, ObsModel::M1, true);

  MarginalModel model;
  model.body = std::move(body);
  model.threshold = thr;
  model.clim = clim;
  model.obs = obs;
  model.sites = d.station.sites;
  model.sc = map_spatial_covariates(d.station.sites, d.grid, taus, &model.clim);
  model.cov = d.cov;

  // continuity at u and quantile/cdf round trip over a week of slices
  double worst_gap = 0.0, worst_round = 0.0;
  for (int k = 0; k < 7; ++k) {
    const MarginalSlice slice =
        model.at(d.station.times[static_cast<std::size_t>(40 + 130 * k)]);
    for (const auto& sm : slice.site) {
      worst_gap = std::max(worst_gap, std::abs(sm.cdf(sm.u) - (1.0 - sm.lambda)));
      for (double p = 0.01; p < 0.999; p += 0.018)
        worst_round = std::max(worst_round, std::abs(sm.cdf(sm.quantile(p)) - p));
    }
  }
  c.require(worst_gap < 1e-9, "continuity gap " + fmt(worst_gap) + " >= 1e-9");
  c.require(worst_round < 1e-9, "round trip error " + fmt(worst_round) + " >= 1e-9");

  // PIT of self-simulated data: KS at alpha = 0.01 across 100 seeds
  int passed = 0;
  const MarginalSlice base = model.at(d.station.times[300]);
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(2000 + seed);
    std::vector<double> u;
    u.reserve(2000);
    for (int i = 0; i < 2000; ++i) {
      const auto& sm = base.site[static_cast<std::size_t>(i) % base.site.size()];
      u.push_back(sm.cdf(sm.quantile(rng.uniform())));
    }
    if (ks_uniform(u).p_value > 0.01) ++passed;
  }
  c.require(passed >= 95, "KS passed only " + std::to_string(passed) + "/100 seeds");
  c.detail = "gap=" + fmt(worst_gap) + " roundtrip=" + fmt(worst_round) +
             " ks_pass=" + std::to_string(passed) + "/100" +
             (c.detail.empty() ? "" : " | " + c.detail);
  return c;
}

// shared 6x10 lattice at 50 km used by criteria 6 and 7
std::vector<SiteMeta> lattice60() {
  std::vector<SiteMeta> sites;
  const double lat0 = 53.0, lon0 = -9.0;
  const double km_lat = 6371.0 * M_PI / 180.0;
  const double km_lon = km_lat * std::cos(lat0 * M_PI / 180.0);
  for (int iy = 0; iy < 10; ++iy)
    for (int ix = 0; ix < 6; ++ix) {
      SiteMeta s;
      s.id = "g" + std::to_string(iy * 6 + ix);
      s.lon = lon0 + ix * 50.0 / km_lon;
      s.lat = lat0 + iy * 50.0 / km_lat;
      s.coast_dist = 5.0 + ix;
      s.kind = SiteKind::grid;
      sites.push_back(std::move(s));
    }
  return sites;
}

// pooled pairwise chi of simulated fields at exact lattice distances, with
// a field-batch Monte Carlo standard error
struct ChiAtDistance {
  double chi;
  double se;
};
ChiAtDistance simulated_chi(const SimBatch& batch, double h, double p) {
  const auto m = static_cast<Eigen::Index>(batch.m());
  const auto n = batch.profiles.cols();
  const Projection proj = panel_projection(batch.sites);
  const auto xy = project_sites(batch.sites, proj);

  // per-site empirical p-quantiles of the simulated fields r_i w_i
  std::vector<std::vector<char>> exceed(static_cast<std::size_t>(n));
  for (Eigen::Index s = 0; s < n; ++s) {
    std::vector<double> vals(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i)
      vals[static_cast<std::size_t>(i)] = batch.risks[static_cast<std::size_t>(i)] *
                                          batch.profiles(i, s);
    const double v_p = quantile_type7(vals, p);
    auto& e = exceed[static_cast<std::size_t>(s)];
    e.resize(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i)
      e[static_cast<std::size_t>(i)] =
          batch.risks[static_cast<std::size_t>(i)] * batch.profiles(i, s) > v_p;
  }

  std::vector<std::pair<int, int>> pairs;
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b)
      if (std::abs((xy.row(a) - xy.row(b)).norm() - h) < 0.5)
        pairs.emplace_back(static_cast<int>(a), static_cast<int>(b));

  const int G = 50;
  std::vector<double> joint(G, 0.0), cond(G, 0.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int g = static_cast<int>(i * G / m);
    for (const auto& [a, b] : pairs) {
      const bool ea = exceed[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)];
      const bool eb = exceed[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
      joint[static_cast<std::size_t>(g)] += (ea && eb) ? 2.0 : 0.0;
      cond[static_cast<std::size_t>(g)] += (ea ? 1.0 : 0.0) + (eb ? 1.0 : 0.0);
    }
  }
  double tj = 0.0, tc = 0.0;
  for (int g = 0; g < G; ++g) {
    tj += joint[static_cast<std::size_t>(g)];
    tc += cond[static_cast<std::size_t>(g)];
  }
  std::vector<double> batch_chi(G);
  for (int g = 0; g < G; ++g)
    batch_chi[static_cast<std::size_t>(g)] =
        cond[static_cast<std::size_t>(g)] > 0.0
            ? joint[static_cast<std::size_t>(g)] / cond[static_cast<std::size_t>(g)]
            : 0.0;
  const double se = sample_sd(batch_chi) / std::sqrt(static_cast<double>(G));
  return {tj / tc, se};
}

// 6. Brown-Resnick simulator vs the closed form, and site-relabel invariance
Criterion criterion6(SimBatch& batch_out) {
  Criterion c;
  const VariogramParams truth{1.5, 200.0, 1.0};
  auto sites = lattice60();

  SimOptions opts;
  opts.m = 100000;
  opts.L = 300;
  opts.seed = 106;
  SimBatch batch = simulate_profiles(truth, sites, opts);

  for (double h : {50.0, 100.0, 200.0, 300.0}) {
    const ChiAtDistance est = simulated_chi(batch, h, 0.98);
    const double theory = chi_isotropic(h, truth);
    const double dev = std::abs(est.chi - theory) / est.se;
    c.require(dev < 3.0, "h=" + fmt(h) + ": chi=" + fmt(est.chi) + " vs " +
                             fmt(theory) + " (" + fmt(dev) + " SE)");
    c.detail += (c.detail.empty() ? "" : " ") + ("h" + fmt(h) + ":" + fmt(est.chi) +
                "/" + fmt(theory));
  }

  // invariance to the nominated reference: relabelled site order and a
  // disjoint stream still match the closed form at every distance
  std::vector<SiteMeta> relabelled(sites.rbegin(), sites.rend());
  SimOptions opts2 = opts;
  opts2.seed = 206;
  opts2.m = 60000;
  SimBatch batch2 = simulate_profiles(truth, relabelled, opts2);
  for (double h : {50.0, 300.0}) {
    const ChiAtDistance est = simulated_chi(batch2, h, 0.98);
    const double theory = chi_isotropic(h, truth);
    const double dev = std::abs(est.chi - theory) / est.se;
    c.require(dev < 3.0, "relabelled h=" + fmt(h) + ": " + fmt(dev) + " SE");
  }
  batch_out = std::move(batch);
  return c;
}

// 7. dependence fit recovery from the criterion-6 fields
Criterion criterion7(const SimBatch& batch) {
  Criterion c;
  const VariogramParams truth{1.5, 200.0, 1.0};

  Panel panel;
  panel.sites = batch.sites;
  panel.scale = ValueScale::pareto;
  const auto m = static_cast<Eigen::Index>(batch.m());
  panel.values.resize(m, batch.profiles.cols());
  panel.observed = Mask::Ones(m, batch.profiles.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    panel.times.push_back({2000 + static_cast<int>(i) / 92, static_cast<int>(i) % 92});
    panel.values.row(i) = batch.profiles.row(i) * batch.risks[static_cast<std::size_t>(i)];
  }

  DepFitOptions opts;
  opts.n_bins = 15;
  opts.n_boot = 200;
  opts.seed = 107;
  DependenceModel fit = fit_dependence(panel, 0.98, opts);

  c.require(std::abs(fit.vario.alpha - truth.alpha) / truth.alpha < 0.15,
            "alpha " + fmt(fit.vario.alpha) + " outside 15%");
  c.require(std::abs(fit.vario.phi - truth.phi) / truth.phi < 0.15,
            "phi " + fmt(fit.vario.phi) + " outside 15%");
  c.require(std::abs(fit.vario.nu - truth.nu) / truth.nu < 0.15,
            "nu " + fmt(fit.vario.nu) + " outside 15%");
  c.detail = "alpha=" + fmt(fit.vario.alpha) + " phi=" + fmt(fit.vario.phi) +
             " nu=" + fmt(fit.vario.nu) + (c.detail.empty() ? "" : " | " + c.detail);
  return c;
}

// 8. importance estimator: analytic case, naive MC, scaling, identity
Criterion criterion8() {
  Criterion c;
  {
    SimBatch b;
    b.sites = {SiteMeta{"s", -8.0, 53.0, 10.0, SiteKind::station}};
    b.profiles = Eigen::MatrixXd::Ones(10000, 1);
    Rng rng(108);
    b.risks.resize(10000);
    for (auto& r : b.risks) r = rng.pareto();
    b.aux_risks.resize(100);
    Rng aux(109);
    for (auto& r : b.aux_risks) r = aux.pareto();
    const EventEstimate est = estimate_event(b, {10.0}, 1.0);
    c.require(std::abs(est.prob - 0.1) / 0.1 < 0.02,
              "single-site Pr=" + fmt(est.prob) + " outside 2% of 0.1");
    c.require(std::abs(est.coverage - est.coverage_given_event * est.prob) < 1e-12,
              "coverage identity violated");
    c.detail = "p1site=" + fmt(est.prob);
  }
  {
    const VariogramParams vario{1.2, 150.0, 0.9};
    std::vector<SiteMeta> sites;
    for (int s = 0; s < 10; ++s)
      sites.push_back(SiteMeta{"s" + std::to_string(s), -9.0 + 0.35 * s,
                               53.0 + 0.1 * (s % 4), 10.0, SiteKind::station});
    SimOptions opts;
    opts.m = 25000;
    opts.L = 150;
    opts.seed = 110;
    SimBatch batch = simulate_profiles(vario, sites, opts);
    const double v_r = 4.0;
    std::vector<double> tp;
    for (int s = 0; s < 10; ++s) tp.push_back(60.0 + 6.0 * s);

    const EventEstimate imp = estimate_event(batch, tp, v_r);
    c.require(std::abs(imp.coverage - imp.coverage_given_event * imp.prob) < 1e-12,
              "coverage identity violated on the 10-site model");

    SimOptions nopts = opts;
    nopts.m = 250000;
    nopts.L = 1;
    nopts.seed = 777;
    SimBatch fresh = simulate_profiles(vario, sites, nopts);
    double hits = 0.0;
    for (std::size_t i = 0; i < fresh.m(); ++i)
      for (int s = 0; s < 10; ++s)
        if (fresh.risks[i] * v_r * fresh.profiles(static_cast<Eigen::Index>(i), s) >
            tp[static_cast<std::size_t>(s)]) {
          hits += 1.0;
          break;
        }
    const double p_cond = hits / static_cast<double>(fresh.m());
    const double naive = p_cond / v_r;
    const double naive_se =
        std::sqrt(p_cond * (1.0 - p_cond) / static_cast<double>(fresh.m())) / v_r;
    const double comb = std::sqrt(imp.se * imp.se + naive_se * naive_se);
    c.require(std::abs(imp.prob - naive) < 3.0 * comb,
              "naive MC disagrees: imp=" + fmt(imp.prob) + " naive=" + fmt(naive) +
                  " (" + fmt(std::abs(imp.prob - naive) / comb) + " SE)");
    c.detail += " imp=" + fmt(imp.prob) + " naive=" + fmt(naive);

    // scaling property at b' in {1, b/2, b}
    for (double b_prime : {1.0, imp.b_scaling / 2.0, imp.b_scaling}) {
      EventOptions forced;
      forced.b_override = b_prime;
      const EventEstimate est = estimate_event(batch, tp, v_r, forced);
      const double cc = std::sqrt(est.se * est.se + imp.se * imp.se);
      c.require(std::abs(est.prob - imp.prob) < 3.0 * std::max(cc, 1e-12),
                "scaling check failed at b'=" + fmt(b_prime));
    }
  }
  return c;
}

// 9. resampling machinery
Criterion criterion9() {
  Criterion c;
  SynthSpec spec;
  spec.n_stations = 12;
  spec.n_years = 8;
  spec.missing_rate = 0.2;
  spec.tail_model = ObsModel::M0;
  spec.theta = {0.2, 1.0};
  spec.seed = 111;
  SynthData d = generate(spec);
  MarginalModel model = test::truth_marginal(d, default_tau_grid());
  Panel uniform = to_uniform(d.station, model);

  BootstrapPlan plan;
  plan.block_length = 5;
  plan.seed = 112;
  for (int r = 0; r < 5; ++r) {
    Panel rep = block_bootstrap_replicate(uniform, plan, r);
    if (!(rep.observed.array() == uniform.observed.array()).all()) {
      c.require(false, "replicate mask differs from the source mask");
      break;
    }
  }

  // bias correction idempotence with real re-fits
  const auto design_of = [&](const Panel& celsius, Eigen::MatrixXd& X,
                             std::vector<double>& y) {
    std::vector<std::vector<double>> rows;
    y.clear();
    for (Eigen::Index t = 0; t < celsius.n_times(); ++t)
      for (Eigen::Index s = 0; s < celsius.n_sites(); ++s) {
        if (!celsius.observed(t, s)) continue;
        const double u = model.threshold.u(model.sc.u_c[static_cast<std::size_t>(s)]);
        const double excess = celsius.values(t, s) - u;
        if (excess <= 0.0) continue;
        y.push_back(excess);
        rows.push_back(obs_design_row(ObsModel::M0, true,
                                      model.sc.sigma_c[static_cast<std::size_t>(s)],
                                      10.0, 0.0));
      }
    X.resize(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < 2; ++j)
        X(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  };
  Eigen::MatrixXd X_full;
  std::vector<double> y_full;
  design_of(d.station, X_full, y_full);
  ObsTailFit full = fit_obs_gpd(X_full, y_full, ObsModel::M0, true);

  const int n_rep = 100;
  std::vector<Eigen::MatrixXd> Xs(n_rep);
  std::vector<std::vector<double>> ys(n_rep);
  std::vector<ObsTailFit> fits(n_rep);
  for (int r = 0; r < n_rep; ++r) {
    Panel rep = from_uniform(block_bootstrap_replicate(uniform, plan, r), model);
    design_of(rep, Xs[static_cast<std::size_t>(r)], ys[static_cast<std::size_t>(r)]);
    fits[static_cast<std::size_t>(r)] =
        fit_obs_gpd(Xs[static_cast<std::size_t>(r)], ys[static_cast<std::size_t>(r)],
                    ObsModel::M0, true);
  }
  auto refit = [&](std::size_t r, double xi_fixed) {
    return fit_obs_gpd(Xs[r], ys[r], ObsModel::M0, true, {}, &fits[r].theta,
                       &xi_fixed);
  };
  BiasCorrectResult once = bias_correct(fits, full, refit);
  auto refit2 = [&](std::size_t r, double xi_fixed) {
    return fit_obs_gpd(Xs[r], ys[r], ObsModel::M0, true, {},
                       &once.corrected[r].theta, &xi_fixed);
  };
  BiasCorrectResult twice = bias_correct(once.corrected, full, refit2);
  c.require(std::abs(twice.shift) < 1e-9,
            "second-pass shift " + fmt(twice.shift) + " not ~0");
  double worst_theta = 0.0;
  for (std::size_t r = 0; r < twice.corrected.size(); ++r)
    for (std::size_t j = 0; j < full.theta.size(); ++j)
      worst_theta = std::max(worst_theta,
                             std::abs(twice.corrected[r].theta[j] -
                                      once.corrected[r].theta[j]));
  c.require(worst_theta < 1e-4,
            "re-applied correction moved theta by " + fmt(worst_theta));

  // CRPS analytic value
  auto unif_q = [](double tau) { return tau; };
  auto unif_cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
  const double crps = crps_quadrature(unif_q, unif_cdf, 0.5);
  c.require(std::abs(crps - 1.0 / 12.0) < 1e-4,
            "uniform CRPS " + fmt(crps) + " vs 1/12");

  // fold specs partition the observed entries exactly
  for (FoldKind kind : {FoldKind::k90, FoldKind::st}) {
    FoldOptions fopts;
    fopts.n_clusters = 10;  // 12 stations available
    FoldSpec folds = make_folds(d.station, kind, fopts);
    bool exact = true;
    for (Eigen::Index t = 0; t < d.station.n_times(); ++t)
      for (Eigen::Index s = 0; s < d.station.n_sites(); ++s)
        exact &= (folds.assignment(t, s) >= 0) == (d.station.observed(t, s) != 0);
    c.require(exact, std::string("fold assignment not an exact partition (") +
                         (kind == FoldKind::k90 ? "k90" : "st") + ")");
  }
  c.detail = "shift2=" + fmt(twice.shift) + " crps=" + fmt(crps) +
             (c.detail.empty() ? "" : " | " + c.detail);
  return c;
}

}  // namespace

int main() {
  int failures = 0;
  const auto t0 = std::chrono::steady_clock::now();
  auto report = [&](int idx, const char* name, const Criterion& c) {
    std::printf("%s criterion %d (%s)%s%s\n", c.pass ? "PASS" : "FAIL", idx, name,
                c.detail.empty() ? "" : ": ", c.detail.c_str());
    std::fflush(stdout);
    if (!c.pass) ++failures;
  };

  report(1, "single-site GPD recovery", criterion1());
  report(2, "alternating climate-grid fit", criterion2());
  report(3, "covariate GPD recovery + nested ladder", criterion3());
  report(4, "ALD quantile regression", criterion4());
  report(5, "composite CDF and PIT", criterion5());
  SimBatch batch6;
  report(6, "Brown-Resnick simulator chi", criterion6(batch6));
  report(7, "dependence fit recovery", criterion7(batch6));
  report(8, "importance-sampling estimator", criterion8());
  report(9, "resampling machinery", criterion9());
  std::printf(
      "SKIP criterion 10 (paper-number reproduction): requires the real Met "
      "Eireann/CEDA/HadCRUT exports; with them supplied the declared targets "
      "are M2 xi in (-0.194,-0.110), lambda increase 28-44%%, 100-year-level "
      "change in [1.2,2.2] degC, A(33C) return period 182y (1942) vs 8.7y "
      "(2020). Criteria 1-9 constitute acceptance.\n");

  std::printf("acceptance: %d/9 passed in %.1f s\n", 9 - failures,
              seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
