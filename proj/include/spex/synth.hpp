#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spex/covariates.hpp"
#include "spex/gpd.hpp"
#include "spex/panel.hpp"
#include "spex/rng.hpp"
#include "spex/variogram.hpp"

namespace spex {

// Ground-truth generator configuration. The marginal truth lives exactly in
// the fitted model class: a Normal body per climate site with a GPD tail
// above its 0.9 quantile, station margins an affine map of the nearest
// climate composite plus a covariate-driven GPD tail.
struct SynthSpec {
  // layout
  int n_stations = 40;
  int grid_nx = 8;
  int grid_ny = 8;
  BBox bbox{-10.5, 51.3, -5.3, 55.5};
  int year0 = 1950;
  int n_years = 30;

  // climate composite fields over the unit square (east, north)
  double mu_c_base = 17.0, mu_c_east = 2.0, mu_c_north = -1.5;
  double sd_c_base = 2.0, sd_c_east = 0.4;
  double sigma_c_base = 1.2, sigma_c_east = 0.8;
  double xi_c = -0.15;

  // station body: q(tau; t,s) = beta0 + beta1 q_c(tau; g(s)) + beta2 M_I(t)
  double beta0 = 1.0, beta1 = 0.9, beta2 = 1.0;

  // station tail: log sigma_o = theta' design(model, log_clim)
  ObsModel tail_model = ObsModel::M1;
  bool tail_log_clim = true;
  std::vector<double> theta{0.2, 1.0, 0.5};
  double xi_o = -0.15;

  // dependence truth (shared by body copula and tail checks)
  VariogramParams vario{1.5, 200.0, 1.0};

  // covariate path (fraction of the record, linear in year)
  double mi_start = -0.3, mi_end = 0.8;
  double mg_start = -0.2, mg_end = 0.6;
  double co2_start = 30.0, co2_end = 70.0;

  // missingness
  double missing_rate = 0.3;
  bool coastal_bias = false;  // less missing near the coast when set

  std::uint64_t seed = 1;
};

struct SynthData {
  SynthSpec spec;
  Panel station;  // masked
  Panel grid;     // complete
  CovariateSeries cov;
  // truth at the climate sites
  std::vector<double> mu_c, sd_c, u_c, sigma_c;
  std::vector<int> nearest_grid;  // station -> grid site
};

SynthData generate(const SynthSpec& spec);

// true composite marginal of one climate site / one station day
double clim_truth_quantile(const SynthData& d, int grid_site, double tau);
double station_truth_quantile(const SynthData& d, int station, double m_i, double tau);
double station_truth_cdf(const SynthData& d, int station, double m_i, double x);

// ingest-format CSVs (station.csv, grid.csv, covariates.csv) plus truth.json
void write_synth(const SynthData& d, const std::string& dir);
SynthSpec load_synth_spec(const std::string& path);
void save_synth_spec(const SynthSpec& spec, const std::string& path);

// i.i.d. GPD excesses, used by the fitter recovery oracles
std::vector<double> sample_gpd(std::size_t n, const GpdParams& p, Rng& rng);

// Panel of i.i.d. r-Pareto fields on Pareto scale (complete mask), the
// Brown-Resnick oracle for the dependence estimators.
Panel br_pareto_panel(const VariogramParams& vario,
                      const std::vector<SiteMeta>& sites, std::size_t n_days,
                      std::uint64_t seed);

// evenly spread synthetic sites inside a box, in projected km
std::vector<SiteMeta> synthetic_sites(int n, const BBox& bbox, std::uint64_t seed,
                                      SiteKind kind = SiteKind::station);
std::vector<SiteMeta> lattice_sites(int nx, int ny, const BBox& bbox,
                                    SiteKind kind = SiteKind::grid);

}  // namespace spex
