#include "spex/synth.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "spex/csv.hpp"
#include "spex/simulate.hpp"
#include "spex/stats.hpp"

namespace spex {

std::vector<SiteMeta> synthetic_sites(int n, const BBox& bbox, std::uint64_t seed,
                                      SiteKind kind) {
  Rng rng(seed, 77);
  std::vector<SiteMeta> sites;
  for (int i = 0; i < n; ++i) {
    SiteMeta s;
    s.id = (kind == SiteKind::grid ? "g" : "s") + std::to_string(i);
    s.lon = rng.uniform(bbox.lon0, bbox.lon1);
    s.lat = rng.uniform(bbox.lat0, bbox.lat1);
    const double edge = std::min({s.lon - bbox.lon0, bbox.lon1 - s.lon,
                                  s.lat - bbox.lat0, bbox.lat1 - s.lat});
    s.coast_dist = std::max(1.0, edge * 111.0);  // rough deg -> km
    s.kind = kind;
    sites.push_back(std::move(s));
  }
  return sites;
}

std::vector<SiteMeta> lattice_sites(int nx, int ny, const BBox& bbox, SiteKind kind) {
  std::vector<SiteMeta> sites;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      SiteMeta s;
      s.id = "g" + std::to_string(iy * nx + ix);
      s.lon = bbox.lon0 + (bbox.lon1 - bbox.lon0) * (ix + 0.5) / nx;
      s.lat = bbox.lat0 + (bbox.lat1 - bbox.lat0) * (iy + 0.5) / ny;
      const double edge = std::min({s.lon - bbox.lon0, bbox.lon1 - s.lon,
                                    s.lat - bbox.lat0, bbox.lat1 - s.lat});
      s.coast_dist = std::max(1.0, edge * 111.0);
      s.kind = kind;
      sites.push_back(std::move(s));
    }
  return sites;
}

std::vector<double> sample_gpd(std::size_t n, const GpdParams& p, Rng& rng) {
  std::vector<double> out(n);
  for (auto& v : out) v = gpd_quantile(rng.uniform(), p);
  return out;
}

namespace {

// Gaussian copula uniforms with correlation 1 - gamma(h)/alpha; one row per
// day, exact U(0,1) margins.
Eigen::MatrixXd copula_uniforms(const std::vector<SiteMeta>& sites,
                                const VariogramParams& vario, std::size_t n_days,
                                std::uint64_t seed, std::uint64_t stream0) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  const Projection proj = panel_projection(sites);
  const auto xy = project_sites(sites, proj);
  Eigen::MatrixXd corr(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      corr(i, j) = 1.0 - matern_variogram((xy.row(i) - xy.row(j)).norm(), vario) /
                             vario.alpha;
  Eigen::LLT<Eigen::MatrixXd> llt(corr + 1e-10 * Eigen::MatrixXd::Identity(n, n));
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("copula_uniforms: correlation not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();

  Eigen::MatrixXd u(static_cast<Eigen::Index>(n_days), n);
  for (std::size_t t = 0; t < n_days; ++t) {
    Rng rng(seed, stream0 + t);
    Eigen::VectorXd z(n);
    for (Eigen::Index k = 0; k < n; ++k) z(k) = rng.normal();
    const Eigen::VectorXd g = L * z;
    for (Eigen::Index s = 0; s < n; ++s)
      u(static_cast<Eigen::Index>(t), s) = norm_cdf(g(s));
  }
  return u;
}

double unit_east(const BBox& b, double lon) { return (lon - b.lon0) / (b.lon1 - b.lon0); }
double unit_north(const BBox& b, double lat) { return (lat - b.lat0) / (b.lat1 - b.lat0); }

}  // namespace

double clim_truth_quantile(const SynthData& d, int g, double tau) {
  const auto gs = static_cast<std::size_t>(g);
  if (tau <= 0.9)
    return d.mu_c[gs] + d.sd_c[gs] * norm_quantile(tau);
  return d.u_c[gs] + gpd_quantile((tau - 0.9) / 0.1, {d.sigma_c[gs], d.spec.xi_c});
}

namespace {

double clim_truth_cdf(const SynthData& d, int g, double x) {
  const auto gs = static_cast<std::size_t>(g);
  if (x <= d.u_c[gs]) return norm_cdf((x - d.mu_c[gs]) / d.sd_c[gs]);
  return 0.9 + 0.1 * gpd_cdf(x - d.u_c[gs], {d.sigma_c[gs], d.spec.xi_c});
}

double station_sigma_o(const SynthData& d, int station, double m_i) {
  const auto g = d.nearest_grid[static_cast<std::size_t>(station)];
  const auto row = obs_design_row(d.spec.tail_model, d.spec.tail_log_clim,
                                  d.sigma_c[static_cast<std::size_t>(g)],
                                  d.station.sites[static_cast<std::size_t>(station)].coast_dist,
                                  m_i);
  double ls = 0.0;
  for (std::size_t j = 0; j < d.spec.theta.size(); ++j) ls += d.spec.theta[j] * row[j];
  return std::exp(ls);
}

// station threshold: beta0 + beta1 u_c + beta2 * mid-record M_I, fixed in time
double station_u(const SynthData& d, int station) {
  const auto g = d.nearest_grid[static_cast<std::size_t>(station)];
  const double mi_mid = 0.5 * (d.spec.mi_start + d.spec.mi_end);
  return d.spec.beta0 + d.spec.beta1 * d.u_c[static_cast<std::size_t>(g)] +
         d.spec.beta2 * mi_mid;
}

double station_tau_u(const SynthData& d, int station, double m_i) {
  const auto g = d.nearest_grid[static_cast<std::size_t>(station)];
  const double u = station_u(d, station);
  const double body_arg = (u - d.spec.beta0 - d.spec.beta2 * m_i) / d.spec.beta1;
  return clim_truth_cdf(d, g, body_arg);
}

}  // namespace

double station_truth_quantile(const SynthData& d, int station, double m_i, double tau) {
  const auto g = d.nearest_grid[static_cast<std::size_t>(station)];
  const double tau_u = station_tau_u(d, station, m_i);
  if (tau <= tau_u)
    return d.spec.beta0 + d.spec.beta1 * clim_truth_quantile(d, g, tau) +
           d.spec.beta2 * m_i;
  return station_u(d, station) +
         gpd_quantile((tau - tau_u) / (1.0 - tau_u),
                      {station_sigma_o(d, station, m_i), d.spec.xi_o});
}

double station_truth_cdf(const SynthData& d, int station, double m_i, double x) {
  const auto g = d.nearest_grid[static_cast<std::size_t>(station)];
  const double u = station_u(d, station);
  if (x <= u) {
    const double body_arg = (x - d.spec.beta0 - d.spec.beta2 * m_i) / d.spec.beta1;
    return clim_truth_cdf(d, g, body_arg);
  }
  const double tau_u = station_tau_u(d, station, m_i);
  return tau_u + (1.0 - tau_u) * gpd_cdf(x - u, {station_sigma_o(d, station, m_i),
                                                 d.spec.xi_o});
}

SynthData generate(const SynthSpec& spec) {
  SynthData d;
  d.spec = spec;
  d.station.sites = synthetic_sites(spec.n_stations, spec.bbox, spec.seed);
  d.grid.sites = lattice_sites(spec.grid_nx, spec.grid_ny, spec.bbox);
  d.nearest_grid = nearest_sites(d.station.sites, d.grid.sites);

  // climate truth fields
  for (const auto& s : d.grid.sites) {
    const double e = unit_east(spec.bbox, s.lon), n = unit_north(spec.bbox, s.lat);
    d.mu_c.push_back(spec.mu_c_base + spec.mu_c_east * e + spec.mu_c_north * n);
    d.sd_c.push_back(spec.sd_c_base + spec.sd_c_east * e);
    d.sigma_c.push_back(spec.sigma_c_base + spec.sigma_c_east * e);
  }
  for (std::size_t g = 0; g < d.grid.sites.size(); ++g)
    d.u_c.push_back(d.mu_c[g] + d.sd_c[g] * norm_quantile(0.9));

  // times: all JJA days of every year
  std::vector<DayIndex> times;
  for (int y = 0; y < spec.n_years; ++y)
    for (int dos = 0; dos < 92; ++dos)
      times.push_back(DayIndex{spec.year0 + y, dos});
  d.station.times = times;
  d.grid.times = times;
  const auto nt = static_cast<Eigen::Index>(times.size());

  // covariates, linear in record fraction
  for (const auto& t : times) {
    const double f = spec.n_years > 1
                         ? static_cast<double>(t.year - spec.year0) / (spec.n_years - 1)
                         : 0.0;
    CovariateRow row;
    row.m_i = spec.mi_start + (spec.mi_end - spec.mi_start) * f;
    row.m_g = spec.mg_start + (spec.mg_end - spec.mg_start) * f;
    row.co2 = spec.co2_start + (spec.co2_end - spec.co2_start) * f;
    d.cov.insert(t, row);
  }

  // independent copulas: climate weather does not correlate with stations
  const Eigen::MatrixXd u_grid =
      copula_uniforms(d.grid.sites, spec.vario, times.size(), spec.seed, 1'000'000);
  const Eigen::MatrixXd u_st =
      copula_uniforms(d.station.sites, spec.vario, times.size(), spec.seed, 2'000'000);

  const auto ng = d.grid.n_sites();
  d.grid.values.resize(nt, ng);
  d.grid.observed = Mask::Ones(nt, ng);
  for (Eigen::Index t = 0; t < nt; ++t)
    for (Eigen::Index g = 0; g < ng; ++g)
      d.grid.values(t, g) = clim_truth_quantile(d, static_cast<int>(g), u_grid(t, g));

  const auto nst = d.station.n_sites();
  d.station.values.resize(nt, nst);
  d.station.observed = Mask::Zero(nt, nst);
  Rng miss_rng(spec.seed, 3'000'000);
  for (Eigen::Index t = 0; t < nt; ++t) {
    const double m_i = d.cov.at(times[static_cast<std::size_t>(t)]).m_i;
    int n_obs = 0;
    for (Eigen::Index s = 0; s < nst; ++s) {
      double rate = spec.missing_rate;
      if (spec.coastal_bias) {
        // coastal stations report more often, mirroring the archive
        const double c = d.station.sites[static_cast<std::size_t>(s)].coast_dist;
        rate = std::clamp(spec.missing_rate * (0.5 + c / 150.0), 0.0, 0.95);
      }
      if (miss_rng.uniform() < rate) {
        d.station.values(t, s) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      d.station.values(t, s) =
          station_truth_quantile(d, static_cast<int>(s), m_i, u_st(t, s));
      d.station.observed(t, s) = 1;
      ++n_obs;
    }
    if (n_obs == 0) {  // keep every retained row observed somewhere
      const auto s = static_cast<Eigen::Index>(miss_rng.below(static_cast<std::uint64_t>(nst)));
      d.station.values(t, s) =
          station_truth_quantile(d, static_cast<int>(s), m_i, u_st(t, s));
      d.station.observed(t, s) = 1;
    }
  }
  d.station.check_mask_consistency("synth station");
  return d;
}

Panel br_pareto_panel(const VariogramParams& vario,
                      const std::vector<SiteMeta>& sites, std::size_t n_days,
                      std::uint64_t seed) {
  SimOptions opts;
  opts.m = n_days;
  opts.L = 1;
  opts.seed = seed;
  SimBatch batch = simulate_profiles(vario, sites, opts);
  Panel p;
  p.sites = sites;
  p.scale = ValueScale::pareto;
  for (std::size_t t = 0; t < n_days; ++t)
    p.times.push_back(DayIndex{2000 + static_cast<int>(t / 92), static_cast<int>(t % 92)});
  p.values.resize(static_cast<Eigen::Index>(n_days), batch.profiles.cols());
  p.observed = Mask::Ones(static_cast<Eigen::Index>(n_days), batch.profiles.cols());
  for (Eigen::Index i = 0; i < p.values.rows(); ++i)
    p.values.row(i) = batch.profiles.row(i) * batch.risks[static_cast<std::size_t>(i)];
  return p;
}

namespace {

int doy_of(DayIndex t) {
  const bool leap = t.year % 4 == 0 && (t.year % 100 != 0 || t.year % 400 == 0);
  return (leap ? 153 : 152) + t.day_of_summer;
}

void write_ingest_csv(const Panel& p, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index s = 0; s < p.n_sites(); ++s) {
    const auto& m = p.sites[static_cast<std::size_t>(s)];
    for (Eigen::Index t = 0; t < p.n_times(); ++t) {
      rows.push_back({m.id, fmt_g9(m.lon), fmt_g9(m.lat), fmt_g9(m.coast_dist),
                      std::to_string(p.times[static_cast<std::size_t>(t)].year),
                      std::to_string(doy_of(p.times[static_cast<std::size_t>(t)])),
                      p.observed(t, s) ? fmt_g9(p.values(t, s)) : ""});
    }
  }
  write_csv(path, {"site_id", "lon", "lat", "coast_dist", "year", "day", "value"},
            rows);
}

}  // namespace

void write_synth(const SynthData& d, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_ingest_csv(d.station, dir + "/station.csv");
  write_ingest_csv(d.grid, dir + "/grid.csv");
  save_covariates(d.cov, d.station.times, dir + "/covariates.csv");

  nlohmann::json j;
  const auto& s = d.spec;
  j["n_stations"] = s.n_stations;
  j["grid_nx"] = s.grid_nx;
  j["grid_ny"] = s.grid_ny;
  j["bbox"] = {s.bbox.lon0, s.bbox.lat0, s.bbox.lon1, s.bbox.lat1};
  j["year0"] = s.year0;
  j["n_years"] = s.n_years;
  j["mu_c"] = {{"base", s.mu_c_base}, {"east", s.mu_c_east}, {"north", s.mu_c_north}};
  j["sd_c"] = {{"base", s.sd_c_base}, {"east", s.sd_c_east}};
  j["sigma_c"] = {{"base", s.sigma_c_base}, {"east", s.sigma_c_east}};
  j["xi_c"] = s.xi_c;
  j["beta"] = {s.beta0, s.beta1, s.beta2};
  j["tail_model"] = to_string(s.tail_model);
  j["tail_log_clim"] = s.tail_log_clim;
  j["theta"] = s.theta;
  j["xi_o"] = s.xi_o;
  j["vario"] = {{"alpha", s.vario.alpha}, {"phi", s.vario.phi}, {"nu", s.vario.nu}};
  j["mi"] = {s.mi_start, s.mi_end};
  j["mg"] = {s.mg_start, s.mg_end};
  j["co2"] = {s.co2_start, s.co2_end};
  j["missing_rate"] = s.missing_rate;
  j["coastal_bias"] = s.coastal_bias;
  j["seed"] = s.seed;
  std::ofstream out(dir + "/truth.json");
  out << j.dump(2) << "\n";
}

SynthSpec load_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  SynthSpec s;
  s.n_stations = j.value("n_stations", s.n_stations);
  s.grid_nx = j.value("grid_nx", s.grid_nx);
  s.grid_ny = j.value("grid_ny", s.grid_ny);
  if (j.contains("bbox")) {
    auto b = j["bbox"].get<std::vector<double>>();
    s.bbox = {b[0], b[1], b[2], b[3]};
  }
  s.year0 = j.value("year0", s.year0);
  s.n_years = j.value("n_years", s.n_years);
  if (j.contains("mu_c")) {
    s.mu_c_base = j["mu_c"].value("base", s.mu_c_base);
    s.mu_c_east = j["mu_c"].value("east", s.mu_c_east);
    s.mu_c_north = j["mu_c"].value("north", s.mu_c_north);
  }
  if (j.contains("sd_c")) {
    s.sd_c_base = j["sd_c"].value("base", s.sd_c_base);
    s.sd_c_east = j["sd_c"].value("east", s.sd_c_east);
  }
  if (j.contains("sigma_c")) {
    s.sigma_c_base = j["sigma_c"].value("base", s.sigma_c_base);
    s.sigma_c_east = j["sigma_c"].value("east", s.sigma_c_east);
  }
  s.xi_c = j.value("xi_c", s.xi_c);
  if (j.contains("beta")) {
    auto b = j["beta"].get<std::vector<double>>();
    s.beta0 = b[0];
    s.beta1 = b[1];
    s.beta2 = b[2];
  }
  if (j.contains("tail_model"))
    s.tail_model = obs_model_from_string(j["tail_model"].get<std::string>());
  s.tail_log_clim = j.value("tail_log_clim", s.tail_log_clim);
  if (j.contains("theta")) s.theta = j["theta"].get<std::vector<double>>();
  s.xi_o = j.value("xi_o", s.xi_o);
  if (j.contains("vario")) {
    s.vario.alpha = j["vario"].value("alpha", s.vario.alpha);
    s.vario.phi = j["vario"].value("phi", s.vario.phi);
    s.vario.nu = j["vario"].value("nu", s.vario.nu);
  }
  if (j.contains("mi")) {
    auto v = j["mi"].get<std::vector<double>>();
    s.mi_start = v[0];
    s.mi_end = v[1];
  }
  if (j.contains("mg")) {
    auto v = j["mg"].get<std::vector<double>>();
    s.mg_start = v[0];
    s.mg_end = v[1];
  }
  if (j.contains("co2")) {
    auto v = j["co2"].get<std::vector<double>>();
    s.co2_start = v[0];
    s.co2_end = v[1];
  }
  s.missing_rate = j.value("missing_rate", s.missing_rate);
  s.coastal_bias = j.value("coastal_bias", s.coastal_bias);
  s.seed = j.value("seed", s.seed);
  return s;
}

void save_synth_spec(const SynthSpec& spec, const std::string& path) {
  SynthData d;
  d.spec = spec;
  // reuse the truth.json writer for the spec alone
  nlohmann::json j;
  std::ofstream out(path);
  const auto& s = spec;
  j["n_stations"] = s.n_stations;
  j["grid_nx"] = s.grid_nx;
  j["grid_ny"] = s.grid_ny;
  j["bbox"] = {s.bbox.lon0, s.bbox.lat0, s.bbox.lon1, s.bbox.lat1};
  j["year0"] = s.year0;
  j["n_years"] = s.n_years;
  j["xi_c"] = s.xi_c;
  j["beta"] = {s.beta0, s.beta1, s.beta2};
  j["tail_model"] = to_string(s.tail_model);
  j["tail_log_clim"] = s.tail_log_clim;
  j["theta"] = s.theta;
  j["xi_o"] = s.xi_o;
  j["vario"] = {{"alpha", s.vario.alpha}, {"phi", s.vario.phi}, {"nu", s.vario.nu}};
  j["mi"] = {s.mi_start, s.mi_end};
  j["mg"] = {s.mg_start, s.mg_end};
  j["co2"] = {s.co2_start, s.co2_end};
  j["missing_rate"] = s.missing_rate;
  j["coastal_bias"] = s.coastal_bias;
  j["seed"] = s.seed;
  out << j.dump(2) << "\n";
}

}  // namespace spex
