#include "spex/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "spex/body.hpp"
#include "spex/chi.hpp"
#include "spex/csv.hpp"
#include "spex/depfit.hpp"
#include "spex/gpd.hpp"
#include "spex/parallel.hpp"
#include "spex/resample.hpp"
#include "spex/risk.hpp"
#include "spex/simulate.hpp"
#include "spex/stats.hpp"
#include "spex/synth.hpp"
#include "spex/transform.hpp"

#include <limits>
#include <map>
#include <memory>

namespace fs = std::filesystem;

namespace spex {

namespace {

std::map<std::string, std::string> default_config() {
  std::string taus;
  for (double t : default_tau_grid()) taus += (taus.empty() ? "" : ",") + fmt_g9(t);
  return {
      {"paths.station", ""},
      {"paths.grid", ""},
      {"paths.covariates", ""},
      {"paths.outdir", "out"},
      {"ingest.bbox", ""},
      {"datastore.anchor_sites", ""},
      {"synth.spec", ""},
      {"body.taus", taus},
      {"body.model", "clim+mi"},
      {"tail.model", "M2"},
      {"tail.clim_scale_link", "table"},
      {"tail.clim_fit", ""},
      {"tail.min_excesses", "30"},
      {"dep.p_fit", "0.9"},
      {"dep.p_grid", "0.8,0.85,0.9"},
      {"dep.bins", "30"},
      {"dep.boot", "500"},
      {"dep.min_observed", "10"},
      {"dep.min_coobserved", "50"},
      {"dep.risk_level", "0.8"},
      {"dep.time_covariate", "false"},
      {"dep.seed", "4"},
      {"sim.m", "25000"},
      {"sim.L", "300"},
      {"sim.seed", "1"},
      {"sim.sites", "stations"},
      {"sim.anchor", "mixture"},
      {"sim.reference_site", ""},
      {"risk.T", "26:34:0.5"},
      {"risk.years", "1942,2020"},
      {"risk.h_grid", "50,100,150,200,250,300"},
      {"risk.bin_width_km", "20"},
      {"risk.batches", "50"},
      {"levels.period", "100"},
      {"levels.years", "1942,2020"},
      {"resample.block", "5"},
      {"resample.n", "500"},
      {"resample.seed", "2"},
      {"cv.kind", "st"},
      {"cv.target", "tail"},
      {"cv.models", ""},
      {"cv.seed", "3"},
      {"cv.tail_taus", "0.91,0.93,0.95,0.97,0.99"},
      {"threads", "0"},
      {"seed", "1"},
  };
}

}  // namespace

PipelineConfig::PipelineConfig() : values_(default_config()) {}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  PipelineConfig cfg;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (!values_.count(key))
    throw std::runtime_error("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& PipelineConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw std::runtime_error("unknown config key '" + key + "'");
  return it->second;
}

double PipelineConfig::num(const std::string& key) const {
  return parse_double(get(key), "config " + key, 0);
}

long PipelineConfig::integer(const std::string& key) const {
  return parse_long(get(key), "config " + key, 0);
}

bool PipelineConfig::flag(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("config " + key + ": expected boolean, got '" + v + "'");
}

std::vector<std::string> PipelineConfig::str_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> PipelineConfig::num_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : str_list(key)) out.push_back(parse_double(s, "config " + key, 0));
  return out;
}

std::vector<double> PipelineConfig::num_range(const std::string& key) const {
  const auto& v = get(key);
  if (v.find(':') == std::string::npos) return num_list(key);
  std::vector<double> parts;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ':'))
    parts.push_back(parse_double(item, "config " + key, 0));
  if (parts.size() != 3 || parts[2] <= 0.0)
    throw std::runtime_error("config " + key + ": expected lo:hi:step");
  std::vector<double> out;
  for (double x = parts[0]; x <= parts[1] + 1e-9; x += parts[2]) out.push_back(x);
  return out;
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::resolved() const {
  return {values_.begin(), values_.end()};
}

std::string PipelineConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : resolved()) {
    mix(k);
    mix("=");
    mix(v);
    mix("\n");
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> PipelineConfig::validate() const {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  try {
    auto taus = num_list("body.taus");
    check(taus.size() >= 2, "body.taus: need at least two levels");
    for (std::size_t i = 0; i + 1 < taus.size(); ++i)
      check(taus[i] < taus[i + 1], "body.taus: must increase strictly");
    if (!taus.empty())
      check(taus.front() >= 0.01 && taus.back() <= 0.99,
            "body.taus: levels must lie in [0.01, 0.99]");
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  try {
    body_spec_from_string(get("body.model"));
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  try {
    obs_model_from_string(get("tail.model"));
    clim_link_from_string(get("tail.clim_scale_link"));
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  try {
    const double p = num("dep.p_fit");
    check(p > 0.5 && p < 1.0, "dep.p_fit: must lie in (0.5, 1)");
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  try {
    check(integer("sim.m") >= 1, "sim.m: must be >= 1");
    check(integer("sim.L") >= 1, "sim.L: must be >= 1");
    const auto& a = get("sim.anchor");
    check(a == "mixture" || a == "fixed", "sim.anchor: mixture or fixed");
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  try {
    const long block = integer("resample.block");
    check(block >= 1 && block <= 92, "resample.block: must lie in [1, 92]");
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  try {
    const auto& k = get("cv.kind");
    check(k == "90" || k == "st", "cv.kind: 90 or st");
    const auto& t = get("cv.target");
    check(t == "body" || t == "tail", "cv.target: body or tail");
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  return errors;
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::synth: return "synth";
    case Stage::ingest: return "ingest";
    case Stage::fit_body: return "fit-body";
    case Stage::fit_tail: return "fit-tail";
    case Stage::transform: return "transform";
    case Stage::chi: return "chi";
    case Stage::fit_dep: return "fit-dep";
    case Stage::simulate: return "simulate";
    case Stage::risk: return "risk";
    case Stage::return_levels: return "return-levels";
    case Stage::bootstrap: return "bootstrap";
    case Stage::cv: return "cv";
    case Stage::report: return "report";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (Stage st : all_stages())
    if (to_string(st) == s) return st;
  throw std::runtime_error("unknown stage '" + s + "'");
}

std::vector<Stage> all_stages() {
  return {Stage::synth,    Stage::ingest,   Stage::fit_body, Stage::fit_tail,
          Stage::transform, Stage::chi,      Stage::fit_dep,  Stage::simulate,
          Stage::risk,     Stage::return_levels, Stage::bootstrap, Stage::cv,
          Stage::report};
}

namespace {

void require_artifact(const std::string& path, const std::string& producer) {
  if (!fs::exists(path))
    throw std::runtime_error("missing artifact " + path + "; run stage '" +
                             producer + "' first");
}

void write_manifest(const PipelineConfig& cfg, Stage stage,
                    const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["stage"] = to_string(stage);
  j["version"] = kVersion;
  j["config_hash"] = cfg.hash();
  nlohmann::json conf = nlohmann::json::object();
  for (const auto& [k, v] : cfg.resolved()) conf[k] = v;
  j["config"] = std::move(conf);
  j["outputs"] = outputs;
  j["seeds"] = {{"seed", cfg.get("seed")},
                {"sim.seed", cfg.get("sim.seed")},
                {"dep.seed", cfg.get("dep.seed")},
                {"resample.seed", cfg.get("resample.seed")},
                {"cv.seed", cfg.get("cv.seed")}};
  const std::string path =
      cfg.outdir() + "/manifest_" + to_string(stage) + ".json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::optional<BBox> bbox_of(const PipelineConfig& cfg) {
  if (cfg.get("ingest.bbox").empty()) return std::nullopt;
  const auto v = cfg.num_list("ingest.bbox");
  if (v.size() != 4)
    throw std::runtime_error("ingest.bbox: expected lon0,lat0,lon1,lat1");
  return BBox{v[0], v[1], v[2], v[3]};
}

std::string data_path(const PipelineConfig& cfg, const std::string& key,
                      const std::string& synth_name) {
  const auto& p = cfg.get(key);
  if (!p.empty()) return p;
  return cfg.outdir() + "/data/" + synth_name;
}

// ---- stage bodies --------------------------------------------------------

void stage_synth(const PipelineConfig& cfg) {
  SynthSpec spec;
  if (!cfg.get("synth.spec").empty()) spec = load_synth_spec(cfg.get("synth.spec"));
  SynthData d = generate(spec);
  write_synth(d, cfg.outdir() + "/data");
  write_manifest(cfg, Stage::synth,
                 {"data/station.csv", "data/grid.csv", "data/covariates.csv",
                  "data/truth.json"});
}

void stage_ingest(const PipelineConfig& cfg) {
  const auto bbox = bbox_of(cfg);
  const std::string st_path = data_path(cfg, "paths.station", "station.csv");
  const std::string gr_path = data_path(cfg, "paths.grid", "grid.csv");
  const std::string cov_path = data_path(cfg, "paths.covariates", "covariates.csv");
  require_artifact(st_path, "synth");
  require_artifact(gr_path, "synth");
  require_artifact(cov_path, "synth");

  Panel station = summer_filter(load_panel(st_path, PanelSchema::station, bbox));
  Panel grid = summer_filter(load_panel(gr_path, PanelSchema::grid, bbox));
  if (!grid.is_complete())
    throw std::runtime_error("ingest: grid panel has missing entries");
  CovariateSeries cov = load_covariates(cov_path);
  if (!cov.covers(station.times))
    throw std::runtime_error("ingest: covariates do not cover the station record");
  station.check_mask_consistency("ingest station");

  save_panel(station, cfg.outdir() + "/station_panel");
  save_panel(grid, cfg.outdir() + "/grid_panel");
  save_covariates(cov, station.times, cfg.outdir() + "/covariates.csv");
  write_manifest(cfg, Stage::ingest,
                 {"station_panel", "grid_panel", "covariates.csv"});
}

struct LoadedData {
  Panel station;
  Panel grid;
  CovariateSeries cov;
};

LoadedData load_ingested(const PipelineConfig& cfg) {
  require_artifact(cfg.outdir() + "/station_panel/meta.csv", "ingest");
  require_artifact(cfg.outdir() + "/grid_panel/meta.csv", "ingest");
  require_artifact(cfg.outdir() + "/covariates.csv", "ingest");
  LoadedData d;
  d.station = load_panel_dir(cfg.outdir() + "/station_panel");
  d.grid = load_panel_dir(cfg.outdir() + "/grid_panel");
  d.cov = load_covariates(cfg.outdir() + "/covariates.csv");
  return d;
}

void stage_fit_body(const PipelineConfig& cfg) {
  LoadedData d = load_ingested(cfg);
  const auto taus = cfg.num_list("body.taus");
  const auto spec = body_spec_from_string(cfg.get("body.model"));
  const SpatialCovariates sc = map_spatial_covariates(d.station.sites, d.grid, taus);
  BodyModel body = fit_body(d.station, sc.q_c, d.cov, spec, taus);
  save_body(body, cfg.outdir() + "/body.json");
  write_manifest(cfg, Stage::fit_body, {"body.json"});
}

void stage_fit_tail(const PipelineConfig& cfg) {
  LoadedData d = load_ingested(cfg);
  require_artifact(cfg.outdir() + "/body.json", "fit-body");

  // climate tail: per-site 0.9 thresholds, alternating shared-shape fit;
  // or a climate fit reused from a previous tail artifact
  const Eigen::MatrixXd u_c_grid = empirical_quantiles(d.grid, {0.9});
  ClimTailFit clim;
  if (!cfg.get("tail.clim_fit").empty()) {
    TailArtifact prior = load_tail(cfg.get("tail.clim_fit"));
    if (prior.grid_site_ids.size() != static_cast<std::size_t>(d.grid.n_sites()))
      throw std::runtime_error("tail.clim_fit: grid site count mismatch");
    for (Eigen::Index s = 0; s < d.grid.n_sites(); ++s)
      if (prior.grid_site_ids[static_cast<std::size_t>(s)] !=
          d.grid.sites[static_cast<std::size_t>(s)].id)
        throw std::runtime_error("tail.clim_fit: grid site ids do not match");
    clim = prior.clim;
  } else {
    std::vector<std::vector<double>> excesses(static_cast<std::size_t>(d.grid.n_sites()));
    for (Eigen::Index s = 0; s < d.grid.n_sites(); ++s)
      for (Eigen::Index t = 0; t < d.grid.n_times(); ++t) {
        const double y = d.grid.values(t, s) - u_c_grid(s, 0);
        if (y > 0.0) excesses[static_cast<std::size_t>(s)].push_back(y);
      }
    GpdFitOptions gopts;
    gopts.min_excesses = static_cast<std::size_t>(cfg.integer("tail.min_excesses"));
    clim = fit_clim_gpd(excesses, gopts);
  }

  // threshold field from the station data on mapped u_c
  const auto nearest = nearest_sites(d.station.sites, d.grid.sites);
  std::vector<double> u_c_station;
  for (auto g : nearest) u_c_station.push_back(u_c_grid(g, 0));
  ThresholdField thr = fit_threshold(d.station, u_c_station);

  // observational excesses with covariate design
  const auto model = obs_model_from_string(cfg.get("tail.model"));
  const bool log_clim =
      resolve_log_clim(model, clim_link_from_string(cfg.get("tail.clim_scale_link")));
  std::vector<double> y;
  std::vector<std::vector<double>> rows;
  std::vector<double> station_u(static_cast<std::size_t>(d.station.n_sites()));
  for (Eigen::Index s = 0; s < d.station.n_sites(); ++s)
    station_u[static_cast<std::size_t>(s)] =
        thr.u(u_c_station[static_cast<std::size_t>(s)]);
  for (Eigen::Index t = 0; t < d.station.n_times(); ++t) {
    const double m_i = d.cov.at(d.station.times[static_cast<std::size_t>(t)]).m_i;
    for (Eigen::Index s = 0; s < d.station.n_sites(); ++s) {
      if (!d.station.observed(t, s)) continue;
      const double excess =
          d.station.values(t, s) - station_u[static_cast<std::size_t>(s)];
      if (excess <= 0.0) continue;
      y.push_back(excess);
      rows.push_back(obs_design_row(
          model, log_clim,
          clim.sigma[static_cast<std::size_t>(nearest[static_cast<std::size_t>(s)])],
          d.station.sites[static_cast<std::size_t>(s)].coast_dist, m_i));
    }
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.empty() ? 1 : rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  ObsFitOptions oopts;
  oopts.min_excesses = static_cast<std::size_t>(cfg.integer("tail.min_excesses"));
  ObsTailFit obs = fit_obs_gpd(X, y, model, log_clim, oopts);

  TailArtifact art;
  art.threshold = thr;
  art.clim = clim;
  art.obs = obs;
  for (const auto& s : d.grid.sites) art.grid_site_ids.push_back(s.id);
  art.station_u = station_u;
  for (const auto& s : d.station.sites) art.station_ids.push_back(s.id);
  save_tail(art, cfg.outdir() + "/tail.json");
  write_manifest(cfg, Stage::fit_tail, {"tail.json"});
}

}  // namespace

MarginalModel assemble_marginal(const PipelineConfig& cfg,
                                const std::string& site_set) {
  require_artifact(cfg.outdir() + "/body.json", "fit-body");
  require_artifact(cfg.outdir() + "/tail.json", "fit-tail");
  Panel station = load_panel_dir(cfg.outdir() + "/station_panel");
  Panel grid = load_panel_dir(cfg.outdir() + "/grid_panel");
  CovariateSeries cov = load_covariates(cfg.outdir() + "/covariates.csv");

  MarginalModel m;
  m.body = load_body(cfg.outdir() + "/body.json");
  TailArtifact tail = load_tail(cfg.outdir() + "/tail.json");
  m.threshold = tail.threshold;
  m.clim = tail.clim;
  m.obs = tail.obs;
  m.sites = site_set == "grid" ? grid.sites : station.sites;
  m.sc = map_spatial_covariates(m.sites, grid, m.body.tau_grid, &m.clim);
  m.cov = std::move(cov);
  return m;
}

namespace {

void stage_transform(const PipelineConfig& cfg) {
  MarginalModel model = assemble_marginal(cfg, "stations");
  Panel station = load_panel_dir(cfg.outdir() + "/station_panel");
  Panel uniform = to_uniform(station, model);
  Panel pareto = uniform_to_pareto(uniform);
  save_panel(uniform, cfg.outdir() + "/uniform_panel");
  save_panel(pareto, cfg.outdir() + "/pareto_panel");
  write_manifest(cfg, Stage::transform, {"uniform_panel", "pareto_panel"});
}

Panel load_pareto(const PipelineConfig& cfg) {
  require_artifact(cfg.outdir() + "/pareto_panel/meta.csv", "transform");
  return load_panel_dir(cfg.outdir() + "/pareto_panel");
}

void stage_chi(const PipelineConfig& cfg) {
  Panel pareto = load_pareto(cfg);
  ChiOptions opts;
  opts.n_bins = static_cast<int>(cfg.integer("dep.bins"));
  opts.n_boot = static_cast<int>(cfg.integer("dep.boot"));
  opts.seed = static_cast<std::uint64_t>(cfg.integer("dep.seed"));
  opts.min_coobserved = cfg.integer("dep.min_coobserved");
  std::vector<std::string> outputs;
  for (double p : cfg.num_list("dep.p_grid")) {
    ChiCloud cloud = chi_empirical(pareto, p, opts);
    const std::string tag = fmt_g9(p);
    save_chi(cloud, cfg.outdir() + "/chi_pairs_p" + tag + ".csv",
             cfg.outdir() + "/chi_bins_p" + tag + ".csv");
    outputs.push_back("chi_pairs_p" + tag + ".csv");
    outputs.push_back("chi_bins_p" + tag + ".csv");
  }
  write_manifest(cfg, Stage::chi, outputs);
}

void stage_fit_dep(const PipelineConfig& cfg) {
  Panel pareto = load_pareto(cfg);
  DepFitOptions opts;
  opts.n_bins = static_cast<int>(cfg.integer("dep.bins"));
  opts.n_boot = static_cast<int>(cfg.integer("dep.boot"));
  opts.seed = static_cast<std::uint64_t>(cfg.integer("dep.seed"));
  opts.min_observed = static_cast<int>(cfg.integer("dep.min_observed"));
  opts.risk_level = cfg.num("dep.risk_level");
  std::optional<CovariateSeries> cov;
  if (cfg.flag("dep.time_covariate"))
    cov = load_covariates(cfg.outdir() + "/covariates.csv");
  DependenceModel model = fit_dependence(pareto, cfg.num("dep.p_fit"), opts,
                                         cov ? &*cov : nullptr);
  save_dependence(model, cfg.outdir() + "/dep.json");
  write_manifest(cfg, Stage::fit_dep, {"dep.json"});
}

std::vector<SiteMeta> sim_sites(const PipelineConfig& cfg) {
  const auto& which = cfg.get("sim.sites");
  Panel p = load_panel_dir(cfg.outdir() +
                           (which == "grid" ? "/grid_panel" : "/station_panel"));
  return p.sites;
}

void stage_simulate(const PipelineConfig& cfg) {
  require_artifact(cfg.outdir() + "/dep.json", "fit-dep");
  DependenceModel dep = load_dependence(cfg.outdir() + "/dep.json");
  SimOptions opts;
  opts.m = static_cast<std::size_t>(cfg.integer("sim.m"));
  opts.L = static_cast<std::size_t>(cfg.integer("sim.L"));
  opts.seed = static_cast<std::uint64_t>(cfg.integer("sim.seed"));
  opts.anchor = cfg.get("sim.anchor") == "fixed" ? AnchorMode::fixed
                                                 : AnchorMode::mixture;
  auto sites = sim_sites(cfg);
  if (!cfg.get("sim.reference_site").empty()) {
    for (std::size_t i = 0; i < sites.size(); ++i)
      if (sites[i].id == cfg.get("sim.reference_site"))
        opts.reference_site = static_cast<int>(i);
    if (opts.reference_site < 0)
      throw std::runtime_error("sim.reference_site: unknown site id '" +
                               cfg.get("sim.reference_site") + "'");
  }
  SimBatch batch = simulate_profiles(dep.vario, sites, opts);
  save_sim_batch(batch, cfg.outdir() + "/sim");
  write_manifest(cfg, Stage::simulate,
                 {"sim/profiles.csv", "sim/risks.csv", "sim/aux_risks.csv",
                  "sim/sim.json"});
}

void stage_risk(const PipelineConfig& cfg) {
  require_artifact(cfg.outdir() + "/dep.json", "fit-dep");
  require_artifact(cfg.outdir() + "/sim/sim.json", "simulate");
  DependenceModel dep = load_dependence(cfg.outdir() + "/dep.json");
  SimBatch batch = load_sim_batch(cfg.outdir() + "/sim");
  MarginalModel model = assemble_marginal(cfg, cfg.get("sim.sites"));

  EventOptions eopts;
  eopts.n_batches = static_cast<int>(cfg.integer("risk.batches"));
  const auto t_grid = cfg.num_range("risk.T");
  const auto years = cfg.num_list("risk.years");
  const auto h_grid = cfg.num_list("risk.h_grid");
  const double bin_w = cfg.num("risk.bin_width_km");

  std::vector<std::vector<std::string>> risk_rows, chi_rows;
  for (double year_d : years) {
    const int year = static_cast<int>(year_d);
    const MarginalSlice slice = model.at_year(year);
    double u_max = 0.0;
    for (const auto& sm : slice.site) u_max = std::max(u_max, sm.u);
    for (double T : t_grid) {
      if (T < u_max) continue;  // marginal-extremes restriction
      const auto tp = threshold_on_pareto(slice, T);
      const EventEstimate est = estimate_event(batch, tp, dep.v_r, eopts);
      risk_rows.push_back({fmt_g9(T), std::to_string(year), fmt_g9(est.prob),
                           fmt_g9(est.return_period_years), fmt_g9(est.se),
                           fmt_g9(est.coverage), fmt_g9(est.coverage_given_event),
                           fmt_g9(est.coverage_se), fmt_g9(est.b_scaling),
                           est.unscaled_fallback ? "1" : "0",
                           std::to_string(est.hits)});
      for (const auto& c : chi_data_scale(batch, tp, dep.v_r, h_grid, bin_w))
        chi_rows.push_back({fmt_g9(T), std::to_string(year), fmt_g9(c.h),
                            fmt_g9(c.conditional), fmt_g9(c.unconditional),
                            std::to_string(c.n_pairs),
                            c.empty_conditioning ? "1" : "0"});
    }
  }
  if (risk_rows.empty())
    throw std::runtime_error(
        "risk: no valid critical temperature; every requested T lies below "
        "max_s u(s)");
  write_csv(cfg.outdir() + "/risk.csv",
            {"T", "t", "Pr", "return_period", "SE", "E_C", "E_C_given_A",
             "E_C_SE", "b", "unscaled_fallback", "hits"},
            risk_rows);
  write_csv(cfg.outdir() + "/chi_obs.csv",
            {"T", "t", "h_km", "chi_conditional", "chi_unconditional",
             "n_pairs", "empty_conditioning"},
            chi_rows);
  write_manifest(cfg, Stage::risk, {"risk.csv", "chi_obs.csv"});
}

void stage_return_levels(const PipelineConfig& cfg) {
  MarginalModel model = assemble_marginal(cfg, cfg.get("sim.sites"));
  const double period = cfg.num("levels.period");
  std::vector<std::vector<std::string>> rows;
  for (double year_d : cfg.num_list("levels.years")) {
    const int year = static_cast<int>(year_d);
    const MarginalSlice slice = model.at_year(year);
    for (std::size_t s = 0; s < model.sites.size(); ++s)
      rows.push_back({model.sites[s].id, fmt_g9(model.sites[s].lon),
                      fmt_g9(model.sites[s].lat), std::to_string(year),
                      fmt_g9(marginal_return_level(slice,
                                                   static_cast<Eigen::Index>(s),
                                                   period))});
  }
  write_csv(cfg.outdir() + "/return_levels.csv",
            {"site_id", "lon", "lat", "t", "level"}, rows);
  write_manifest(cfg, Stage::return_levels, {"return_levels.csv"});
}

void stage_bootstrap(const PipelineConfig& cfg) {
  require_artifact(cfg.outdir() + "/uniform_panel/meta.csv", "transform");
  Panel uniform = load_panel_dir(cfg.outdir() + "/uniform_panel");
  MarginalModel model = assemble_marginal(cfg, "stations");
  Panel grid = load_panel_dir(cfg.outdir() + "/grid_panel");

  BootstrapPlan plan;
  plan.block_length = static_cast<int>(cfg.integer("resample.block"));
  plan.n_replicates = static_cast<int>(cfg.integer("resample.n"));
  plan.seed = static_cast<std::uint64_t>(cfg.integer("resample.seed"));

  const auto model_id = model.obs.model;
  const bool log_clim = model.obs.log_clim;
  ObsFitOptions oopts;
  oopts.min_excesses = static_cast<std::size_t>(cfg.integer("tail.min_excesses"));

  // per-station fixed pieces of the design
  const auto nearest = nearest_sites(model.sites, grid.sites);
  std::vector<double> sigma_c_station, u_station;
  for (std::size_t s = 0; s < model.sites.size(); ++s) {
    sigma_c_station.push_back(model.clim.sigma[static_cast<std::size_t>(nearest[s])]);
    u_station.push_back(model.threshold.u(model.sc.u_c[s]));
  }

  auto excess_design = [&](const Panel& celsius, Eigen::MatrixXd& X,
                           std::vector<double>& y) {
    std::vector<std::vector<double>> rows;
    y.clear();
    for (Eigen::Index t = 0; t < celsius.n_times(); ++t) {
      const double m_i = model.cov.at(celsius.times[static_cast<std::size_t>(t)]).m_i;
      for (Eigen::Index s = 0; s < celsius.n_sites(); ++s) {
        if (!celsius.observed(t, s)) continue;
        const double excess =
            celsius.values(t, s) - u_station[static_cast<std::size_t>(s)];
        if (excess <= 0.0) continue;
        y.push_back(excess);
        rows.push_back(obs_design_row(model_id, log_clim,
                                      sigma_c_station[static_cast<std::size_t>(s)],
                                      celsius.sites[static_cast<std::size_t>(s)].coast_dist,
                                      m_i));
      }
    }
    X.resize(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.empty() ? 1 : rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  };

  // replicate data sets kept for the bias-correction re-fits
  const int n = plan.n_replicates;
  std::vector<Eigen::MatrixXd> Xs(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> ys(static_cast<std::size_t>(n));
  std::vector<ObsTailFit> fits(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t r) {
    Panel rep_uniform = block_bootstrap_replicate(uniform, plan, static_cast<int>(r));
    Panel rep_celsius = from_uniform(rep_uniform, model);
    excess_design(rep_celsius, Xs[r], ys[r]);
    fits[r] = fit_obs_gpd(Xs[r], ys[r], model_id, log_clim, oopts);
  });

  auto refit = [&](std::size_t r, double xi_fixed) {
    return fit_obs_gpd(Xs[r], ys[r], model_id, log_clim, oopts,
                       &fits[r].theta, &xi_fixed);
  };
  BiasCorrectResult corrected = bias_correct(fits, model.obs, refit);

  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 0; r < fits.size(); ++r) {
    std::vector<std::string> row{std::to_string(r)};
    for (double th : fits[r].theta) row.push_back(fmt_g9(th));
    row.push_back(fmt_g9(fits[r].xi));
    if (r < corrected.corrected.size()) {
      for (double th : corrected.corrected[r].theta) row.push_back(fmt_g9(th));
      row.push_back(fmt_g9(corrected.corrected[r].xi));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::string> header{"replicate"};
  for (std::size_t j = 0; j < model.obs.theta.size(); ++j)
    header.push_back("theta" + std::to_string(j));
  header.push_back("xi");
  for (std::size_t j = 0; j < model.obs.theta.size(); ++j)
    header.push_back("theta" + std::to_string(j) + "_adj");
  header.push_back("xi_adj");
  write_csv(cfg.outdir() + "/boot_params.csv", header, rows);

  // percentile CI summary of the corrected fits
  std::vector<std::vector<std::string>> ci_rows;
  auto pct = [](std::vector<double> v, double q) {
    return quantile_type7(std::move(v), q);
  };
  std::vector<double> xis;
  for (const auto& f : corrected.corrected) xis.push_back(f.xi);
  ci_rows.push_back({"xi", fmt_g9(model.obs.xi), fmt_g9(pct(xis, 0.025)),
                     fmt_g9(pct(xis, 0.975))});
  for (std::size_t j = 0; j < model.obs.theta.size(); ++j) {
    std::vector<double> th;
    for (const auto& f : corrected.corrected) th.push_back(f.theta[j]);
    ci_rows.push_back({"theta" + std::to_string(j), fmt_g9(model.obs.theta[j]),
                       fmt_g9(pct(th, 0.025)), fmt_g9(pct(th, 0.975))});
  }
  write_csv(cfg.outdir() + "/boot_ci.csv",
            {"parameter", "estimate", "ci_lo", "ci_hi"}, ci_rows);
  write_manifest(cfg, Stage::bootstrap, {"boot_params.csv", "boot_ci.csv"});
}

void stage_cv(const PipelineConfig& cfg) {
  LoadedData d = load_ingested(cfg);
  const FoldKind kind = cfg.get("cv.kind") == "90" ? FoldKind::k90 : FoldKind::st;
  FoldOptions fopts;
  fopts.seed = static_cast<std::uint64_t>(cfg.integer("cv.seed"));
  FoldSpec folds = make_folds(d.station, kind, fopts);

  const auto taus = cfg.num_list("body.taus");
  const std::string target = cfg.get("cv.target");
  std::vector<std::string> models = cfg.str_list("cv.models");
  if (models.empty())
    models = target == "body" ? std::vector<std::string>{"base", "clim", "clim+mi"}
                              : std::vector<std::string>{"M0", "M1", "M2"};

  const SpatialCovariates sc = map_spatial_covariates(d.station.sites, d.grid, taus);

  // shared pieces of the tail re-fits, computed once
  std::optional<MarginalModel> base_model;
  Eigen::MatrixXd u_c_grid;
  std::vector<int> station_nearest;
  if (target == "tail") {
    base_model = assemble_marginal(cfg, "stations");
    u_c_grid = empirical_quantiles(d.grid, {0.9});
    station_nearest = nearest_sites(d.station.sites, d.grid.sites);
  }

  auto masked_training = [&](int fold) {
    Panel train = d.station;
    for (Eigen::Index t = 0; t < train.n_times(); ++t)
      for (Eigen::Index s = 0; s < train.n_sites(); ++s)
        if (folds.assignment(t, s) == fold) {
          train.observed(t, s) = 0;
          train.values(t, s) = std::numeric_limits<double>::quiet_NaN();
        }
    return train;
  };
  auto held_mask = [&](int fold) {
    Mask held = Mask::Zero(d.station.n_times(), d.station.n_sites());
    for (Eigen::Index t = 0; t < held.rows(); ++t)
      for (Eigen::Index s = 0; s < held.cols(); ++s)
        if (folds.assignment(t, s) == fold) held(t, s) = 1;
    return held;
  };

  std::vector<std::vector<std::string>> out_rows;
  for (const auto& model_name : models) {
    double sq = 0.0, crps = 0.0;
    std::size_t nq = 0, nobs = 0;
    for (int f = 0; f < folds.n_folds; ++f) {
      const Mask held = held_mask(f);
      if (held.cast<int>().sum() == 0) continue;
      Panel train = masked_training(f);

      ScoreResult r;
      if (target == "body") {
        BodyModel body = fit_body(train, sc.q_c, d.cov, body_spec_from_string(model_name), taus);
        // one-slot spline cache: score evaluates many taus at the same (t,s)
        struct Memo {
          int t_key = -1;
          Eigen::Index s = -1;
          MonotoneCubic sp;
        };
        auto memo = std::make_shared<Memo>();
        auto spline_at = [&, memo](const DayIndex& t, Eigen::Index s) -> const MonotoneCubic& {
          const int key = t.year * 128 + t.day_of_summer;
          if (memo->t_key != key || memo->s != s) {
            const double m_i = body.spec == BodySpec::clim_mi ? d.cov.at(t).m_i : 0.0;
            memo->sp = body.spline(sc.q_c.row(s).transpose(), m_i);
            memo->t_key = key;
            memo->s = s;
          }
          return memo->sp;
        };
        r = score(
            d.station, held,
            [&](const DayIndex& t, Eigen::Index s, double tau) {
              return spline_at(t, s)(tau);
            },
            [&](const DayIndex& t, Eigen::Index s, double x) {
              return std::clamp(spline_at(t, s).inverse(x), 0.0, 1.0);
            },
            taus);
      } else {
        MarginalModel m = *base_model;
        // re-fit threshold and obs tail on the training entries only
        const auto& nearest = station_nearest;
        std::vector<double> u_c_station;
        for (auto g : nearest) u_c_station.push_back(u_c_grid(g, 0));
        m.threshold = fit_threshold(train, u_c_station);
        const auto model_id = obs_model_from_string(model_name);
        const bool log_clim = resolve_log_clim(
            model_id, clim_link_from_string(cfg.get("tail.clim_scale_link")));
        std::vector<double> yy;
        std::vector<std::vector<double>> rows;
        for (Eigen::Index t = 0; t < train.n_times(); ++t) {
          const double m_i = d.cov.at(train.times[static_cast<std::size_t>(t)]).m_i;
          for (Eigen::Index s = 0; s < train.n_sites(); ++s) {
            if (!train.observed(t, s)) continue;
            const double u =
                m.threshold.u(u_c_station[static_cast<std::size_t>(s)]);
            const double excess = train.values(t, s) - u;
            if (excess <= 0.0) continue;
            yy.push_back(excess);
            rows.push_back(obs_design_row(
                model_id, log_clim,
                m.clim.sigma[static_cast<std::size_t>(nearest[static_cast<std::size_t>(s)])],
                train.sites[static_cast<std::size_t>(s)].coast_dist, m_i));
          }
        }
        Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()),
                          static_cast<Eigen::Index>(rows.empty() ? 1 : rows[0].size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
          for (std::size_t j = 0; j < rows[i].size(); ++j)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        ObsFitOptions oopts;
        oopts.min_excesses = static_cast<std::size_t>(cfg.integer("tail.min_excesses"));
        m.obs = fit_obs_gpd(X, yy, model_id, log_clim, oopts);

        auto slices = std::make_shared<std::map<std::pair<int, int>, MarginalSlice>>();
        auto slice_at = [&, slices](const DayIndex& t) -> const MarginalSlice& {
          const auto key = std::make_pair(t.year, t.day_of_summer);
          auto it = slices->find(key);
          if (it == slices->end()) it = slices->emplace(key, m.at(t)).first;
          return it->second;
        };
        const auto tail_taus = cfg.num_list("cv.tail_taus");
        r = score(
            d.station, held,
            [&](const DayIndex& t, Eigen::Index s, double tau) {
              return slice_at(t).site[static_cast<std::size_t>(s)].quantile(tau);
            },
            [&](const DayIndex& t, Eigen::Index s, double x) {
              return slice_at(t).site[static_cast<std::size_t>(s)].cdf(x);
            },
            tail_taus);
      }
      sq += r.rmse * r.rmse * static_cast<double>(r.n_quantiles);
      crps += r.crps * static_cast<double>(r.n_scored);
      nq += r.n_quantiles;
      nobs += r.n_scored;
    }
    out_rows.push_back({target, model_name, cfg.get("cv.kind"),
                        fmt_g9(nq ? std::sqrt(sq / static_cast<double>(nq)) : 0.0),
                        fmt_g9(nobs ? crps / static_cast<double>(nobs) : 0.0),
                        std::to_string(nq), std::to_string(nobs)});
  }
  write_csv(cfg.outdir() + "/cv.csv",
            {"target", "model", "kind", "rmse", "crps", "n_quantiles", "n_scored"},
            out_rows);
  write_manifest(cfg, Stage::cv, {"cv.csv"});
}

void stage_report(const PipelineConfig& cfg) {
  std::ostringstream rep;
  rep << "pipeline report (version " << kVersion << ", config "
      << cfg.hash() << ")\n\n";
  auto describe_if = [&](const std::string& rel, auto&& fn) {
    if (fs::exists(cfg.outdir() + "/" + rel)) fn();
  };
  describe_if("station_panel/meta.csv", [&] {
    Panel p = load_panel_dir(cfg.outdir() + "/station_panel");
    long obs = 0;
    for (Eigen::Index t = 0; t < p.n_times(); ++t)
      obs += p.observed.row(t).cast<int>().sum();
    rep << "station panel: " << p.n_sites() << " sites, " << p.n_times()
        << " summer days, " << obs << " observed values\n";
  });
  describe_if("body.json", [&] {
    BodyModel b = load_body(cfg.outdir() + "/body.json");
    rep << "body model: " << to_string(b.spec) << ", " << b.tau_grid.size()
        << " tau levels\n";
  });
  describe_if("tail.json", [&] {
    TailArtifact t = load_tail(cfg.outdir() + "/tail.json");
    rep << "tail model: " << to_string(t.obs.model) << ", xi_o = "
        << fmt_g9(t.obs.xi) << ", xi_c = " << fmt_g9(t.clim.xi)
        << ", threshold u = " << fmt_g9(t.threshold.beta0) << " + "
        << fmt_g9(t.threshold.beta1) << " u_c\n";
  });
  describe_if("dep.json", [&] {
    DependenceModel m = load_dependence(cfg.outdir() + "/dep.json");
    rep << "dependence: alpha = " << fmt_g9(m.vario.alpha) << ", phi = "
        << fmt_g9(m.vario.phi) << " km, nu = " << fmt_g9(m.vario.nu)
        << ", v_r = " << fmt_g9(m.v_r) << "\n";
  });
  describe_if("risk.csv", [&] {
    CsvTable t = read_csv(cfg.outdir() + "/risk.csv");
    rep << "risk table: " << t.rows.size() << " (T, year) rows\n";
  });
  describe_if("cv.csv", [&] {
    CsvTable t = read_csv(cfg.outdir() + "/cv.csv");
    rep << "cv table: " << t.rows.size() << " model rows\n";
  });
  std::ofstream out(cfg.outdir() + "/report.txt");
  out << rep.str();
  write_manifest(cfg, Stage::report, {"report.txt"});
}

}  // namespace

void run_stage(const PipelineConfig& cfg, Stage stage) {
  const auto errors = cfg.validate();
  if (!errors.empty()) {
    std::string msg = "configuration invalid:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw std::runtime_error(msg);
  }
  set_thread_cap(static_cast<int>(cfg.integer("threads")));
  fs::create_directories(cfg.outdir());
  switch (stage) {
    case Stage::synth: stage_synth(cfg); break;
    case Stage::ingest: stage_ingest(cfg); break;
    case Stage::fit_body: stage_fit_body(cfg); break;
    case Stage::fit_tail: stage_fit_tail(cfg); break;
    case Stage::transform: stage_transform(cfg); break;
    case Stage::chi: stage_chi(cfg); break;
    case Stage::fit_dep: stage_fit_dep(cfg); break;
    case Stage::simulate: stage_simulate(cfg); break;
    case Stage::risk: stage_risk(cfg); break;
    case Stage::return_levels: stage_return_levels(cfg); break;
    case Stage::bootstrap: stage_bootstrap(cfg); break;
    case Stage::cv: stage_cv(cfg); break;
    case Stage::report: stage_report(cfg); break;
  }
}

void run_all(const PipelineConfig& cfg) {
  for (Stage s : all_stages()) {
    // synth only runs when no external data paths are configured
    if (s == Stage::synth && !cfg.get("paths.station").empty()) continue;
    run_stage(cfg, s);
  }
}

}  // namespace spex
