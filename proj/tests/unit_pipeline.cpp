#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "spex/csv.hpp"
#include "spex/pipeline.hpp"
#include "spex/stats.hpp"
#include "spex/synth.hpp"

using namespace spex;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineConfig small_config(const std::string& outdir) {
  PipelineConfig cfg;
  cfg.set("paths.outdir", outdir);
  cfg.set("body.taus", "0.05,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,0.95");
  cfg.set("sim.m", "1500");
  cfg.set("sim.L", "40");
  cfg.set("dep.boot", "60");
  cfg.set("dep.bins", "10");
  cfg.set("risk.T", "26:30:1");
  cfg.set("risk.years", "1952,1960");
  cfg.set("levels.years", "1952,1960");
  cfg.set("risk.h_grid", "50,150");
  return cfg;
}

void write_small_spec(const std::string& path) {
  std::ofstream out(path);
  out << R"({"n_stations": 20, "grid_nx": 5, "grid_ny": 5, "n_years": 9,
             "missing_rate": 0.2, "seed": 14, "year0": 1952})";
}

}  // namespace

TEST_CASE("pipeline config: defaults, file parsing, validation") {
  PipelineConfig cfg;
  CHECK(cfg.get("sim.m") == "25000");
  CHECK(cfg.get("sim.L") == "300");
  CHECK(cfg.get("dep.bins") == "30");
  CHECK(cfg.get("dep.boot") == "500");
  CHECK(cfg.get("dep.p_grid") == "0.8,0.85,0.9");
  CHECK(cfg.get("resample.block") == "5");
  CHECK(cfg.num_list("body.taus").size() == 21);  // 0.01, 0.05..0.95, 0.99
  CHECK(cfg.validate().empty());

  CHECK_THROWS_WITH_AS(cfg.set("no.such.key", "1"), doctest::Contains("unknown"),
                       std::runtime_error);

  test::TempDir dir("cfg");
  {
    std::ofstream out(dir.str() + "/c.cfg");
    out << "# comment\n"
        << "sim.m = 1234\n"
        << "risk.T = 27:33:0.5  # inline comment\n";
  }
  PipelineConfig file_cfg = PipelineConfig::from_file(dir.str() + "/c.cfg");
  CHECK(file_cfg.integer("sim.m") == 1234);
  CHECK(file_cfg.num_range("risk.T").size() == 13);

  // validation reports every failure at once
  PipelineConfig bad;
  bad.set("body.taus", "0.5,0.4");
  bad.set("dep.p_fit", "0.2");
  bad.set("cv.kind", "xx");
  const auto errors = bad.validate();
  CHECK(errors.size() >= 3);

  // hash covers the resolved config deterministically
  PipelineConfig a, b;
  CHECK(a.hash() == b.hash());
  b.set("sim.m", "7");
  CHECK(a.hash() != b.hash());
}

TEST_CASE("synth generator: determinism and missingness rate") {
  SynthSpec spec;
  spec.n_stations = 15;
  spec.n_years = 10;
  spec.missing_rate = 0.4;
  spec.seed = 9;
  SynthData a = generate(spec);
  SynthData b = generate(spec);
  CHECK((a.station.observed.array() == b.station.observed.array()).all());
  for (Eigen::Index t = 0; t < a.station.n_times(); ++t)
    for (Eigen::Index s = 0; s < a.station.n_sites(); ++s)
      if (a.station.observed(t, s))
        CHECK(a.station.values(t, s) == b.station.values(t, s));

  // observed fraction near 1 - rate over ~1.4e4 cells
  const double cells = static_cast<double>(a.station.observed.size());
  const double frac = a.station.observed.cast<double>().sum() / cells;
  CHECK(frac == doctest::Approx(0.6).epsilon(0.02));

  CHECK(a.grid.is_complete());
  a.station.check_mask_consistency("synth");
}

TEST_CASE("synth generator: single-site margins match the truth cdf") {
  SynthSpec spec;
  spec.n_stations = 1;
  spec.n_years = 12;
  spec.missing_rate = 0.0;
  spec.seed = 31;
  SynthData d = generate(spec);

  std::vector<double> u;
  for (Eigen::Index t = 0; t < d.station.n_times(); ++t) {
    const double m_i = d.cov.at(d.station.times[static_cast<std::size_t>(t)]).m_i;
    u.push_back(station_truth_cdf(d, 0, m_i, d.station.values(t, 0)));
  }
  CHECK(ks_uniform(u).p_value > 0.01);
}

TEST_CASE("run all: artifacts, manifests, determinism, dependency errors") {
  test::TempDir dir("pipeline");
  const std::string out = dir.str() + "/out";
  write_small_spec(dir.str() + "/spec.json");
  PipelineConfig cfg = small_config(out);
  cfg.set("synth.spec", dir.str() + "/spec.json");

  // risk before its producers: the error names the missing stage
  CHECK_THROWS_WITH_AS(run_stage(cfg, Stage::risk), doctest::Contains("fit-dep"),
                       std::runtime_error);

  for (Stage s : {Stage::synth, Stage::ingest, Stage::fit_body, Stage::fit_tail,
                  Stage::transform, Stage::chi, Stage::fit_dep, Stage::simulate,
                  Stage::risk, Stage::return_levels, Stage::report})
    run_stage(cfg, s);

  for (const char* artifact :
       {"body.json", "tail.json", "dep.json", "risk.csv", "chi_obs.csv",
        "return_levels.csv", "report.txt", "manifest_risk.json",
        "manifest_fit-dep.json", "sim/profiles.csv", "uniform_panel/mask.csv"})
    CHECK(fs::exists(out + "/" + artifact));

  // manifest embeds the resolved config and its hash
  const std::string manifest = slurp(out + "/manifest_risk.json");
  CHECK(manifest.find(cfg.hash()) != std::string::npos);
  CHECK(manifest.find("sim.m") != std::string::npos);

  // byte-identical numeric outputs on re-run with the same config
  const std::string risk_first = slurp(out + "/risk.csv");
  run_stage(cfg, Stage::risk);
  CHECK(slurp(out + "/risk.csv") == risk_first);

  const std::string levels_first = slurp(out + "/return_levels.csv");
  run_stage(cfg, Stage::return_levels);
  CHECK(slurp(out + "/return_levels.csv") == levels_first);
}

TEST_CASE("cv stage produces the model-ladder table") {
  test::TempDir dir("cv");
  const std::string out = dir.str() + "/out";
  write_small_spec(dir.str() + "/spec.json");
  PipelineConfig cfg = small_config(out);
  cfg.set("synth.spec", dir.str() + "/spec.json");
  cfg.set("cv.kind", "90");
  cfg.set("cv.target", "body");
  cfg.set("cv.models", "base,clim");
  cfg.set("body.taus", "0.1,0.3,0.5,0.7,0.9");

  for (Stage s : {Stage::synth, Stage::ingest, Stage::fit_body, Stage::fit_tail})
    run_stage(cfg, s);
  run_stage(cfg, Stage::cv);

  CsvTable t = read_csv(out + "/cv.csv");
  REQUIRE(t.rows.size() == 2);
  const auto c_model = t.col("model"), c_rmse = t.col("rmse"), c_nq = t.col("n_quantiles");
  CHECK(t.rows[0][c_model] == "base");
  CHECK(t.rows[1][c_model] == "clim");
  const double rmse_base = std::stod(t.rows[0][c_rmse]);
  const double rmse_clim = std::stod(t.rows[1][c_rmse]);
  CHECK(std::stol(t.rows[0][c_nq]) > 0);
  // the spatial covariate must help on spatially heterogeneous truth
  CHECK(rmse_clim < rmse_base);
}

TEST_CASE("bootstrap stage emits replicate and CI tables") {
  test::TempDir dir("boot");
  const std::string out = dir.str() + "/out";
  write_small_spec(dir.str() + "/spec.json");
  PipelineConfig cfg = small_config(out);
  cfg.set("synth.spec", dir.str() + "/spec.json");
  cfg.set("resample.n", "100");
  cfg.set("tail.model", "M1");

  for (Stage s : {Stage::synth, Stage::ingest, Stage::fit_body, Stage::fit_tail,
                  Stage::transform})
    run_stage(cfg, s);
  run_stage(cfg, Stage::bootstrap);

  CsvTable params = read_csv(out + "/boot_params.csv");
  CHECK(params.rows.size() == 100);
  CsvTable ci = read_csv(out + "/boot_ci.csv");
  REQUIRE(ci.rows.size() >= 4);  // xi + three theta rows for M1
  const auto c_lo = ci.col("ci_lo"), c_hi = ci.col("ci_hi"), c_est = ci.col("estimate");
  for (const auto& row : ci.rows) {
    CHECK(std::stod(row[c_lo]) <= std::stod(row[c_hi]));
  }
  // the full-data estimate sits inside its own bootstrap interval
  CHECK(std::stod(ci.rows[0][c_lo]) <= std::stod(ci.rows[0][c_est]));
  CHECK(std::stod(ci.rows[0][c_est]) <= std::stod(ci.rows[0][c_hi]));
}

TEST_CASE("marginal model assembles from artifacts for both site sets") {
  test::TempDir dir("asm");
  const std::string out = dir.str() + "/out";
  write_small_spec(dir.str() + "/spec.json");
  PipelineConfig cfg = small_config(out);
  cfg.set("synth.spec", dir.str() + "/spec.json");
  for (Stage s : {Stage::synth, Stage::ingest, Stage::fit_body, Stage::fit_tail})
    run_stage(cfg, s);

  MarginalModel stations = assemble_marginal(cfg, "stations");
  MarginalModel grid = assemble_marginal(cfg, "grid");
  CHECK(stations.sites.size() == 20);
  CHECK(grid.sites.size() == 25);

  // composite continuity at u at every site of a representative slice
  for (const auto& model : {stations, grid}) {
    const MarginalSlice slice = model.at_year(1958);
    for (const auto& sm : slice.site) {
      CHECK(std::abs(sm.cdf(sm.u) - (1.0 - sm.lambda)) < 1e-9);
      for (double p : {0.2, 0.7, 0.95})
        CHECK(sm.cdf(sm.quantile(p)) == doctest::Approx(p).epsilon(1e-9));
    }
  }
}
