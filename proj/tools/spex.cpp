#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spex/pipeline.hpp"

namespace {

struct StageCmd {
  CLI::App* sub = nullptr;
  spex::Stage stage{};
  std::string config;
  std::string out;
  long threads = -1;
  long seed = -1;
  std::vector<std::string> sets;
  std::map<std::string, std::string> bound;  // config key -> flag value
};

spex::PipelineConfig build_config(const StageCmd& c) {
  spex::PipelineConfig cfg = c.config.empty()
                                 ? spex::PipelineConfig{}
                                 : spex::PipelineConfig::from_file(c.config);
  if (!c.out.empty()) cfg.set("paths.outdir", c.out);
  if (c.threads >= 0) cfg.set("threads", std::to_string(c.threads));
  if (c.seed >= 0) {
    cfg.set("seed", std::to_string(c.seed));
    cfg.set("sim.seed", std::to_string(c.seed));
    cfg.set("dep.seed", std::to_string(c.seed + 1));
    cfg.set("resample.seed", std::to_string(c.seed + 2));
    cfg.set("cv.seed", std::to_string(c.seed + 3));
  }
  for (const auto& [key, value] : c.bound)
    if (!value.empty()) cfg.set(key, value);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spex: temporally non-stationary spatial extreme temperature pipeline"};
  app.require_subcommand(1);

  std::vector<std::unique_ptr<StageCmd>> cmds;
  auto add_stage = [&](spex::Stage st, const std::string& help) -> StageCmd& {
    auto cmd = std::make_unique<StageCmd>();
    cmd->stage = st;
    cmd->sub = app.add_subcommand(spex::to_string(st), help);
    cmd->sub->add_option("-c,--config", cmd->config, "configuration file");
    cmd->sub->add_option("--set", cmd->sets, "override a key, e.g. --set sim.m=1000");
    cmd->sub->add_option("-o,--out", cmd->out, "output directory");
    cmd->sub->add_option("--threads", cmd->threads, "worker thread cap (0 = all cores)");
    cmd->sub->add_option("--seed", cmd->seed, "base seed applied to all stage seeds");
    cmds.push_back(std::move(cmd));
    return *cmds.back();
  };
  auto bind = [](StageCmd& c, const std::string& flag, const std::string& key,
                 const std::string& help) {
    auto& slot = c.bound[key];
    c.sub->add_option(flag, slot, help);
  };

  {
    auto& c = add_stage(spex::Stage::synth, "generate a synthetic data set with known truth");
    bind(c, "--spec", "synth.spec", "SynthSpec JSON (defaults when omitted)");
  }
  {
    auto& c = add_stage(spex::Stage::ingest, "load and validate station/grid/covariate CSVs");
    bind(c, "--station", "paths.station", "station CSV");
    bind(c, "--grid", "paths.grid", "climate grid CSV");
    bind(c, "--covariates", "paths.covariates", "covariate CSV");
    bind(c, "--bbox", "ingest.bbox", "lon0,lat0,lon1,lat1 spatial crop");
  }
  {
    auto& c = add_stage(spex::Stage::fit_body, "quantile-regression body model");
    bind(c, "--taus", "body.taus", "tau grid, comma separated");
    bind(c, "--model", "body.model", "base | clim | clim+mi");
  }
  {
    auto& c = add_stage(spex::Stage::fit_tail, "threshold + GPD tail models");
    bind(c, "--model", "tail.model", "M0 | M1 | M2");
    bind(c, "--clim-link", "tail.clim_scale_link", "table | log | identity");
    bind(c, "--clim-fit", "tail.clim_fit", "reuse the climate GPD fit from a tail.json");
  }
  add_stage(spex::Stage::transform, "PIT station data to uniform and Pareto scales");
  {
    auto& c = add_stage(spex::Stage::chi, "empirical extremal dependence tables");
    bind(c, "--p", "dep.p_grid", "probability levels, comma separated");
    bind(c, "--bins", "dep.bins", "distance bins (equal pair counts)");
    bind(c, "--boot", "dep.boot", "bootstrap replicates");
  }
  {
    auto& c = add_stage(spex::Stage::fit_dep, "Brown-Resnick dependence fit + risk threshold");
    bind(c, "--p", "dep.p_fit", "fitting level");
    bind(c, "--bins", "dep.bins", "distance bins");
    bind(c, "--boot", "dep.boot", "bootstrap replicates");
  }
  {
    auto& c = add_stage(spex::Stage::simulate, "simulate r-Pareto process fields");
    bind(c, "--m", "sim.m", "number of profiles");
    bind(c, "--L", "sim.L", "auxiliary Pareto risks");
    bind(c, "--sites", "sim.sites", "stations | grid");
    bind(c, "--anchor", "sim.anchor", "mixture | fixed");
  }
  {
    auto& c = add_stage(spex::Stage::risk, "spatial event probabilities and coverage");
    bind(c, "--T", "risk.T", "critical temperatures, lo:hi:step or list");
    bind(c, "--years", "risk.years", "condition years, comma separated");
    bind(c, "--sites", "sim.sites", "stations | grid");
  }
  {
    auto& c = add_stage(spex::Stage::return_levels, "marginal return-level maps");
    bind(c, "--period", "levels.period", "return period in years");
    bind(c, "--years", "levels.years", "condition years");
  }
  {
    auto& c = add_stage(spex::Stage::bootstrap, "block bootstrap + bias-corrected tail refits");
    bind(c, "--n", "resample.n", "replicates");
    bind(c, "--block", "resample.block", "block length in days");
  }
  {
    auto& c = add_stage(spex::Stage::cv, "90-fold / spatio-temporal cross-validation");
    bind(c, "--kind", "cv.kind", "90 | st");
    bind(c, "--target", "cv.target", "body | tail");
    bind(c, "--model,--models", "cv.models", "model list (defaults to the full ladder)");
  }
  add_stage(spex::Stage::report, "summarize pipeline artifacts");

  // run: a single named stage or the whole pipeline
  auto run_cmd = std::make_unique<StageCmd>();
  run_cmd->sub = app.add_subcommand("run", "run one stage or `all`");
  std::string stage_name = "all";
  run_cmd->sub->add_option("stage", stage_name, "stage name or `all`")->required();
  run_cmd->sub->add_option("-c,--config", run_cmd->config, "configuration file");
  run_cmd->sub->add_option("--set", run_cmd->sets, "override a key");
  run_cmd->sub->add_option("-o,--out", run_cmd->out, "output directory");
  run_cmd->sub->add_option("--threads", run_cmd->threads, "worker thread cap");
  run_cmd->sub->add_option("--seed", run_cmd->seed, "base seed");

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& c : cmds) {
      if (c->sub->parsed()) {
        spex::run_stage(build_config(*c), c->stage);
        return 0;
      }
    }
    if (run_cmd->sub->parsed()) {
      const spex::PipelineConfig cfg = build_config(*run_cmd);
      if (stage_name == "all")
        spex::run_all(cfg);
      else
        spex::run_stage(cfg, spex::stage_from_string(stage_name));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
