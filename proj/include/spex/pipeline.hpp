#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spex/marginal.hpp"
#include "spex/panel.hpp"

namespace spex {

inline constexpr const char* kVersion = "0.1.0";

// Flat key-value configuration with dotted section keys. Every key has a
// documented default; unknown keys are rejected at validation.
class PipelineConfig {
 public:
  PipelineConfig();  // defaults only

  static PipelineConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double num(const std::string& key) const;
  long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> num_list(const std::string& key) const;    // a,b,c
  std::vector<double> num_range(const std::string& key) const;   // lo:hi:step or list
  std::vector<std::string> str_list(const std::string& key) const;

  // all keys in sorted order, resolved (defaults + overrides)
  std::vector<std::pair<std::string, std::string>> resolved() const;
  std::string hash() const;  // FNV-1a over the resolved listing

  // enumerate validation failures all at once; empty means valid
  std::vector<std::string> validate() const;

  std::string outdir() const { return get("paths.outdir"); }

 private:
  std::map<std::string, std::string> values_;
};

enum class Stage {
  synth,
  ingest,
  fit_body,
  fit_tail,
  transform,
  chi,
  fit_dep,
  simulate,
  risk,
  return_levels,
  bootstrap,
  cv,
  report,
};

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
std::vector<Stage> all_stages();

// Runs one stage; throws with an actionable message naming the producing
// stage when an upstream artifact is missing.
void run_stage(const PipelineConfig& cfg, Stage stage);
void run_all(const PipelineConfig& cfg);

// the fully assembled marginal model for a site set ("stations" or "grid")
MarginalModel assemble_marginal(const PipelineConfig& cfg,
                                const std::string& site_set);

}  // namespace spex
