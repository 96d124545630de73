#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfms/encompass.hpp"
#include "cfms/identify.hpp"
#include "cfms/marglik.hpp"

namespace cfms::cli {

struct PipelineConfig {
  std::string data_path;
  uint64_t seed = 0;
  bool standardize = true;
  int k_max = 3;
  sampler::ChainConfig chain;       // EFA dimensionality runs
  sampler::ChainConfig ball_chain;  // encompassing chain behind the Type II stage
  marglik::IntrinsicOptions intrinsic;
  marglik::RegularityThresholds thresholds;
  std::string pattern_path;
  std::vector<std::string> constraint_paths;
  std::string output_dir;
  long prior_draws = 100000;
  encompass::PhiMode phi_mode = encompass::PhiMode::Identity;
  bool allow_unidentified = false;
  bool export_draws = false;

  nlohmann::json echo() const;  // full effective config, embedded in reports
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::string& base_dir);
PipelineConfig load_pipeline_config(const std::string& path);

struct StageStatus {
  std::string name;
  std::string status;  // "ok", "failed", "skipped"
  std::string error;
};

struct PipelineResult {
  std::vector<StageStatus> stages;
  std::optional<marglik::DimensionalitySelection> selection;
  std::optional<ident::IdentificationReport> identification;
  std::optional<encompass::Type2Report> type2;
  std::vector<double> stage_seconds;
  bool ok = false;
};

// The four-step workflow: dimensionality selection, UCFM check, constraint
// binding, Type II Bayes factors. Reports are written into output_dir as each
// stage finishes, so a failed stage leaves the earlier partials behind;
// timings go to a side file to keep the reports byte-stable per seed.
PipelineResult run_pipeline(const PipelineConfig& config);

// Shared helpers for the CLI subcommands.
TrueModelSpec true_model_spec_from_json(const nlohmann::json& j);
TrueModelSpec load_true_model_spec(const std::string& path);

sampler::ChainConfig chain_config_from_json(const nlohmann::json& j,
                                            const sampler::ChainConfig& defaults);
marglik::IntrinsicOptions intrinsic_from_json(const nlohmann::json& j,
                                              const marglik::IntrinsicOptions& defaults);
marglik::RegularityThresholds thresholds_from_json(const nlohmann::json& j,
                                                   const marglik::RegularityThresholds& defaults);

// Pooled per-loading histograms (bin edges + counts) for density plots; bin
// counts sum exactly to the pooled retained draw count.
void write_loading_histograms(const std::vector<sampler::Chain>& chains, const std::string& path,
                              int n_bins = 40);

struct Bf2Inputs {
  Dataset data;
  PatternMatrix pattern;
  std::vector<constraints::BoundSystem> bounds;
};

// Parses and binds the constraint files against the pattern, surfacing
// file/line context in errors.
std::vector<constraints::BoundSystem> load_and_bind_constraints(
    const std::vector<std::string>& paths, const PatternMatrix& pattern);

}  // namespace cfms::cli
