#include "cfms/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include "cfms/csv.hpp"
#include "cfms/errors.hpp"
#include "cfms/reportjson.hpp"

namespace cfms::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute() || base_dir.empty()) return path;
  return (fs::path(base_dir) / path).string();
}

double get_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw usage_error(std::string("config field '") + key + "' must be a number");
  return j[key].get<double>();
}

}  // namespace

sampler::ChainConfig chain_config_from_json(const json& j, const sampler::ChainConfig& defaults) {
  sampler::ChainConfig c = defaults;
  c.n_iter = static_cast<int>(get_num(j, "n_iter", c.n_iter));
  c.burn_in = static_cast<int>(get_num(j, "burn_in", c.burn_in));
  c.thin = static_cast<int>(get_num(j, "thin", c.thin));
  c.n_chains = static_cast<int>(get_num(j, "n_chains", c.n_chains));
  if (j.contains("dispersed_starts")) c.dispersed_starts = j["dispersed_starts"].get<bool>();
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  return c;
}

marglik::IntrinsicOptions intrinsic_from_json(const json& j, const marglik::IntrinsicOptions& defaults) {
  marglik::IntrinsicOptions o = defaults;
  o.n_train = static_cast<int>(get_num(j, "n_train", o.n_train));
  o.n_subsamples = static_cast<int>(get_num(j, "n_subsamples", o.n_subsamples));
  o.train_n_iter = static_cast<int>(get_num(j, "train_n_iter", o.train_n_iter));
  o.train_burn_in = static_cast<int>(get_num(j, "train_burn_in", o.train_burn_in));
  return o;
}

marglik::RegularityThresholds thresholds_from_json(const json& j,
                                                   const marglik::RegularityThresholds& defaults) {
  marglik::RegularityThresholds t = defaults;
  t.singular_value_ratio = get_num(j, "singular_value_ratio", t.singular_value_ratio);
  t.near_zero_loading = get_num(j, "near_zero_loading", t.near_zero_loading);
  t.near_zero_mass = get_num(j, "near_zero_mass", t.near_zero_mass);
  t.max_rhat = get_num(j, "max_rhat", t.max_rhat);
  return t;
}

TrueModelSpec true_model_spec_from_json(const json& j) {
  TrueModelSpec spec;
  if (!j.contains("loadings") || !j["loadings"].is_array()) {
    throw usage_error("spec field 'loadings' must be an array of rows");
  }
  const auto& lam = j["loadings"];
  const int p = static_cast<int>(lam.size());
  if (p == 0) throw usage_error("spec field 'loadings' must not be empty");
  const int m = static_cast<int>(lam[0].size());
  spec.model.loadings.resize(p, m);
  for (int i = 0; i < p; ++i) {
    if (static_cast<int>(lam[i].size()) != m) {
      throw usage_error("spec field 'loadings[" + std::to_string(i) + "]' has ragged length");
    }
    for (int k = 0; k < m; ++k) {
      if (!lam[i][k].is_number()) {
        throw usage_error("spec field 'loadings[" + std::to_string(i) + "][" + std::to_string(k) +
                          "]' must be a number");
      }
      spec.model.loadings(i, k) = lam[i][k].get<double>();
    }
  }
  if (!j.contains("unique_variances") || !j["unique_variances"].is_array() ||
      static_cast<int>(j["unique_variances"].size()) != p) {
    throw usage_error("spec field 'unique_variances' must be an array of length " + std::to_string(p));
  }
  spec.model.unique_variances.resize(p);
  for (int i = 0; i < p; ++i) {
    if (!j["unique_variances"][i].is_number()) {
      throw usage_error("spec field 'unique_variances[" + std::to_string(i) + "]' must be a number");
    }
    spec.model.unique_variances[i] = j["unique_variances"][i].get<double>();
  }
  if (j.contains("factor_correlations")) {
    const auto& phi = j["factor_correlations"];
    if (!phi.is_array() || static_cast<int>(phi.size()) != m) {
      throw usage_error("spec field 'factor_correlations' must be an " + std::to_string(m) + "x" +
                        std::to_string(m) + " array");
    }
    spec.model.factor_correlations.resize(m, m);
    for (int a = 0; a < m; ++a) {
      if (static_cast<int>(phi[a].size()) != m) {
        throw usage_error("spec field 'factor_correlations[" + std::to_string(a) + "]' has ragged length");
      }
      for (int b = 0; b < m; ++b) spec.model.factor_correlations(a, b) = phi[a][b].get<double>();
    }
  } else {
    spec.model.factor_correlations = Matrix::Identity(m, m);
  }
  if (!j.contains("n") || !j["n"].is_number_integer()) {
    throw usage_error("spec field 'n' must be an integer");
  }
  spec.n = j["n"].get<int>();
  if (j.contains("seed")) spec.seed = j["seed"].get<uint64_t>();
  try {
    spec.validate();
  } catch (const Error& e) {
    throw usage_error(std::string("invalid true-model spec: ") + e.what());
  }
  return spec;
}

TrueModelSpec load_true_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open spec file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw usage_error(path + ": " + e.what());
  }
  return true_model_spec_from_json(j);
}

PipelineConfig pipeline_config_from_json(const json& j, const std::string& base_dir) {
  PipelineConfig c;
  if (!j.contains("data")) throw usage_error("pipeline config needs a 'data' path");
  c.data_path = resolve(base_dir, j["data"].get<std::string>());
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  if (j.contains("standardize")) c.standardize = j["standardize"].get<bool>();
  c.k_max = static_cast<int>(get_num(j, "k_max", c.k_max));
  c.chain = chain_config_from_json(j.contains("chain") ? j["chain"] : json::object(), c.chain);
  c.ball_chain = chain_config_from_json(j.contains("ball_chain") ? j["ball_chain"] : json::object(),
                                        c.ball_chain);
  c.intrinsic =
      intrinsic_from_json(j.contains("intrinsic") ? j["intrinsic"] : json::object(), c.intrinsic);
  c.thresholds =
      thresholds_from_json(j.contains("thresholds") ? j["thresholds"] : json::object(), c.thresholds);
  if (!j.contains("pattern")) throw usage_error("pipeline config needs a 'pattern' path");
  c.pattern_path = resolve(base_dir, j["pattern"].get<std::string>());
  if (j.contains("constraints")) {
    for (const auto& f : j["constraints"]) c.constraint_paths.push_back(resolve(base_dir, f.get<std::string>()));
  }
  if (j.contains("out")) c.output_dir = resolve(base_dir, j["out"].get<std::string>());
  c.prior_draws = static_cast<long>(get_num(j, "prior_draws", static_cast<double>(c.prior_draws)));
  if (j.contains("phi_mode")) {
    const std::string mode = j["phi_mode"].get<std::string>();
    if (mode == "identity") c.phi_mode = encompass::PhiMode::Identity;
    else if (mode == "from_prior") c.phi_mode = encompass::PhiMode::FromPrior;
    else throw usage_error("phi_mode must be 'identity' or 'from_prior'");
  }
  if (j.contains("allow_unidentified")) c.allow_unidentified = j["allow_unidentified"].get<bool>();
  if (j.contains("export_draws")) c.export_draws = j["export_draws"].get<bool>();
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open pipeline config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw usage_error(path + ": " + e.what());
  }
  return pipeline_config_from_json(j, fs::path(path).parent_path().string());
}

json PipelineConfig::echo() const {
  json j;
  j["data"] = data_path;
  j["seed"] = seed;
  j["standardize"] = standardize;
  j["k_max"] = k_max;
  j["chain"] = report::to_json(chain);
  j["ball_chain"] = report::to_json(ball_chain);
  j["intrinsic"] = json{{"n_train", intrinsic.n_train},
                        {"n_subsamples", intrinsic.n_subsamples},
                        {"train_n_iter", intrinsic.train_n_iter},
                        {"train_burn_in", intrinsic.train_burn_in}};
  j["thresholds"] = report::to_json(thresholds);
  j["pattern"] = pattern_path;
  j["constraints"] = constraint_paths;
  j["out"] = output_dir;
  j["prior_draws"] = prior_draws;
  j["phi_mode"] = phi_mode == encompass::PhiMode::Identity ? "identity" : "from_prior";
  j["allow_unidentified"] = allow_unidentified;
  j["export_draws"] = export_draws;
  return j;
}

std::vector<constraints::BoundSystem> load_and_bind_constraints(
    const std::vector<std::string>& paths, const PatternMatrix& pattern) {
  std::vector<constraints::BoundSystem> bounds;
  for (const std::string& path : paths) {
    if (!fs::exists(path)) throw usage_error("constraint file not found: " + path);
    auto parsed = constraints::parse_file(path);
    if (const auto* err = std::get_if<constraints::ParseError>(&parsed)) {
      throw usage_error(path + ":" + std::to_string(err->line) + ":" + std::to_string(err->column) +
                        ": " + err->message);
    }
    auto bound = constraints::bind(std::get<constraints::ConstraintSystem>(parsed), pattern);
    if (const auto* err = std::get_if<constraints::BindError>(&bound)) {
      throw model_error(path + ":" + std::to_string(err->line) + ": " + err->message);
    }
    bounds.push_back(std::get<constraints::BoundSystem>(std::move(bound)));
  }
  return bounds;
}

void write_loading_histograms(const std::vector<sampler::Chain>& chains, const std::string& path,
                              int n_bins) {
  if (chains.empty()) throw model_error("histograms need at least one chain");
  const PatternMatrix& pattern = chains.front().pattern;
  std::vector<std::string> header{"loading", "bin_lo", "bin_hi", "count"};
  std::ofstream out(path);
  if (!out) throw usage_error("cannot write histogram file: " + path);
  out << "loading,bin_lo,bin_hi,count\n";
  for (int i = 0; i < pattern.p(); ++i) {
    for (int j = 0; j < pattern.m(); ++j) {
      if (!pattern.is_free(i, j)) continue;
      std::vector<double> values;
      for (const auto& c : chains)
        for (const auto& d : c.draws) values.push_back(d.loadings(i, j));
      double lo = *std::min_element(values.begin(), values.end());
      double hi = *std::max_element(values.begin(), values.end());
      if (hi <= lo) hi = lo + 1e-9;
      const double width = (hi - lo) / n_bins;
      std::vector<long> counts(n_bins, 0);
      for (double v : values) {
        int b = static_cast<int>((v - lo) / width);
        if (b >= n_bins) b = n_bins - 1;
        if (b < 0) b = 0;
        ++counts[b];
      }
      const std::string name = "L[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]";
      for (int b = 0; b < n_bins; ++b) {
        out << name << ',' << format_double(lo + b * width) << ',' << format_double(lo + (b + 1) * width)
            << ',' << counts[b] << '\n';
      }
    }
  }
  if (!out) throw usage_error("write failed: " + path);
}

namespace {

struct StageTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void write_pipeline_report(const PipelineConfig& config, const PipelineResult& result) {
  json j;
  j["tool"] = "cfms pipeline";
  j["version"] = report::kVersion;
  j["seed"] = config.seed;
  j["config"] = config.echo();
  json stages = json::array();
  for (const auto& s : result.stages) {
    json sj{{"name", s.name}, {"status", s.status}};
    if (!s.error.empty()) sj["error"] = s.error;
    stages.push_back(sj);
  }
  j["stages"] = stages;
  if (result.selection) j["dimensionality"] = report::to_json(*result.selection);
  if (result.identification) j["identification"] = report::to_json(*result.identification);
  if (result.type2) j["type2"] = report::to_json(*result.type2);
  j["timings_file"] = "pipeline_timings.json";
  report::write_json_file(j, (fs::path(config.output_dir) / "pipeline_report.json").string());

  // wall-clock timings are machine-dependent; they live in a side file so the
  // report itself is byte-stable per seed
  json t;
  t["stage_seconds"] = result.stage_seconds;
  report::write_json_file(t, (fs::path(config.output_dir) / "pipeline_timings.json").string());
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  PipelineResult result;
  if (config.output_dir.empty()) throw usage_error("pipeline needs an output directory");
  fs::create_directories(config.output_dir);

  auto fail_stage = [&](const std::string& name, const std::string& error) {
    result.stages.push_back({name, "failed", error});
    write_pipeline_report(config, result);
  };

  // stage i: dimensionality selection on the (standardized) data
  Dataset data;
  StageTimer t0;
  try {
    data = read_dataset_csv(config.data_path);
    if (config.standardize) data = standardize(data);
    marglik::DimSelectConfig dim;
    dim.k_max = config.k_max;
    dim.chain = config.chain;
    dim.chain.seed = mix_seed(config.seed, 0xD135EC);
    dim.intrinsic = config.intrinsic;
    dim.thresholds = config.thresholds;
    result.selection = marglik::select_dimensionality(data, dim);
    result.stages.push_back({"dimensionality", "ok", ""});
    result.stage_seconds.push_back(t0.seconds());
    json sel = report::to_json(*result.selection);
    sel["tool"] = "cfms pipeline/dim-select";
    sel["version"] = report::kVersion;
    sel["seed"] = config.seed;
    report::write_json_file(sel, (fs::path(config.output_dir) / "dimensionality.json").string());
  } catch (const Error& e) {
    result.stage_seconds.push_back(t0.seconds());
    fail_stage("dimensionality", e.what());
    throw;
  }

  // stage ii: user-supplied UCFM pattern must be identified
  PatternMatrix pattern;
  StageTimer t1;
  try {
    pattern = ident::read_pattern_file(config.pattern_path);
    result.identification = ident::check_ucfm(pattern);
    json idj = report::to_json(*result.identification);
    idj["tool"] = "cfms pipeline/check";
    idj["version"] = report::kVersion;
    report::write_json_file(idj, (fs::path(config.output_dir) / "identification.json").string());
    if (!result.identification->overall && !config.allow_unidentified) {
      throw model_error("pattern fails the rotational-uniqueness check");
    }
    std::string note;
    if (pattern.m() != result.selection->selected_k) {
      note = "note: pattern has m=" + std::to_string(pattern.m()) + " but the selected k is " +
             std::to_string(result.selection->selected_k);
    }
    result.stages.push_back({"ucfm-check", "ok", note});
    result.stage_seconds.push_back(t1.seconds());
  } catch (const Error& e) {
    result.stage_seconds.push_back(t1.seconds());
    fail_stage("ucfm-check", e.what());
    throw;
  }

  // stage iii: parse and bind the competing systems
  std::vector<constraints::BoundSystem> bounds;
  StageTimer t2;
  try {
    bounds = load_and_bind_constraints(config.constraint_paths, pattern);
    result.stages.push_back({"constraints", "ok", ""});
    result.stage_seconds.push_back(t2.seconds());
  } catch (const Error& e) {
    result.stage_seconds.push_back(t2.seconds());
    fail_stage("constraints", e.what());
    throw;
  }

  // stage iv: encompassing chain + Type II Bayes factors
  StageTimer t3;
  try {
    sampler::PriorSpec ball;
    ball.kind = sampler::PriorKind::EncompassingBall;
    ball.phi_prior = sampler::PhiPrior::FixedIdentity;
    sampler::ChainConfig cc = config.ball_chain;
    cc.seed = mix_seed(config.seed, hash_bytes(pattern.fingerprint() + ":ball"));
    const sampler::Chain chain = sampler::run_chain(data, pattern, ball, cc);
    if (config.export_draws) {
      sampler::export_chain_csv(chain, (fs::path(config.output_dir) / "ball_chain.csv").string());
    }
    encompass::Type2Options opts;
    opts.prior_draws = config.prior_draws;
    opts.phi_mode = config.phi_mode;
    opts.seed = mix_seed(config.seed, 0x7f2);
    result.type2 = encompass::type2_bayes_factors(bounds, chain, opts);
    result.stages.push_back({"type2", "ok", ""});
    result.stage_seconds.push_back(t3.seconds());
    json t2j = report::to_json(*result.type2);
    t2j["tool"] = "cfms pipeline/bf2";
    t2j["version"] = report::kVersion;
    report::write_json_file(t2j, (fs::path(config.output_dir) / "type2.json").string());
  } catch (const Error& e) {
    result.stage_seconds.push_back(t3.seconds());
    fail_stage("type2", e.what());
    throw;
  }

  result.ok = true;
  write_pipeline_report(config, result);
  return result;
}

}  // namespace cfms::cli
