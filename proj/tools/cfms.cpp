// cfms: Bayesian constrained-model selection for the normal linear factor
// model. Subcommands cover synthetic data provisioning, Type I
// dimensionality selection, UCFM identification checking, Type II
// inequality-constrained Bayes factors, and the four-step pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfms/csv.hpp"
#include "cfms/errors.hpp"
#include "cfms/kernels.hpp"
#include "cfms/pipeline.hpp"
#include "cfms/reportjson.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cfms;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw usage_error(path + ": " + e.what());
  }
  return j;
}

int run_simulate(const std::string& spec_path, const std::string& out_path, uint64_t seed,
                 bool seed_given) {
  TrueModelSpec spec = cli::load_true_model_spec(spec_path);
  if (seed_given) spec.seed = seed;
  const Dataset data = generate_synthetic(spec);
  write_dataset_csv(data, out_path);
  std::cout << "wrote " << data.n() << " observations on " << data.p() << " items to " << out_path
            << " (seed " << spec.seed << ")\n";
  return 0;
}

int run_dim_select(const std::string& data_path, int k_max, const std::string& config_path,
                   const std::string& out_dir, uint64_t seed, bool do_standardize) {
  json cfg = config_path.empty() ? json::object() : load_json_file(config_path);
  Dataset data = read_dataset_csv(data_path);
  if (cfg.contains("standardize")) do_standardize = cfg["standardize"].get<bool>();
  if (do_standardize) data = cfms::standardize(data);

  marglik::DimSelectConfig dim;
  dim.k_max = k_max;
  dim.chain = cli::chain_config_from_json(cfg.contains("chain") ? cfg["chain"] : json::object(),
                                          dim.chain);
  dim.chain.seed = mix_seed(seed, 0xD135EC);
  dim.intrinsic = cli::intrinsic_from_json(
      cfg.contains("intrinsic") ? cfg["intrinsic"] : json::object(), dim.intrinsic);
  dim.thresholds = cli::thresholds_from_json(
      cfg.contains("thresholds") ? cfg["thresholds"] : json::object(), dim.thresholds);

  fs::create_directories(out_dir);
  dim.chain_sink = [&](int k, const std::vector<sampler::Chain>& chains) {
    cli::write_loading_histograms(
        chains, (fs::path(out_dir) / ("histograms_k" + std::to_string(k) + ".csv")).string());
  };
  const auto selection = marglik::select_dimensionality(data, dim);

  json j = report::to_json(selection);
  j["tool"] = "cfms dim-select";
  j["version"] = report::kVersion;
  j["seed"] = seed;
  j["config"] = json{{"k_max", k_max},
                     {"standardize", do_standardize},
                     {"chain", report::to_json(dim.chain)},
                     {"intrinsic",
                      json{{"n_train", dim.intrinsic.n_train},
                           {"n_subsamples", dim.intrinsic.n_subsamples},
                           {"train_n_iter", dim.intrinsic.train_n_iter},
                           {"train_burn_in", dim.intrinsic.train_burn_in}}},
                     {"thresholds", report::to_json(dim.thresholds)}};
  report::write_json_file(j, (fs::path(out_dir) / "selection.json").string());

  std::cout << "k  log_marginal  admissible\n";
  for (const auto& per : selection.per_k) {
    std::printf("%-2d %13.4f  %s\n", per.k, per.estimate.log_marginal,
                per.admissible ? "yes" : "no (flagged)");
  }
  std::cout << "selected k = " << selection.selected_k << "\n";
  return 0;
}

int run_check(const std::string& pattern_path, const std::string& out_path) {
  const PatternMatrix pattern = ident::read_pattern_file(pattern_path);
  const auto report = ident::check_ucfm(pattern);
  json j = report::to_json(report);
  j["tool"] = "cfms check";
  j["version"] = report::kVersion;
  j["pattern"] = json{{"p", pattern.p()}, {"m", pattern.m()}, {"file", pattern_path}};
  if (!out_path.empty()) report::write_json_file(j, out_path);
  std::cout << j.dump(2) << "\n";
  if (!report.overall) throw model_error("pattern fails the rotational-uniqueness check");
  return 0;
}

int run_bf2(const std::string& data_path, const std::string& pattern_path,
            const std::vector<std::string>& constraint_paths, const std::string& config_path,
            const std::string& out_dir, uint64_t seed, bool raw_covariance,
            bool allow_unidentified, long prior_draws, const std::string& phi_mode_name,
            const std::string& draws_path, bool export_draws) {
  const PatternMatrix pattern = ident::read_pattern_file(pattern_path);
  const auto id_report = ident::check_ucfm(pattern);
  bool override_recorded = false;
  if (!id_report.overall) {
    if (!allow_unidentified) {
      throw model_error(
          "pattern fails the rotational-uniqueness check (use --allow-unidentified to override)");
    }
    override_recorded = true;
  }
  const auto bounds = cli::load_and_bind_constraints(constraint_paths, pattern);

  encompass::Type2Options opts;
  opts.prior_draws = prior_draws;
  opts.seed = mix_seed(seed, 0x7f2);
  if (phi_mode_name == "identity") opts.phi_mode = encompass::PhiMode::Identity;
  else if (phi_mode_name == "from_prior") opts.phi_mode = encompass::PhiMode::FromPrior;
  else throw usage_error("--phi-mode must be identity or from_prior");

  fs::create_directories(out_dir);
  encompass::Type2Report t2;
  json chain_echo;
  if (!draws_path.empty()) {
    // offline mode over an exported draw file
    const auto imported = sampler::import_draws_csv(draws_path);
    if (imported.p != pattern.p() || imported.m != pattern.m()) {
      throw model_error("draw file dimensions do not match the pattern");
    }
    t2 = encompass::type2_bayes_factors_draws(bounds, imported.loadings, pattern, opts);
    chain_echo = json{{"offline_draws", draws_path}};
  } else {
    Dataset data = read_dataset_csv(data_path);
    if (!raw_covariance) data = cfms::standardize(data);
    sampler::PriorSpec ball;
    ball.kind = sampler::PriorKind::EncompassingBall;
    json cfg = config_path.empty() ? json::object() : load_json_file(config_path);
    sampler::ChainConfig cc = cli::chain_config_from_json(
        cfg.contains("chain") ? cfg["chain"] : cfg, sampler::ChainConfig{});
    cc.seed = mix_seed(seed, hash_bytes(pattern.fingerprint() + ":ball"));
    const sampler::Chain chain = sampler::run_chain(data, pattern, ball, cc);
    if (export_draws) {
      sampler::export_chain_csv(chain, (fs::path(out_dir) / "ball_chain.csv").string());
    }
    t2 = encompass::type2_bayes_factors(bounds, chain, opts);
    chain_echo = report::to_json(cc);
  }

  json j = report::to_json(t2);
  j["tool"] = "cfms bf2";
  j["version"] = report::kVersion;
  j["seed"] = seed;
  j["chain"] = chain_echo;
  j["pattern"] = json{{"p", pattern.p()}, {"m", pattern.m()}, {"file", pattern_path}};
  j["identification_overridden"] = override_recorded;
  report::write_json_file(j, (fs::path(out_dir) / "type2.json").string());

  std::cout << "model            prior_mass  posterior_mass  log_BF_vs_u  post_prob\n";
  for (size_t s = 0; s < t2.models.size(); ++s) {
    const auto& m = t2.models[s];
    std::printf("%-16s %10.4f  %14.4f  %11.4f  %9.4f\n", m.name.c_str(), m.prior.proportion,
                m.posterior.proportion, m.log_bf_vs_unconstrained,
                t2.posterior_probabilities[s]);
  }
  std::printf("%-16s %10s  %14s  %11s  %9.4f\n", "(unconstrained)", "-", "-", "0.0000",
              t2.unconstrained_probability);
  return 0;
}

int run_pipeline_cmd(const std::string& config_path, const std::string& out_dir, uint64_t seed,
                     bool seed_given) {
  cli::PipelineConfig config = cli::load_pipeline_config(config_path);
  if (!out_dir.empty()) config.output_dir = out_dir;
  if (seed_given) config.seed = seed;
  const auto result = cli::run_pipeline(config);
  std::cout << "pipeline finished; selected k = " << result.selection->selected_k << "\n";
  if (result.type2 && !result.type2->models.empty()) {
    size_t best = 0;
    for (size_t s = 1; s < result.type2->models.size(); ++s) {
      if (result.type2->posterior_probabilities[s] > result.type2->posterior_probabilities[best]) {
        best = s;
      }
    }
    std::cout << "highest posterior model probability: " << result.type2->models[best].name << " ("
              << result.type2->posterior_probabilities[best] << ")\n";
  }
  std::cout << "reports in " << config.output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian constrained-model selection for factor analysis"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  bool seed_given = false;
  app.add_option_function<uint64_t>(
         "--seed", [&](uint64_t s) { seed = s; seed_given = true; }, "global RNG seed")
      ->expected(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset from a true-model spec");
  std::string sim_spec, sim_out;
  sim->add_option("--spec", sim_spec, "true-model spec JSON")->required();
  sim->add_option("--out", sim_out, "output CSV path")->required();

  // dim-select
  auto* dim = app.add_subcommand("dim-select", "Type I selection: choose the factor dimensionality");
  std::string dim_data, dim_config, dim_out = ".";
  int k_max = 3;
  bool dim_raw = false;
  dim->add_option("--data", dim_data, "dataset CSV")->required();
  dim->add_option("--k-max", k_max, "largest dimensionality to evaluate");
  dim->add_option("--config", dim_config, "config JSON (chain, intrinsic, thresholds)");
  dim->add_option("--out", dim_out, "output directory");
  dim->add_flag("--raw", dim_raw, "analyze the raw covariance (skip standardization)");

  // check
  auto* chk = app.add_subcommand("check", "UCFM rotational-uniqueness check for a pattern file");
  std::string chk_pattern, chk_out;
  chk->add_option("--pattern", chk_pattern, "pattern grid file")->required();
  chk->add_option("--out", chk_out, "write the report JSON here");

  // bf2
  auto* bf2 = app.add_subcommand("bf2", "Type II selection: encompassing-prior Bayes factors");
  std::string bf2_data, bf2_pattern, bf2_config, bf2_out = ".", bf2_draws, bf2_phi = "identity";
  std::vector<std::string> bf2_constraints;
  bool bf2_raw = false, bf2_allow = false, bf2_export = false;
  long bf2_prior_draws = 100000;
  bf2->add_option("--data", bf2_data, "dataset CSV");
  bf2->add_option("--pattern", bf2_pattern, "UCFM pattern grid file")->required();
  bf2->add_option("--constraints", bf2_constraints, "constraint .fcs files, one competing model each");
  bf2->add_option("--config", bf2_config, "config JSON with the encompassing chain settings");
  bf2->add_option("--out", bf2_out, "output directory");
  bf2->add_option("--draws", bf2_draws, "offline mode: exported draw CSV instead of running a chain");
  bf2->add_option("--prior-draws", bf2_prior_draws, "Monte Carlo draws for prior masses");
  bf2->add_option("--phi-mode", bf2_phi, "prior-mass factor correlations: identity or from_prior");
  bf2->add_flag("--raw", bf2_raw, "analyze the raw covariance (refused by the ball prior)");
  bf2->add_flag("--allow-unidentified", bf2_allow, "run despite a failed identification check");
  bf2->add_flag("--export-draws", bf2_export, "export the encompassing chain draws to CSV");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "four-step EFA -> UCFM -> constraints -> Type II run");
  std::string pipe_config, pipe_out;
  pipe->add_option("--config", pipe_config, "pipeline config JSON")->required();
  pipe->add_option("--out", pipe_out, "override the output directory");

  try {
    app.parse(argc, argv);
    if (sim->parsed()) return run_simulate(sim_spec, sim_out, seed, seed_given);
    if (dim->parsed()) return run_dim_select(dim_data, k_max, dim_config, dim_out, seed, !dim_raw);
    if (chk->parsed()) return run_check(chk_pattern, chk_out);
    if (bf2->parsed()) {
      if (bf2_draws.empty() && bf2_data.empty()) {
        throw usage_error("bf2 needs --data (or --draws for offline mode)");
      }
      return run_bf2(bf2_data, bf2_pattern, bf2_constraints, bf2_config, bf2_out, seed, bf2_raw,
                     bf2_allow, bf2_prior_draws, bf2_phi, bf2_draws, bf2_export);
    }
    if (pipe->parsed()) return run_pipeline_cmd(pipe_config, pipe_out, seed, seed_given);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
