#include "cfms/reportjson.hpp"

#include <cmath>
#include <fstream>

#include "cfms/errors.hpp"

namespace cfms::report {

using nlohmann::json;

namespace {

// JSON has no NaN/inf literals; reports carry them as strings.
json num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

json vec(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

json mat(const Matrix& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(num(m(i, j)));
    a.push_back(row);
  }
  return a;
}

json condition(const ident::ConditionResult& c) {
  json j;
  j["pass"] = c.pass;
  j["violating_columns"] = c.violating_columns;
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

}  // namespace

json to_json(const sampler::ChainConfig& config) {
  return json{{"n_iter", config.n_iter},       {"burn_in", config.burn_in},
              {"thin", config.thin},           {"seed", config.seed},
              {"n_chains", config.n_chains},   {"dispersed_starts", config.dispersed_starts},
              {"retained", config.retained_count()}};
}

json to_json(const sampler::PriorSpec& prior) {
  json j;
  switch (prior.kind) {
    case sampler::PriorKind::ImproperDefault:
      j["kind"] = "improper_default";
      break;
    case sampler::PriorKind::ConjugateVague:
      j["kind"] = "conjugate_vague";
      j["loading_prior_variance"] = prior.loading_prior_variance;
      j["ig_shape"] = prior.ig_shape;
      j["ig_rate"] = prior.ig_rate;
      break;
    case sampler::PriorKind::EncompassingBall:
      j["kind"] = "encompassing_ball";
      j["psi_prior"] = "inverse-gamma(1, 0.5)";
      break;
  }
  j["phi_prior"] =
      prior.phi_prior == sampler::PhiPrior::FixedIdentity ? "fixed_identity" : "correlation";
  return j;
}

json to_json(const marglik::RegularityThresholds& t) {
  return json{{"singular_value_ratio", t.singular_value_ratio},
              {"near_zero_loading", t.near_zero_loading},
              {"near_zero_mass", t.near_zero_mass},
              {"max_rhat", t.max_rhat}};
}

json to_json(const marglik::RegularityReport& r) {
  json j;
  j["singular_value_ratio"] = num(r.singular_value_ratio);
  j["near_zero_mass"] = vec(r.near_zero_mass);
  j["max_pooled_rhat"] = num(r.max_pooled_rhat);
  j["sv_ratio_trip"] = r.sv_ratio_trip;
  j["near_zero_trip"] = r.near_zero_trip;
  j["rhat_trip"] = r.rhat_trip;
  j["multimodality"] = r.multimodality_flag;
  j["thresholds"] = to_json(r.thresholds);
  return j;
}

json to_json(const marglik::MarglikEstimate& e) {
  json j;
  j["log_marginal"] = num(e.log_marginal);
  j["mc_se"] = num(e.mc_standard_error);
  j["ordinates"] = json{{"loading", num(e.ordinates.loading)},
                        {"loading_single_mode", num(e.ordinates.loading_single_mode)},
                        {"psi", num(e.ordinates.psi)},
                        {"phi", num(e.ordinates.phi)}};
  j["symmetrization"] =
      e.symmetrization == marglik::Symmetrization::ExactSum ? "exact_sum" : "additive_approx";
  j["symmetry_group_size"] = e.symmetry_group_size;
  j["log_lik_at_star"] = num(e.log_lik_at_star);
  j["log_prior_at_star"] = num(e.log_prior_at_star);
  if (!e.warnings.empty()) j["warnings"] = e.warnings;
  return j;
}

json to_json(const marglik::DimensionalitySelection& s) {
  json per_k = json::array();
  for (const auto& per : s.per_k) {
    json j;
    j["k"] = per.k;
    j["log_marginal"] = num(per.estimate.log_marginal);
    j["mc_se"] = num(per.estimate.mc_standard_error);
    j["full_data_log_marginal"] = num(per.full_data_log_marginal);
    j["full_data_se"] = num(per.full_data_se);
    j["training_correction"] = num(per.training_correction);
    j["estimate"] = to_json(per.estimate);
    j["regularity"] = to_json(per.regularity);
    j["admissible"] = per.admissible;
    json t = json::array();
    for (double v : per.training_log_marginals) t.push_back(num(v));
    j["training_log_marginals"] = t;
    per_k.push_back(j);
  }
  json table = json::array();
  for (const auto& bf : s.bf_table) {
    table.push_back(json{{"k_from", bf.k_from}, {"k_to", bf.k_to}, {"log_bf", num(bf.log_bf)},
                         {"se", num(bf.se)}});
  }
  json j;
  j["per_k"] = per_k;
  j["bf_consecutive"] = table;
  j["selected_k"] = s.selected_k;
  if (!s.warnings.empty()) j["warnings"] = s.warnings;
  return j;
}

json to_json(const ident::IdentificationReport& r) {
  json j;
  j["conditions"] = json{{"C1_scaling", condition(r.c1_scaling)},
                         {"C2_zero_count", condition(r.c2_zero_count)},
                         {"C3_rank", condition(r.c3_rank)},
                         {"C4_anchors", condition(r.c4_anchors)},
                         {"distinct_row_sets", condition(r.distinct_row_sets)}};
  j["ledermann"] = json{{"free_parameters", r.free_parameter_count},
                        {"covariance_dof", r.covariance_dof},
                        {"warning", r.ledermann_warning}};
  j["overall"] = r.overall;
  return j;
}

json to_json(const encompass::Type2Report& r) {
  json models = json::array();
  for (const auto& m : r.models) {
    json j;
    j["name"] = m.name;
    // prior mass is the model's complexity in the encompassing framework
    j["prior_mass"] = num(m.prior.proportion);
    j["prior_se"] = num(m.prior.standard_error);
    j["posterior_mass"] = num(m.posterior.proportion);
    j["posterior_se"] = num(m.posterior.standard_error);
    j["posterior_ess"] = num(m.posterior.ess);
    j["log_bf_vs_unconstrained"] = num(m.log_bf_vs_unconstrained);
    j["se_log_bf"] = num(m.se_log_bf);
    j["excluded"] = m.excluded;
    if (!m.flag.empty()) j["flag"] = m.flag;
    json w = json::array();
    for (const auto& s : m.prior.warnings) w.push_back(s);
    for (const auto& s : m.posterior.warnings) w.push_back(s);
    if (!w.empty()) j["warnings"] = w;
    models.push_back(j);
  }
  json j;
  j["models"] = models;
  j["pairwise_log_bf"] = mat(r.pairwise_log_bf);
  json probs = json::array();
  for (double v : r.posterior_probabilities) probs.push_back(num(v));
  j["posterior_probabilities"] = probs;
  j["unconstrained_probability"] = num(r.unconstrained_probability);
  j["prior_draws"] = r.prior_draws;
  j["seed"] = r.seed;
  j["phi_mode"] = r.phi_mode;
  j["psi_prior"] = "inverse-gamma(1, 0.5)";
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw usage_error("cannot write report: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw usage_error("write failed: " + path);
}

}  // namespace cfms::report
