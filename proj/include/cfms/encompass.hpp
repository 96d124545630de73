#pragma once

#include <string>
#include <vector>

#include "cfms/constraints.hpp"
#include "cfms/sampler.hpp"

namespace cfms::encompass {

struct MassEstimate {
  double proportion = 0.0;
  long n_draws = 0;
  double standard_error = 0.0;
  double ess = 0.0;  // effective draws behind the SE (posterior masses only)
  bool below_resolution = false;
  std::vector<std::string> warnings;
};

enum class PhiMode { Identity, FromPrior };

// Monte Carlo prior mass under the encompassing uniform-ball prior: loading
// rows uniform on {lambda : lambda' Phi lambda <= 1} with fixed cells held
// and anchors restricted to the positive half (matching the sampler).
MassEstimate prior_mass(const constraints::BoundSystem& bound, const PatternMatrix& pattern,
                        PhiMode phi_mode, long n_draws, uint64_t seed);

// Fraction of retained chain draws satisfying the system; the SE uses the
// effective sample size of the satisfaction indicator.
MassEstimate posterior_mass(const constraints::BoundSystem& bound, const sampler::Chain& chain);

// Offline variant over imported loading draws (no provenance to check).
MassEstimate posterior_mass_draws(const constraints::BoundSystem& bound,
                                  const std::vector<Matrix>& loadings);

struct ModelRow {
  std::string name;
  MassEstimate prior;
  MassEstimate posterior;
  double log_bf_vs_unconstrained = 0.0;
  double se_log_bf = 0.0;
  bool excluded = false;  // zero prior mass
  std::string flag;
};

struct Type2Report {
  std::vector<ModelRow> models;
  Matrix pairwise_log_bf;                       // models x models
  std::vector<double> posterior_probabilities;  // models, then the unconstrained row
  double unconstrained_probability = 0.0;
  long prior_draws = 0;
  uint64_t seed = 0;
  std::string phi_mode;
  std::vector<std::string> warnings;
};

struct Type2Options {
  long prior_draws = 100000;
  PhiMode phi_mode = PhiMode::Identity;
  uint64_t seed = 0;
};

// Bayes factors of each bound system against the unconstrained base model
// (posterior mass over prior mass), pairwise ratios, and posterior model
// probabilities under equal prior odds. All systems are evaluated against one
// shared prior draw stream, so nested systems are exactly monotone.
Type2Report type2_bayes_factors(const std::vector<constraints::BoundSystem>& bounds,
                                const sampler::Chain& chain, const Type2Options& options);

// Offline variant over an imported draw file.
Type2Report type2_bayes_factors_draws(const std::vector<constraints::BoundSystem>& bounds,
                                      const std::vector<Matrix>& loadings,
                                      const PatternMatrix& pattern, const Type2Options& options);

}  // namespace cfms::encompass
