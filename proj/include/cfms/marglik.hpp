#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cfms/diagnostics.hpp"
#include "cfms/sampler.hpp"

namespace cfms::marglik {

enum class Symmetrization { ExactSum, AdditiveApprox };

struct OrdinateBreakdown {
  double loading = 0.0;  // log posterior ordinate of the loading block
  double psi = 0.0;
  double phi = 0.0;  // oblique runs only
  // single-mode loading ordinate (identity image only, same normalization);
  // ExactSum is bounded below by it, strictly, on every run
  double loading_single_mode = 0.0;
};

struct MarglikEstimate {
  double log_marginal = 0.0;
  double mc_standard_error = 0.0;
  OrdinateBreakdown ordinates;
  FactorModel theta_star;
  Symmetrization symmetrization = Symmetrization::ExactSum;
  int symmetry_group_size = 1;
  double log_lik_at_star = 0.0;
  double log_prior_at_star = 0.0;
  std::vector<std::string> warnings;
};

struct CandidateOptions {
  // The candidate identity needs a proper prior unless the caller supplies a
  // training-sample correction (the intrinsic route does).
  bool allow_improper = false;
  std::optional<Symmetrization> force_symmetrization;  // default: by m
};

// Chib candidate estimator on the collapsed parameterization (scores
// integrated out of the likelihood). The loading-block ordinate is averaged
// over main-run (scores, psi, phi) draws and symmetrized over the
// pattern-preserving column sign/permutation group; psi and phi ordinates
// come from reduced runs.
MarglikEstimate candidate_log_marginal(const Dataset& data, const PatternMatrix& pattern,
                                       const sampler::PriorSpec& prior,
                                       const sampler::ChainConfig& config,
                                       const CandidateOptions& options = {});

// Column sign/permutation images that map the pattern onto itself (anchor
// designations are relabeling devices and are ignored here).
std::vector<sampler::SignedPerm> pattern_preserving_group(const PatternMatrix& pattern);

struct RegularityThresholds {
  double singular_value_ratio = 0.1;
  double near_zero_loading = 0.1;
  double near_zero_mass = 0.05;
  double max_rhat = 1.2;
};

struct RegularityReport {
  double singular_value_ratio = 1.0;  // sigma_min / sigma_max of the aligned posterior-mean loadings
  Vector near_zero_mass;              // per column
  double max_pooled_rhat = 0.0;       // after sign/permutation alignment
  bool sv_ratio_trip = false;
  bool near_zero_trip = false;
  bool rhat_trip = false;
  bool multimodality_flag = false;
  RegularityThresholds thresholds;
};

RegularityReport assess_regularity(const std::vector<sampler::Chain>& chains,
                                   const RegularityThresholds& thresholds = {});

struct IntrinsicOptions {
  int n_train = -1;       // default max(m1, m2) + 3
  int n_subsamples = 30;  // L
  int train_n_iter = 1200;
  int train_burn_in = 400;
};

struct IntrinsicResult {
  double log_bf_21 = 0.0;  // second model over first
  double mc_standard_error = 0.0;
  MarglikEstimate full_1, full_2;
  int n_subsamples_used = 0;
  int n_nonfinite = 0;
};

// Arithmetic intrinsic Bayes factor under the improper default prior:
// log B21 = log B21^N(y) + log[(1/L) sum_l B12^N(y_l)], every marginal from
// the candidate estimator with content-addressed seeds so the unknown prior
// constants cancel within each model and a model compared against itself
// gives exactly zero.
IntrinsicResult intrinsic_type1_bf(const Dataset& data, const PatternMatrix& pattern1,
                                   const PatternMatrix& pattern2,
                                   const sampler::ChainConfig& config,
                                   const IntrinsicOptions& options = {});

struct DimSelectConfig {
  int k_max = 3;
  sampler::ChainConfig chain;  // n_chains >= 2 for the regularity assessment
  IntrinsicOptions intrinsic;
  RegularityThresholds thresholds;
  // Observer invoked with each k's finished chains (histogram exports etc).
  std::function<void(int, const std::vector<sampler::Chain>&)> chain_sink;
};

struct PerDimension {
  int k = 0;
  MarglikEstimate estimate;        // log_marginal holds the intrinsic-corrected score
  double full_data_log_marginal = 0.0;
  double full_data_se = 0.0;
  double training_correction = 0.0;
  RegularityReport regularity;
  bool admissible = true;
  std::vector<double> training_log_marginals;  // NaN where non-finite
};

struct ConsecutiveBF {
  int k_from = 0;  // smaller model
  int k_to = 0;
  double log_bf = 0.0;  // larger over smaller
  double se = 0.0;
};

struct DimensionalitySelection {
  std::vector<PerDimension> per_k;
  std::vector<ConsecutiveBF> bf_table;
  int selected_k = 0;
  std::vector<std::string> warnings;
};

// Type I selection loop: EFA echelon-anchor patterns with Phi = I for
// k = 0..k_max under the improper default prior, intrinsic-corrected scores
// against the k = 0 reference, regularity-flagged k never selected.
DimensionalitySelection select_dimensionality(const Dataset& data, const DimSelectConfig& config);

Dataset subset_rows(const Dataset& data, const std::vector<int>& rows);

}  // namespace cfms::marglik
