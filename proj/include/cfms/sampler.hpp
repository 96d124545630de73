#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfms/core.hpp"
#include "cfms/rng.hpp"

namespace cfms::sampler {

enum class PriorKind { ImproperDefault, ConjugateVague, EncompassingBall };
enum class PhiPrior { FixedIdentity, CorrelationPrior };

// Unique-variance prior used under the encompassing ball regime; the ball
// prior itself is flat on each loading row's communality ball. Recorded in
// every report for auditability.
constexpr double kBallIgShape = 1.0;
constexpr double kBallIgRate = 0.5;

struct PriorSpec {
  PriorKind kind = PriorKind::ImproperDefault;
  // ConjugateVague hyperparameters: lambda_cell ~ N(0, loading_prior_variance),
  // psi_i ~ InvGamma(ig_shape, ig_rate).
  double loading_prior_variance = 1.0;
  double ig_shape = 1.0;
  double ig_rate = 0.5;
  PhiPrior phi_prior = PhiPrior::FixedIdentity;

  void validate() const;
  std::string fingerprint() const;
  // Inverse-gamma shape/rate increments for the psi full conditional.
  double psi_prior_shape() const;
  double psi_prior_rate() const;
};

struct ChainConfig {
  int n_iter = 3000;
  int burn_in = 1000;
  int thin = 1;
  uint64_t seed = 0;
  int n_chains = 2;
  bool dispersed_starts = true;
  bool retain_scores = false;

  int retained_count() const { return (n_iter - burn_in) / thin; }
  void validate() const;
};

struct Draw {
  Matrix loadings;
  Vector psi;
  Matrix phi;  // correlation matrix; factor covariance in expanded mode
  double log_kernel = 0.0;
};

struct Chain {
  std::vector<Draw> draws;
  std::vector<Matrix> score_draws;  // retained only on request
  PriorSpec prior;
  PatternMatrix pattern;
  ChainConfig config;
  int chain_index = 0;

  int p() const { return pattern.p(); }
  int m() const { return pattern.m(); }
  Matrix mean_loadings() const;
};

// Full conditional of one factor-score vector: covariance
// V = (Phi^{-1} + Lambda^T Psi^{-1} Lambda)^{-1}, mean V Lambda^T Psi^{-1} y.
struct ScoreConditional {
  Vector mean;
  Matrix covariance;
};
ScoreConditional factor_score_conditional(const FactorModel& model, const Vector& observation);

// Normal conditional for the free cells of one loading row given scores.
// Fixed cells contribute offsets to the response; the improper default prior
// has zero prior precision, the conjugate prior adds a diagonal.
struct RowConditional {
  Vector mean;
  Matrix covariance;
};
RowConditional loading_row_conditional(int row_index, const PatternMatrix& pattern,
                                       const Matrix& factor_scores, double psi_i,
                                       const Vector& data_column, const PriorSpec& prior);

struct SamplerOptions {
  // Oblique runs for marginal-likelihood work keep the unrescaled factor
  // covariance (inverse-Wishart conditional) so every ordinate block stays in
  // closed form; the default rescales to the correlation metric by parameter
  // expansion each scan.
  bool expanded_covariance = false;
  // Clamp unique variances for reduced runs with psi fixed at a point.
  std::optional<Vector> fixed_psi;
};

Chain run_chain(const Dataset& data, const PatternMatrix& pattern, const PriorSpec& prior,
                const ChainConfig& config, int chain_index = 0, const SamplerOptions& options = {});

// n_chains chains with per-chain derived seeds; chains are independent and
// the result does not depend on scheduling.
std::vector<Chain> run_chains(const Dataset& data, const PatternMatrix& pattern,
                              const PriorSpec& prior, const ChainConfig& config,
                              const SamplerOptions& options = {});

// Draw export: one row per retained draw, columns L[i,j], psi[i], phi[i,j]
// (upper off-diagonal), logkernel. Also the offline input format for the
// encompassing Bayes factor tools.
void export_chain_csv(const Chain& chain, const std::string& path);

struct ImportedDraws {
  int p = 0;
  int m = 0;
  std::vector<Matrix> loadings;
};
ImportedDraws import_draws_csv(const std::string& path);

}  // namespace cfms::sampler
