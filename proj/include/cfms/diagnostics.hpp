#pragma once

#include <string>
#include <vector>

#include "cfms/sampler.hpp"

namespace cfms::sampler {

struct Diagnostics {
  std::vector<std::string> parameter_names;
  std::vector<double> split_rhat;  // NaN when the within variance is zero
  std::vector<double> ess;         // NaN when the series is degenerate
  std::vector<bool> degenerate;    // zero-variance series
  Matrix sign_switch_rate;         // p x m, zero at fixed cells
  Vector near_zero_mass;           // per column, pooled over chains
  double max_rhat = 0.0;           // over defined entries
  double min_ess = 0.0;
  bool any_degenerate = false;
};

// R-hat and ESS per free loading and unique variance (plus factor
// correlations when they are sampled), sign-switch rates per loading, and the
// per-column posterior mass of near-zero columns max_i |L[i,j]| < threshold.
Diagnostics compute_diagnostics(const std::vector<Chain>& chains, double near_zero_threshold = 0.1);

// Geyer initial-positive-sequence effective sample size of one series.
double ess_of_series(const std::vector<double>& x);

// Split potential scale reduction over one or more chains (two segments per
// chain). NaN when the within-segment variance vanishes.
double split_rhat(const std::vector<std::vector<double>>& chain_series);

// Column relabeling: aligned column j is sign[j] * original column perm[j].
struct SignedPerm {
  std::vector<int> perm;
  std::vector<double> sign;
};

Matrix apply_signed_perm(const Matrix& loadings, const SignedPerm& q);
Matrix apply_signed_perm_to_phi(const Matrix& phi, const SignedPerm& q);

// Signed permutation minimizing ||apply(loadings) - reference||_F over the
// full 2^m m! group (m <= 7 expected).
SignedPerm best_alignment(const Matrix& loadings, const Matrix& reference);

// Aligns every chain's draws to chain 0 by the signed permutation matching
// their loading means; used before pooling draws across chains.
std::vector<Chain> align_chains_to_first(const std::vector<Chain>& chains);

}  // namespace cfms::sampler
