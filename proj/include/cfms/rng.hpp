#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Core>

// Reproducibility contract: every stochastic result in this project is a pure
// function of a 64-bit seed. The engine is std::mt19937_64 (bit-stable across
// implementations); all variate transforms are hand-rolled here because the
// <random> distribution objects are implementation-defined.

namespace cfms {

uint64_t splitmix64(uint64_t& state);

// Deterministic 64-bit mixing for derived streams (chain index, subsample
// index, ...) and content-addressed seeding (hash of a pattern or constraint
// file, so identical inputs reproduce identical streams).
uint64_t mix_seed(uint64_t seed, uint64_t salt);
uint64_t hash_bytes(std::string_view bytes, uint64_t seed = 0x9e3779b97f4a7c15ull);

class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64() { return engine_(); }

  // Uniform on (0,1); never returns 0 or 1.
  double uniform() {
    const uint64_t u = engine_();
    return (static_cast<double>(u >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // One draw below n, unbiased via rejection.
  uint64_t uniform_index(uint64_t n);

  double normal();
  double gamma(double shape, double rate);
  double inv_gamma(double shape, double rate) { return rate_checked(shape, rate); }
  double chi_squared(double df) { return gamma(0.5 * df, 0.5); }

  Eigen::VectorXd normal_vector(int n);
  // Uniform on the closed unit ball in R^dim.
  Eigen::VectorXd unit_ball(int dim);

  // Wishart(df, scale) via the Bartlett decomposition; df > dim - 1.
  Eigen::MatrixXd wishart(double df, const Eigen::MatrixXd& scale);
  // Inverse-Wishart(df, scale): X^{-1} ~ Wishart(df, scale^{-1}).
  Eigen::MatrixXd inv_wishart(double df, const Eigen::MatrixXd& scale);

  // k distinct indices from 0..n-1, ascending (partial Fisher-Yates, sorted).
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  double rate_checked(double shape, double rate);
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cfms
