#include "cfms/rng.hpp"

#include <algorithm>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace cfms {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t s = seed ^ (0x6a09e667f3bcc909ull + salt * 0x9e3779b97f4a7c15ull);
  splitmix64(s);
  return splitmix64(s);
}

uint64_t hash_bytes(std::string_view bytes, uint64_t seed) {
  // FNV-1a over the bytes, then one splitmix round to spread low entropy.
  uint64_t h = 0xcbf29ce484222325ull ^ seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix64(h);
}

Rng::Rng(uint64_t seed) {
  // Expand the seed through splitmix64 so nearby seeds give unrelated streams.
  uint64_t s = seed;
  std::seed_seq seq{static_cast<uint32_t>(splitmix64(s)), static_cast<uint32_t>(splitmix64(s)),
                    static_cast<uint32_t>(splitmix64(s)), static_cast<uint32_t>(splitmix64(s))};
  engine_.seed(seq);
}

uint64_t Rng::uniform_index(uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t u;
  do {
    u = engine_();
  } while (u >= limit);
  return u % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  // Box-Muller; no rejection, so the draw count per call is fixed.
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_normal_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::gamma(double shape, double rate) {
  if (shape <= 0.0 || rate <= 0.0) throw std::invalid_argument("gamma: shape and rate must be positive");
  if (shape < 1.0) {
    // Boost trick: X ~ Gamma(a+1), X * U^{1/a} ~ Gamma(a).
    const double u = uniform();
    return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

double Rng::rate_checked(double shape, double rate) {
  // Inverse-gamma via reciprocal of a gamma draw with the roles of the
  // parameters preserved: X ~ IG(a, b)  <=>  1/X ~ Gamma(a, 1/b) ... in rate
  // form: G ~ Gamma(a, rate=1) and b / G ~ IG(a, b).
  const double g = gamma(shape, 1.0);
  return rate / g;
}

Eigen::VectorXd Rng::normal_vector(int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = normal();
  return v;
}

Eigen::VectorXd Rng::unit_ball(int dim) {
  if (dim == 0) return Eigen::VectorXd(0);
  Eigen::VectorXd z = normal_vector(dim);
  const double norm = z.norm();
  const double r = std::pow(uniform(), 1.0 / dim);
  if (norm == 0.0) return Eigen::VectorXd::Zero(dim);
  return z * (r / norm);
}

Eigen::MatrixXd Rng::wishart(double df, const Eigen::MatrixXd& scale) {
  const int d = static_cast<int>(scale.rows());
  if (df <= d - 1) throw std::invalid_argument("wishart: df must exceed dim - 1");
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) throw std::runtime_error("wishart: scale not positive definite");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    A(i, i) = std::sqrt(chi_squared(df - i));
    for (int j = 0; j < i; ++j) A(i, j) = normal();
  }
  Eigen::MatrixXd LA = llt.matrixL() * A;
  return LA * LA.transpose();
}

Eigen::MatrixXd Rng::inv_wishart(double df, const Eigen::MatrixXd& scale) {
  Eigen::MatrixXd W = wishart(df, scale.llt().solve(Eigen::MatrixXd::Identity(scale.rows(), scale.cols())));
  return W.llt().solve(Eigen::MatrixXd::Identity(W.rows(), W.cols()));
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(uniform_index(static_cast<uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> out(pool.begin(), pool.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace cfms
