#pragma once

#include <cmath>

#include "cfms/linalg.hpp"

namespace cfms {

inline double log_normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * M_PI * variance) + d * d / variance);
}

// Multivariate normal log density given the Cholesky factor of the covariance.
inline double log_mvn_pdf_chol(const Vector& x, const Vector& mean, const Eigen::LLT<Matrix>& llt) {
  const int d = static_cast<int>(x.size());
  if (d == 0) return 0.0;
  const Vector u = llt.matrixL().solve(x - mean);
  return -0.5 * (d * std::log(2.0 * M_PI) + logdet_from_llt(llt) + u.squaredNorm());
}

// Inverse-gamma with shape a, rate b: p(x) = b^a / Gamma(a) x^{-a-1} e^{-b/x}.
inline double log_invgamma_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

inline double log_multigamma(int dim, double a) {
  double s = 0.25 * dim * (dim - 1) * std::log(M_PI);
  for (int j = 0; j < dim; ++j) s += std::lgamma(a - 0.5 * j);
  return s;
}

// Inverse-Wishart(df, scale) log density at x.
inline double log_invwishart_pdf(const Matrix& x, double df, const Matrix& scale) {
  const int d = static_cast<int>(x.rows());
  const auto llt_scale = chol_spd(scale, "invwishart scale");
  const auto llt_x = chol_spd(x, "invwishart argument");
  const double tr = llt_x.solve(scale).trace();
  return 0.5 * df * logdet_from_llt(llt_scale) - 0.5 * df * d * std::log(2.0) -
         log_multigamma(d, 0.5 * df) - 0.5 * (df + d + 1.0) * logdet_from_llt(llt_x) - 0.5 * tr;
}

}  // namespace cfms
